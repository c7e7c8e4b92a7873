//! Scalar expression language used for constraints, vector fields, and
//! function pieces.
//!
//! Grammar (EBNF, also documented in `docs/expressions.md`):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = factor { ("*" | "/") factor } ;
//! factor  = "-" factor | power ;
//! power   = atom [ "^" integer ] ;
//! atom    = number | ident | ident "(" expr [ "," expr ] ")" | "(" expr ")" ;
//! integer = [ "-" ] digit { digit } ;
//! number  = digit { digit } [ "." { digit } ] [ ("e"|"E") [ "-"|"+" ] digit { digit } ] ;
//! ```
//!
//! Precedence is `^` over unary `-` over `*` `/` over `+` `-`, binary
//! operators associate left. Variables are `x1..xn`; `sin cos exp sqrt abs`
//! take one argument, `min max` take two. Any other identifier must be bound
//! by the constants table passed to [`parse_with_constants`]. Exponents are
//! integers, so differentiation stays total away from abs/min/max kinks.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Hard cap on the scenario dimension (state plus the epigraph coordinate).
pub const MAX_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable x{index} exceeds dimension {dim} (byte {offset})")]
    VariableOutOfRange { index: usize, dim: usize, offset: usize },
    #[error("dimension {dim} exceeds the supported maximum {MAX_DIM}")]
    DimensionTooLarge { dim: usize },
    #[error("point has {got} coordinates, expression expects {expected}")]
    PointDimension { got: usize, expected: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("nondifferentiable node active at the evaluation point ({0})")]
    Kink(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based variable index.
    Var(usize),
    Neg(Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
    Sqrt(Box<Node>),
    Abs(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Min(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
}

/// A parsed scalar expression over `x1..xn`. Immutable after parse; shared
/// freely across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    node: Node,
    dim: usize,
}

pub fn parse(source: &str, dim: usize) -> Result<Expression, ExprError> {
    parse_with_constants(source, dim, &BTreeMap::new())
}

pub fn parse_with_constants(
    source: &str,
    dim: usize,
    constants: &BTreeMap<String, f64>,
) -> Result<Expression, ExprError> {
    if dim == 0 || dim > MAX_DIM {
        return Err(ExprError::DimensionTooLarge { dim });
    }
    let mut parser = Parser::new(source, dim, constants);
    let node = parser.parse_expr()?;
    parser.expect_end()?;
    Ok(Expression { node, dim })
}

impl Expression {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    /// Constant expression of a given dimension.
    pub fn constant(value: f64, dim: usize) -> Expression {
        Expression { node: Node::Const(value), dim }
    }

    /// Single coordinate `x(index+1)`.
    pub fn coordinate(index: usize, dim: usize) -> Expression {
        assert!(index < dim);
        Expression { node: Node::Var(index), dim }
    }

    /// Reinterprets the expression in a larger ambient dimension; variable
    /// indices are unchanged. Used to lift sets and pieces into the epigraph
    /// space.
    pub fn lift(&self, new_dim: usize) -> Expression {
        assert!(new_dim >= self.dim && new_dim <= MAX_DIM);
        Expression { node: self.node.clone(), dim: new_dim }
    }

    /// `self - x(new_dim)` in dimension `new_dim`: the epigraph slack of a
    /// function piece against the added scalar coordinate.
    pub fn minus_coordinate(&self, coord: usize, new_dim: usize) -> Expression {
        assert!(coord < new_dim);
        Expression {
            node: Node::Sub(Box::new(self.node.clone()), Box::new(Node::Var(coord))),
            dim: new_dim,
        }
    }

    /// `scale * self`, used by the positive-scaling property suites.
    pub fn scaled(&self, scale: f64) -> Expression {
        Expression {
            node: Node::Mul(Box::new(Node::Const(scale)), Box::new(self.node.clone())),
            dim: self.dim,
        }
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, ExprError> {
        if point.len() != self.dim {
            return Err(ExprError::PointDimension { got: point.len(), expected: self.dim });
        }
        eval_node(&self.node, point)
    }

    /// Exact gradient via forward-mode dual numbers.
    ///
    /// Fails with [`ExprError::Kink`] when an abs/min/max switching argument
    /// is within `tau_kink` of its kink.
    pub fn gradient(&self, point: &[f64], tau_kink: f64) -> Result<Vec<f64>, ExprError> {
        if point.len() != self.dim {
            return Err(ExprError::PointDimension { got: point.len(), expected: self.dim });
        }
        let dual = eval_dual(&self.node, point, self.dim, tau_kink)?;
        Ok(dual.d[..self.dim].to_vec())
    }

    /// Value and gradient in one pass.
    pub fn value_and_gradient(&self, point: &[f64], tau_kink: f64) -> Result<(f64, Vec<f64>), ExprError> {
        if point.len() != self.dim {
            return Err(ExprError::PointDimension { got: point.len(), expected: self.dim });
        }
        let dual = eval_dual(&self.node, point, self.dim, tau_kink)?;
        Ok((dual.v, dual.d[..self.dim].to_vec()))
    }

    /// Affine decomposition `<coeffs, x> + constant` when the expression is
    /// (structurally) affine; None otherwise.
    pub fn as_affine(&self) -> Option<(Vec<f64>, f64)> {
        affine_node(&self.node, self.dim).map(|a| (a.coef, a.cst))
    }

    /// All smooth branches obtained by resolving every abs/min/max node whose
    /// switching argument is active (within `tau_kink`) at `point` both ways.
    /// Inactive nonsmooth nodes are fixed to the branch they take at `point`.
    pub fn smooth_branches(&self, point: &[f64], tau_kink: f64) -> Result<Vec<Expression>, ExprError> {
        if point.len() != self.dim {
            return Err(ExprError::PointDimension { got: point.len(), expected: self.dim });
        }
        let nodes = split_node(&self.node, point, tau_kink)?;
        Ok(nodes
            .into_iter()
            .map(|node| Expression { node, dim: self.dim })
            .collect())
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.node, 0)
    }
}

// precedence levels: 0 add/sub, 1 mul/div, 2 unary neg, 3 pow, 4 atom
fn precedence(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 0,
        Node::Mul(..) | Node::Div(..) => 1,
        Node::Neg(..) => 2,
        Node::Pow(..) => 3,
        _ => 4,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, parent: u8) -> fmt::Result {
    let prec = precedence(node);
    let parens = prec < parent;
    if parens {
        write!(f, "(")?;
    }
    match node {
        Node::Const(c) => write!(f, "{c}")?,
        Node::Var(i) => write!(f, "x{}", i + 1)?,
        Node::Neg(a) => {
            write!(f, "-")?;
            write_node(f, a, 2)?;
        }
        Node::Sin(a) => write_call(f, "sin", a)?,
        Node::Cos(a) => write_call(f, "cos", a)?,
        Node::Exp(a) => write_call(f, "exp", a)?,
        Node::Sqrt(a) => write_call(f, "sqrt", a)?,
        Node::Abs(a) => write_call(f, "abs", a)?,
        Node::Add(a, b) => {
            write_node(f, a, 0)?;
            write!(f, " + ")?;
            write_node(f, b, 1)?;
        }
        Node::Sub(a, b) => {
            write_node(f, a, 0)?;
            write!(f, " - ")?;
            write_node(f, b, 1)?;
        }
        Node::Mul(a, b) => {
            write_node(f, a, 1)?;
            write!(f, "*")?;
            write_node(f, b, 2)?;
        }
        Node::Div(a, b) => {
            write_node(f, a, 1)?;
            write!(f, "/")?;
            write_node(f, b, 2)?;
        }
        Node::Pow(a, k) => {
            write_node(f, a, 4)?;
            write!(f, "^{k}")?;
        }
        Node::Min(a, b) => write_call2(f, "min", a, b)?,
        Node::Max(a, b) => write_call2(f, "max", a, b)?,
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

fn write_call(f: &mut fmt::Formatter<'_>, name: &str, a: &Node) -> fmt::Result {
    write!(f, "{name}(")?;
    write_node(f, a, 0)?;
    write!(f, ")")
}

fn write_call2(f: &mut fmt::Formatter<'_>, name: &str, a: &Node, b: &Node) -> fmt::Result {
    write!(f, "{name}(")?;
    write_node(f, a, 0)?;
    write!(f, ", ")?;
    write_node(f, b, 0)?;
    write!(f, ")")
}

fn eval_node(node: &Node, x: &[f64]) -> Result<f64, ExprError> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(i) => x[*i],
        Node::Neg(a) => -eval_node(a, x)?,
        Node::Sin(a) => eval_node(a, x)?.sin(),
        Node::Cos(a) => eval_node(a, x)?.cos(),
        Node::Exp(a) => eval_node(a, x)?.exp(),
        Node::Sqrt(a) => {
            let v = eval_node(a, x)?;
            if v < 0.0 {
                return Err(ExprError::Domain(format!("sqrt of negative value {v}")));
            }
            v.sqrt()
        }
        Node::Abs(a) => eval_node(a, x)?.abs(),
        Node::Add(a, b) => eval_node(a, x)? + eval_node(b, x)?,
        Node::Sub(a, b) => eval_node(a, x)? - eval_node(b, x)?,
        Node::Mul(a, b) => eval_node(a, x)? * eval_node(b, x)?,
        Node::Div(a, b) => {
            let den = eval_node(b, x)?;
            if den == 0.0 {
                return Err(ExprError::Domain("division by zero".into()));
            }
            eval_node(a, x)? / den
        }
        Node::Pow(a, k) => {
            let base = eval_node(a, x)?;
            if *k < 0 && base == 0.0 {
                return Err(ExprError::Domain("zero raised to a negative power".into()));
            }
            base.powi(*k)
        }
        Node::Min(a, b) => eval_node(a, x)?.min(eval_node(b, x)?),
        Node::Max(a, b) => eval_node(a, x)?.max(eval_node(b, x)?),
    })
}

#[derive(Clone, Copy)]
struct Dual {
    v: f64,
    d: [f64; MAX_DIM],
}

impl Dual {
    fn constant(v: f64) -> Dual {
        Dual { v, d: [0.0; MAX_DIM] }
    }
}

fn eval_dual(node: &Node, x: &[f64], dim: usize, tau_kink: f64) -> Result<Dual, ExprError> {
    Ok(match node {
        Node::Const(c) => Dual::constant(*c),
        Node::Var(i) => {
            let mut d = Dual::constant(x[*i]);
            d.d[*i] = 1.0;
            d
        }
        Node::Neg(a) => {
            let mut u = eval_dual(a, x, dim, tau_kink)?;
            u.v = -u.v;
            for k in 0..dim {
                u.d[k] = -u.d[k];
            }
            u
        }
        Node::Sin(a) => chain(eval_dual(a, x, dim, tau_kink)?, dim, |v| (v.sin(), v.cos())),
        Node::Cos(a) => chain(eval_dual(a, x, dim, tau_kink)?, dim, |v| (v.cos(), -v.sin())),
        Node::Exp(a) => chain(eval_dual(a, x, dim, tau_kink)?, dim, |v| {
            let e = v.exp();
            (e, e)
        }),
        Node::Sqrt(a) => {
            let u = eval_dual(a, x, dim, tau_kink)?;
            if u.v < 0.0 {
                return Err(ExprError::Domain(format!("sqrt of negative value {}", u.v)));
            }
            if u.v == 0.0 {
                return Err(ExprError::Domain("sqrt derivative at zero".into()));
            }
            let s = u.v.sqrt();
            chain(u, dim, move |_| (s, 0.5 / s))
        }
        Node::Abs(a) => {
            let u = eval_dual(a, x, dim, tau_kink)?;
            if u.v.abs() <= tau_kink {
                return Err(ExprError::Kink("abs at zero".into()));
            }
            let sign = if u.v > 0.0 { 1.0 } else { -1.0 };
            chain(u, dim, move |v| (v.abs(), sign))
        }
        Node::Add(a, b) => {
            let (ua, ub) = (eval_dual(a, x, dim, tau_kink)?, eval_dual(b, x, dim, tau_kink)?);
            zip(ua, ub, dim, |p, q| p + q, |_, _, dp, dq| dp + dq)
        }
        Node::Sub(a, b) => {
            let (ua, ub) = (eval_dual(a, x, dim, tau_kink)?, eval_dual(b, x, dim, tau_kink)?);
            zip(ua, ub, dim, |p, q| p - q, |_, _, dp, dq| dp - dq)
        }
        Node::Mul(a, b) => {
            let (ua, ub) = (eval_dual(a, x, dim, tau_kink)?, eval_dual(b, x, dim, tau_kink)?);
            zip(ua, ub, dim, |p, q| p * q, |p, q, dp, dq| dp * q + p * dq)
        }
        Node::Div(a, b) => {
            let (ua, ub) = (eval_dual(a, x, dim, tau_kink)?, eval_dual(b, x, dim, tau_kink)?);
            if ub.v == 0.0 {
                return Err(ExprError::Domain("division by zero".into()));
            }
            zip(ua, ub, dim, |p, q| p / q, |p, q, dp, dq| (dp * q - p * dq) / (q * q))
        }
        Node::Pow(a, k) => {
            let u = eval_dual(a, x, dim, tau_kink)?;
            if *k < 0 && u.v == 0.0 {
                return Err(ExprError::Domain("zero raised to a negative power".into()));
            }
            let k = *k;
            let dfactor = if k == 0 { 0.0 } else { k as f64 * u.v.powi(k - 1) };
            chain(u, dim, move |v| (v.powi(k), dfactor))
        }
        Node::Min(a, b) => {
            let (ua, ub) = (eval_dual(a, x, dim, tau_kink)?, eval_dual(b, x, dim, tau_kink)?);
            if (ua.v - ub.v).abs() <= tau_kink {
                return Err(ExprError::Kink("min with equal arguments".into()));
            }
            if ua.v < ub.v {
                ua
            } else {
                ub
            }
        }
        Node::Max(a, b) => {
            let (ua, ub) = (eval_dual(a, x, dim, tau_kink)?, eval_dual(b, x, dim, tau_kink)?);
            if (ua.v - ub.v).abs() <= tau_kink {
                return Err(ExprError::Kink("max with equal arguments".into()));
            }
            if ua.v > ub.v {
                ua
            } else {
                ub
            }
        }
    })
}

fn chain(u: Dual, dim: usize, f: impl Fn(f64) -> (f64, f64)) -> Dual {
    let (v, dv) = f(u.v);
    let mut out = Dual::constant(v);
    for k in 0..dim {
        out.d[k] = dv * u.d[k];
    }
    out
}

fn zip(
    a: Dual,
    b: Dual,
    dim: usize,
    fv: impl Fn(f64, f64) -> f64,
    fd: impl Fn(f64, f64, f64, f64) -> f64,
) -> Dual {
    let mut out = Dual::constant(fv(a.v, b.v));
    for k in 0..dim {
        out.d[k] = fd(a.v, b.v, a.d[k], b.d[k]);
    }
    out
}

struct Affine {
    coef: Vec<f64>,
    cst: f64,
}

fn affine_node(node: &Node, dim: usize) -> Option<Affine> {
    let zero = || vec![0.0; dim];
    match node {
        Node::Const(c) => Some(Affine { coef: zero(), cst: *c }),
        Node::Var(i) => {
            let mut coef = zero();
            coef[*i] = 1.0;
            Some(Affine { coef, cst: 0.0 })
        }
        Node::Neg(a) => {
            let mut u = affine_node(a, dim)?;
            u.coef.iter_mut().for_each(|c| *c = -*c);
            u.cst = -u.cst;
            Some(u)
        }
        Node::Add(a, b) | Node::Sub(a, b) => {
            let ua = affine_node(a, dim)?;
            let ub = affine_node(b, dim)?;
            let sign = if matches!(node, Node::Add(..)) { 1.0 } else { -1.0 };
            Some(Affine {
                coef: ua.coef.iter().zip(&ub.coef).map(|(p, q)| p + sign * q).collect(),
                cst: ua.cst + sign * ub.cst,
            })
        }
        Node::Mul(a, b) => {
            let ua = affine_node(a, dim)?;
            let ub = affine_node(b, dim)?;
            if ua.coef.iter().all(|c| *c == 0.0) {
                Some(Affine { coef: ub.coef.iter().map(|c| c * ua.cst).collect(), cst: ua.cst * ub.cst })
            } else if ub.coef.iter().all(|c| *c == 0.0) {
                Some(Affine { coef: ua.coef.iter().map(|c| c * ub.cst).collect(), cst: ub.cst * ua.cst })
            } else {
                None
            }
        }
        Node::Div(a, b) => {
            let ua = affine_node(a, dim)?;
            let ub = affine_node(b, dim)?;
            if ub.coef.iter().all(|c| *c == 0.0) && ub.cst != 0.0 {
                Some(Affine { coef: ua.coef.iter().map(|c| c / ub.cst).collect(), cst: ua.cst / ub.cst })
            } else {
                None
            }
        }
        Node::Pow(a, k) => match k {
            0 => Some(Affine { coef: zero(), cst: 1.0 }),
            1 => affine_node(a, dim),
            _ => {
                let u = affine_node(a, dim)?;
                if u.coef.iter().all(|c| *c == 0.0) {
                    if *k < 0 && u.cst == 0.0 {
                        return None;
                    }
                    Some(Affine { coef: zero(), cst: u.cst.powi(*k) })
                } else {
                    None
                }
            }
        },
        Node::Sin(a) | Node::Cos(a) | Node::Exp(a) | Node::Sqrt(a) | Node::Abs(a) => {
            let u = affine_node(a, dim)?;
            if !u.coef.iter().all(|c| *c == 0.0) {
                return None;
            }
            let cst = match node {
                Node::Sin(_) => u.cst.sin(),
                Node::Cos(_) => u.cst.cos(),
                Node::Exp(_) => u.cst.exp(),
                Node::Sqrt(_) => {
                    if u.cst < 0.0 {
                        return None;
                    }
                    u.cst.sqrt()
                }
                Node::Abs(_) => u.cst.abs(),
                _ => unreachable!(),
            };
            Some(Affine { coef: zero(), cst })
        }
        Node::Min(..) | Node::Max(..) => None,
    }
}

fn split_node(node: &Node, x: &[f64], tau_kink: f64) -> Result<Vec<Node>, ExprError> {
    let unary = |sub: Vec<Node>, wrap: fn(Box<Node>) -> Node| -> Vec<Node> {
        sub.into_iter().map(|n| wrap(Box::new(n))).collect()
    };
    Ok(match node {
        Node::Const(_) | Node::Var(_) => vec![node.clone()],
        Node::Neg(a) => unary(split_node(a, x, tau_kink)?, Node::Neg),
        Node::Sin(a) => unary(split_node(a, x, tau_kink)?, Node::Sin),
        Node::Cos(a) => unary(split_node(a, x, tau_kink)?, Node::Cos),
        Node::Exp(a) => unary(split_node(a, x, tau_kink)?, Node::Exp),
        Node::Sqrt(a) => unary(split_node(a, x, tau_kink)?, Node::Sqrt),
        Node::Abs(a) => {
            let v = eval_node(a, x)?;
            let subs = split_node(a, x, tau_kink)?;
            if v.abs() <= tau_kink {
                // both smooth branches of |u|: u and -u
                subs.iter()
                    .flat_map(|s| [s.clone(), Node::Neg(Box::new(s.clone()))])
                    .collect()
            } else if v > 0.0 {
                subs
            } else {
                unary(subs, Node::Neg)
            }
        }
        Node::Min(a, b) | Node::Max(a, b) => {
            let is_min = matches!(node, Node::Min(..));
            let va = eval_node(a, x)?;
            let vb = eval_node(b, x)?;
            if (va - vb).abs() <= tau_kink {
                let mut out = split_node(a, x, tau_kink)?;
                out.extend(split_node(b, x, tau_kink)?);
                out
            } else if (va < vb) == is_min {
                split_node(a, x, tau_kink)?
            } else {
                split_node(b, x, tau_kink)?
            }
        }
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            let sa = split_node(a, x, tau_kink)?;
            let sb = split_node(b, x, tau_kink)?;
            let mut out = Vec::with_capacity(sa.len() * sb.len());
            for p in &sa {
                for q in &sb {
                    let (bp, bq) = (Box::new(p.clone()), Box::new(q.clone()));
                    out.push(match node {
                        Node::Add(..) => Node::Add(bp, bq),
                        Node::Sub(..) => Node::Sub(bp, bq),
                        Node::Mul(..) => Node::Mul(bp, bq),
                        Node::Div(..) => Node::Div(bp, bq),
                        _ => unreachable!(),
                    });
                }
            }
            out
        }
        Node::Pow(a, k) => split_node(a, x, tau_kink)?
            .into_iter()
            .map(|s| Node::Pow(Box::new(s), *k))
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// parser

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
    constants: &'a BTreeMap<String, f64>,
    end_offset: usize,
}

impl<'a> Parser<'a> {
    fn new(source: &str, dim: usize, constants: &'a BTreeMap<String, f64>) -> Parser<'a> {
        Parser { tokens: lex(source), pos: 0, dim, constants, end_offset: source.len() }
    }

    fn peek(&self) -> Option<&(Tok, usize)> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn offset(&self) -> usize {
        self.peek().map(|(_, o)| *o).unwrap_or(self.end_offset)
    }

    fn syntax(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax { offset: self.offset(), message: message.into() }
    }

    fn expect_end(&mut self) -> Result<(), ExprError> {
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(self.syntax("unexpected trailing input"))
        }
    }

    fn parse_expr(&mut self) -> Result<Node, ExprError> {
        if self.tokens.is_empty() {
            return Err(ExprError::Syntax { offset: 0, message: "empty expression".into() });
        }
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some((Tok::Plus, _)) => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.parse_term()?));
                }
                Some((Tok::Minus, _)) => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.parse_term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.parse_factor()?;
        loop {
            match self.peek() {
                Some((Tok::Star, _)) => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.parse_factor()?));
                }
                Some((Tok::Slash, _)) => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.parse_factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_factor(&mut self) -> Result<Node, ExprError> {
        if matches!(self.peek(), Some((Tok::Minus, _))) {
            self.bump();
            return Ok(Node::Neg(Box::new(self.parse_factor()?)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Node, ExprError> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Some((Tok::Caret, _))) {
            self.bump();
            let mut sign = 1i32;
            if matches!(self.peek(), Some((Tok::Minus, _))) {
                self.bump();
                sign = -1;
            }
            match self.bump() {
                Some((Tok::Num(v), off)) => {
                    if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                        return Err(ExprError::Syntax {
                            offset: off,
                            message: format!("exponent must be an integer, got {v}"),
                        });
                    }
                    Ok(Node::Pow(Box::new(base), sign * v as i32))
                }
                other => Err(ExprError::Syntax {
                    offset: other.map(|(_, o)| o).unwrap_or(self.end_offset),
                    message: "expected integer exponent after ^".into(),
                }),
            }
        } else {
            Ok(base)
        }
    }

    fn parse_atom(&mut self) -> Result<Node, ExprError> {
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(Node::Const(v)),
            Some((Tok::LParen, _)) => {
                let inner = self.parse_expr()?;
                match self.bump() {
                    Some((Tok::RParen, _)) => Ok(inner),
                    _ => Err(self.syntax("expected closing parenthesis")),
                }
            }
            Some((Tok::Ident(name), off)) => self.parse_ident(name, off),
            other => Err(ExprError::Syntax {
                offset: other.map(|(_, o)| o).unwrap_or(self.end_offset),
                message: "expected a number, identifier, or parenthesized expression".into(),
            }),
        }
    }

    fn parse_ident(&mut self, name: String, off: usize) -> Result<Node, ExprError> {
        let is_call = matches!(self.peek(), Some((Tok::LParen, _)));
        if is_call {
            let unary: Option<fn(Box<Node>) -> Node> = match name.as_str() {
                "sin" => Some(Node::Sin),
                "cos" => Some(Node::Cos),
                "exp" => Some(Node::Exp),
                "sqrt" => Some(Node::Sqrt),
                "abs" => Some(Node::Abs),
                _ => None,
            };
            if let Some(wrap) = unary {
                self.bump(); // (
                let arg = self.parse_expr()?;
                return match self.bump() {
                    Some((Tok::RParen, _)) => Ok(wrap(Box::new(arg))),
                    _ => Err(self.syntax(format!("expected `)` closing {name}(..)"))),
                };
            }
            if name == "min" || name == "max" {
                self.bump(); // (
                let a = self.parse_expr()?;
                match self.bump() {
                    Some((Tok::Comma, _)) => {}
                    _ => return Err(self.syntax(format!("{name} takes two comma-separated arguments"))),
                }
                let b = self.parse_expr()?;
                return match self.bump() {
                    Some((Tok::RParen, _)) => Ok(if name == "min" {
                        Node::Min(Box::new(a), Box::new(b))
                    } else {
                        Node::Max(Box::new(a), Box::new(b))
                    }),
                    _ => Err(self.syntax(format!("expected `)` closing {name}(..)"))),
                };
            }
            return Err(ExprError::UnknownIdentifier { name, offset: off });
        }
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(idx) = rest.parse::<usize>() {
                if idx == 0 || idx > self.dim {
                    return Err(ExprError::VariableOutOfRange { index: idx, dim: self.dim, offset: off });
                }
                return Ok(Node::Var(idx - 1));
            }
        }
        if let Some(value) = self.constants.get(&name) {
            return Ok(Node::Const(*value));
        }
        Err(ExprError::UnknownIdentifier { name, offset: off })
    }
}

fn lex(source: &str) -> Vec<(Tok, usize)> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Tok::Plus, i));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, i));
                i += 1;
            }
            '*' => {
                out.push((Tok::Star, i));
                i += 1;
            }
            '/' => {
                out.push((Tok::Slash, i));
                i += 1;
            }
            '^' => {
                out.push((Tok::Caret, i));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent part
                if i < bytes.len()
                    && matches!(bytes[i] as char, 'e' | 'E')
                    && i + 1 < bytes.len()
                    && (bytes[i + 1].is_ascii_digit()
                        || ((bytes[i + 1] as char == '+' || bytes[i + 1] as char == '-')
                            && i + 2 < bytes.len()
                            && bytes[i + 2].is_ascii_digit()))
                {
                    i += 2;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                match source[start..i].parse::<f64>() {
                    Ok(v) => out.push((Tok::Num(v), start)),
                    Err(_) => out.push((Tok::Ident(source[start..i].to_string()), start)),
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] as char == '_') {
                    i += 1;
                }
                out.push((Tok::Ident(source[start..i].to_string()), start));
            }
            _ => {
                // punt unknown bytes to the parser as an ident for a clean error
                out.push((Tok::Ident(c.to_string()), i));
                i += 1;
            }
        }
    }
    out
}
