//! Piecewise scalar functions and their nonsmooth derivative objects.
//!
//! A [`PiecewiseFunction`] is a list of region-guarded smooth pieces with a
//! declared smoothness class. Guards are closed constraint sets; on guard
//! overlaps the lower semicontinuous classes take the minimum of the active
//! piece values, which makes the represented function genuinely lsc without
//! boundary bookkeeping. The Clarke generalized gradient at a point is the
//! convex hull of the active piece gradients (pieces are smooth on their
//! guards, so nearby-gradient limits are exactly the piece gradients);
//! proximal subgradients are exposed as a membership test on the epigraph's
//! proximal normal cone.

use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::geometry::{ConeQueryResult, ConstraintSet, GeomError, QueryCtx};
use crate::outcome::Verdict;
use crate::sampling::dist;
use crate::tol::h_grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FnError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("point {0:?} is not covered by any piece guard")]
    Uncovered(Vec<f64>),
    #[error("operation requires class {required} but function is {actual}")]
    ClassMismatch { required: &'static str, actual: FnClass },
    #[error("active pieces disagree at {point:?}: {a} vs {b}")]
    PieceMismatch { point: Vec<f64>, a: f64, b: f64 },
}

/// Declared smoothness class of a piecewise function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnClass {
    Lsc,
    Lipschitz,
    LipschitzRegular,
    Nonpathological,
    C1,
}

impl FnClass {
    pub fn is_lipschitz(&self) -> bool {
        !matches!(self, FnClass::Lsc)
    }

    /// Regular functions are those whose epigraph is a regular set; C1
    /// implies regular.
    pub fn is_regular(&self) -> bool {
        matches!(self, FnClass::LipschitzRegular | FnClass::C1)
    }

    /// Lipschitz regular functions are nonpathological, as is C1.
    pub fn is_nonpathological(&self) -> bool {
        matches!(self, FnClass::Nonpathological | FnClass::LipschitzRegular | FnClass::C1)
    }

    pub fn is_c1(&self) -> bool {
        matches!(self, FnClass::C1)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FnClass::Lsc => "lsc",
            FnClass::Lipschitz => "lipschitz",
            FnClass::LipschitzRegular => "lipschitz-regular",
            FnClass::Nonpathological => "nonpathological",
            FnClass::C1 => "c1",
        }
    }
}

impl std::fmt::Display for FnClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct Piece {
    pub guard: ConstraintSet,
    pub expr: Expression,
}

#[derive(Debug, Clone)]
pub struct PiecewiseFunction {
    pieces: Vec<Piece>,
    class: FnClass,
    dim: usize,
}

/// Vertices of the Clarke generalized gradient; the set is their convex
/// hull.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPolytope {
    pub vertices: Vec<Vec<f64>>,
}

impl PiecewiseFunction {
    pub fn new(pieces: Vec<Piece>, class: FnClass, dim: usize) -> PiecewiseFunction {
        assert!(!pieces.is_empty());
        PiecewiseFunction { pieces, class, dim }
    }

    /// Single smooth formula on the whole space.
    pub fn smooth(expr: Expression, class: FnClass) -> PiecewiseFunction {
        let dim = expr.dim();
        PiecewiseFunction {
            pieces: vec![Piece { guard: ConstraintSet::whole_space(dim), expr }],
            class,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class(&self) -> FnClass {
        self.class
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `c * B`: every piece scaled.
    pub fn scaled(&self, c: f64) -> PiecewiseFunction {
        PiecewiseFunction {
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece { guard: p.guard.clone(), expr: p.expr.scaled(c) })
                .collect(),
            class: self.class,
            dim: self.dim,
        }
    }

    fn active_pieces(&self, x: &[f64], tau_mem: f64) -> Result<Vec<&Piece>, FnError> {
        let mut out = Vec::new();
        for piece in &self.pieces {
            if piece.guard.contains(x, tau_mem)? {
                out.push(piece);
            }
        }
        if out.is_empty() {
            return Err(FnError::Uncovered(x.to_vec()));
        }
        Ok(out)
    }

    /// Function value. Lsc semantics: minimum over pieces whose guard
    /// contains the point; higher classes assert the active pieces agree
    /// (within 1e-9) and return the common value.
    pub fn value(&self, x: &[f64], tau_mem: f64) -> Result<f64, FnError> {
        let active = self.active_pieces(x, tau_mem)?;
        let mut values = Vec::with_capacity(active.len());
        for p in &active {
            values.push(p.expr.evaluate(x)?);
        }
        if self.class == FnClass::Lsc {
            return Ok(values.iter().cloned().fold(f64::INFINITY, f64::min));
        }
        let first = values[0];
        for v in &values[1..] {
            if (v - first).abs() > 1e-9 {
                return Err(FnError::PieceMismatch { point: x.to_vec(), a: first, b: *v });
            }
        }
        Ok(first)
    }

    /// Clarke generalized gradient vertices: gradients of every piece active
    /// at `x`, with in-piece abs/min/max kinks resolved by splitting the
    /// piece into its smooth branches.
    pub fn clarke_gradient(&self, x: &[f64], tau_mem: f64, tau_kink: f64) -> Result<GradientPolytope, FnError> {
        if !self.class.is_lipschitz() {
            return Err(FnError::ClassMismatch { required: "lipschitz", actual: self.class });
        }
        let active = self.active_pieces(x, tau_mem)?;
        let mut vertices: Vec<Vec<f64>> = Vec::new();
        for piece in active {
            match piece.expr.gradient(x, tau_kink) {
                Ok(g) => push_unique(&mut vertices, g),
                Err(ExprError::Kink(_)) => {
                    for branch in piece.expr.smooth_branches(x, tau_kink)? {
                        let g = branch.gradient(x, tau_kink)?;
                        push_unique(&mut vertices, g);
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(GradientPolytope { vertices })
    }

    /// The epigraph intersected with `C x R`, as a constraint set in
    /// dimension n+1 (the added coordinate is the epigraph level `r`).
    pub fn epigraph(&self, c: &ConstraintSet) -> ConstraintSet {
        assert_eq!(c.dim(), self.dim);
        let new_dim = self.dim + 1;
        let branches: Vec<ConstraintSet> = self
            .pieces
            .iter()
            .map(|piece| {
                let slack = piece.expr.minus_coordinate(self.dim, new_dim);
                if piece.guard.is_whole_space() {
                    ConstraintSet::leq(slack)
                } else {
                    ConstraintSet::intersection(vec![
                        piece.guard.product_with_reals(),
                        ConstraintSet::leq(slack),
                    ])
                }
            })
            .collect();
        let epi = if branches.len() == 1 { branches.into_iter().next().unwrap() } else { ConstraintSet::union(branches) };
        if c.is_whole_space() {
            epi
        } else {
            ConstraintSet::intersection(vec![epi, c.product_with_reals()])
        }
    }

    /// Tests whether `eta` is a proximal subgradient at `x`: the direction
    /// `(eta, -1)` must be a proximal normal of the epigraph at
    /// `(x, B(x))`.
    pub fn proximal_subdifferential_test(
        &self,
        x: &[f64],
        eta: &[f64],
        ctx: &QueryCtx,
    ) -> Result<ConeQueryResult, FnError> {
        let epi = self.epigraph(&ConstraintSet::whole_space(self.dim));
        let value = self.value(x, ctx.tols.tau_mem)?;
        let mut point = x.to_vec();
        point.push(value);
        let mut dir = eta.to_vec();
        dir.push(-1.0);
        let (bounds, tols, seed) = (extend_bounds(ctx), ctx.tols, ctx.seed);
        let epi_ctx = QueryCtx { bounds: &bounds, tols, seed };
        Ok(epi.in_proximal_normal_cone(&point, &dir, &epi_ctx)?)
    }

    /// Function regularity at `x`: delegates to set regularity of the
    /// epigraph at `(x, B(x))`.
    pub fn is_function_regular_at(&self, x: &[f64], budget: usize, ctx: &QueryCtx) -> Verdict {
        let epi = self.epigraph(&ConstraintSet::whole_space(self.dim));
        let value = match self.value(x, ctx.tols.tau_mem) {
            Ok(v) => v,
            Err(e) => return Verdict::inconclusive(format!("{e}"), Default::default()),
        };
        let mut point = x.to_vec();
        point.push(value);
        let bounds = extend_bounds(ctx);
        let epi_ctx = QueryCtx { bounds: &bounds, tols: ctx.tols, seed: ctx.seed };
        epi.is_set_regular_at(&point, budget, &epi_ctx)
    }

    /// Finite-grid lower Dini derivative surrogate for scalar functions:
    /// minimum of forward difference quotients over the geometric t-grid.
    pub fn dini_derivative(&self, x: f64, tau_mem: f64) -> Result<f64, FnError> {
        assert_eq!(self.dim, 1, "Dini derivative is for one-dimensional functions");
        let base = self.value(&[x], tau_mem)?;
        let mut best = f64::INFINITY;
        for t in h_grid() {
            let v = self.value(&[x + t], tau_mem)?;
            best = best.min((v - base) / t);
        }
        Ok(best)
    }

    /// Sampled Lipschitz bound: the largest gradient-vertex norm seen over
    /// the points (pieces are sampled where their guards are active).
    pub fn sampled_gradient_bound(&self, points: &[Vec<f64>], tau_mem: f64, tau_kink: f64) -> f64 {
        let mut bound = 0.0f64;
        for x in points {
            if !self.class.is_lipschitz() {
                // per-piece gradients still bound the within-piece variation
                for piece in &self.pieces {
                    if piece.guard.contains(x, tau_mem).unwrap_or(false) {
                        if let Ok(g) = piece.expr.gradient(x, tau_kink) {
                            bound = bound.max(crate::sampling::norm(&g));
                        }
                    }
                }
            } else if let Ok(poly) = self.clarke_gradient(x, tau_mem, tau_kink) {
                for v in &poly.vertices {
                    bound = bound.max(crate::sampling::norm(v));
                }
            }
        }
        bound
    }
}

fn extend_bounds(ctx: &QueryCtx) -> Vec<(f64, f64)> {
    let mut bounds = ctx.bounds.to_vec();
    // epigraph level range: wide enough for the fixture function ranges
    bounds.push((-100.0, 100.0));
    bounds
}

fn push_unique(vertices: &mut Vec<Vec<f64>>, g: Vec<f64>) {
    if !vertices.iter().any(|v| dist(v, &g) <= 1e-12) {
        vertices.push(g);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::sampling::dist_to_hull;
    use crate::tol::Tolerances;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn ctx<'a>(bounds: &'a [(f64, f64)], tols: &'a Tolerances) -> QueryCtx<'a> {
        QueryCtx { bounds, tols, seed: 42 }
    }

    /// Step function: 0 for x2 <= 0, 1 for x2 > 0 (guards are closures, the
    /// lsc minimum rule restores the jump).
    fn step_function() -> PiecewiseFunction {
        PiecewiseFunction::new(
            vec![
                Piece { guard: ConstraintSet::leq(parse("x2", 2).unwrap()), expr: parse("0", 2).unwrap() },
                Piece { guard: ConstraintSet::leq(parse("-x2", 2).unwrap()), expr: parse("1", 2).unwrap() },
            ],
            FnClass::Lsc,
            2,
        )
    }

    fn abs_two_pieces() -> PiecewiseFunction {
        PiecewiseFunction::new(
            vec![
                Piece { guard: ConstraintSet::leq(parse("-x1", 2).unwrap()), expr: parse("x1", 2).unwrap() },
                Piece { guard: ConstraintSet::leq(parse("x1", 2).unwrap()), expr: parse("-x1", 2).unwrap() },
            ],
            FnClass::LipschitzRegular,
            2,
        )
    }

    #[test]
    fn value_follows_lsc_minimum_rule() {
        let t = tols();
        let b = step_function();
        assert_eq!(b.value(&[0.3, -1.0], t.tau_mem).unwrap(), 0.0);
        assert_eq!(b.value(&[0.3, 0.0], t.tau_mem).unwrap(), 0.0);
        assert_eq!(b.value(&[0.3, 0.5], t.tau_mem).unwrap(), 1.0);
        let linear = PiecewiseFunction::smooth(parse("-x1", 2).unwrap(), FnClass::C1);
        assert_eq!(linear.value(&[2.0, 0.0], t.tau_mem).unwrap(), -2.0);
    }

    #[test]
    fn clarke_gradient_of_abs_is_the_interval() {
        let t = tols();
        let poly = abs_two_pieces().clarke_gradient(&[0.0, 5.0], t.tau_mem, t.tau_kink).unwrap();
        assert_eq!(poly.vertices.len(), 2);
        assert!(poly.vertices.contains(&vec![1.0, 0.0]));
        assert!(poly.vertices.contains(&vec![-1.0, 0.0]));
        // midpoints of the hull are reachable
        assert!(dist_to_hull(&[0.3, 0.0], &poly.vertices) < 1e-9);

        let linear = PiecewiseFunction::smooth(parse("-x1", 2).unwrap(), FnClass::C1);
        let poly = linear.clarke_gradient(&[7.0, -3.0], t.tau_mem, t.tau_kink).unwrap();
        assert_eq!(poly.vertices, vec![vec![-1.0, 0.0]]);

        let energy = PiecewiseFunction::smooth(parse("9.81*x1 + 0.5*x2^2", 2).unwrap(), FnClass::C1);
        let poly = energy.clarke_gradient(&[0.0, 1.0], t.tau_mem, t.tau_kink).unwrap();
        assert_eq!(poly.vertices, vec![vec![9.81, 1.0]]);
    }

    #[test]
    fn clarke_gradient_splits_in_piece_kinks() {
        let t = tols();
        let b = PiecewiseFunction::smooth(parse("abs(x1)", 2).unwrap(), FnClass::LipschitzRegular);
        let poly = b.clarke_gradient(&[0.0, 1.0], t.tau_mem, t.tau_kink).unwrap();
        assert_eq!(poly.vertices.len(), 2);
        assert!(poly.vertices.contains(&vec![1.0, 0.0]));
        assert!(poly.vertices.contains(&vec![-1.0, 0.0]));
    }

    #[test]
    fn clarke_gradient_requires_lipschitz_class() {
        let t = tols();
        let err = step_function().clarke_gradient(&[0.0, 0.0], t.tau_mem, t.tau_kink);
        assert!(matches!(err, Err(FnError::ClassMismatch { .. })));
    }

    #[test]
    fn epigraph_of_constant_and_affine() {
        let t = tols();
        let zero = PiecewiseFunction::smooth(parse("0", 1).unwrap(), FnClass::C1);
        let epi = zero.epigraph(&ConstraintSet::whole_space(1));
        assert_eq!(epi.dim(), 2);
        assert!(epi.contains(&[3.0, 0.5], t.tau_mem).unwrap());
        assert!(!epi.contains(&[3.0, -0.5], t.tau_mem).unwrap());

        let b = PiecewiseFunction::smooth(parse("-x1", 2).unwrap(), FnClass::C1);
        let line = ConstraintSet::eq(parse("x2", 2).unwrap());
        let epi = b.epigraph(&line);
        // {(x, r): x2 = 0, r >= -x1}
        assert!(epi.contains(&[1.0, 0.0, -0.5], t.tau_mem).unwrap());
        assert!(!epi.contains(&[1.0, 0.0, -1.5], t.tau_mem).unwrap());
        assert!(!epi.contains(&[1.0, 0.2, 0.0], t.tau_mem).unwrap());
    }

    #[test]
    fn epigraph_of_step_matches_branch_formulas() {
        // membership must agree with the region description used in the
        // lsc fixture: {x2<=0, r>=0} u {x2>=0, r>=1}, intersected with the
        // cusp union set, on a sample grid
        let t = tols();
        let b = step_function();
        let c = ConstraintSet::union(vec![
            ConstraintSet::leq(parse("x1^2 - abs(x2)", 2).unwrap()),
            ConstraintSet::leq(parse("x1", 2).unwrap()),
            ConstraintSet::eq(parse("x2", 2).unwrap()),
        ]);
        let epi = b.epigraph(&c);
        let by_hand = |x1: f64, x2: f64, r: f64| {
            let in_c = x2.abs() >= x1 * x1 || x1 <= 0.0 || x2 == 0.0;
            let in_epi = (x2 <= 0.0 && r >= 0.0) || (x2 >= 0.0 && r >= 1.0);
            in_c && in_epi
        };
        for x1 in [-1.0, -0.5, 0.0, 0.3, 0.9] {
            for x2 in [-1.0, -0.25, 0.0, 0.25, 1.0] {
                for r in [-0.5, 0.0, 0.5, 1.0, 1.5] {
                    let got = epi.contains(&[x1, x2, r], t.tau_mem).unwrap();
                    assert_eq!(got, by_hand(x1, x2, r), "({x1},{x2},{r})");
                }
            }
        }
    }

    #[test]
    fn proximal_subgradient_tests_per_spec_examples() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let c = ctx(&bounds, &t);
        // smooth case: the gradient is a proximal subgradient
        let sq = PiecewiseFunction::smooth(parse("x1^2", 2).unwrap(), FnClass::C1);
        let r = sq.proximal_subdifferential_test(&[1.0, 0.0], &[2.0, 0.0], &c).unwrap();
        assert!(r.member, "residual {}", r.residual);
        // and a wrong vector is not
        let r = sq.proximal_subdifferential_test(&[1.0, 0.0], &[1.0, 0.0], &c).unwrap();
        assert!(!r.member);
        // convex kink: subgradients fill the interval
        let b = abs_two_pieces();
        let r = b.proximal_subdifferential_test(&[0.0, 0.0], &[0.5, 0.0], &c).unwrap();
        assert!(r.member, "residual {}", r.residual);
        // concave kink: empty proximal subdifferential at the crease
        let neg = PiecewiseFunction::new(
            vec![
                Piece { guard: ConstraintSet::leq(parse("-x1", 2).unwrap()), expr: parse("-x1", 2).unwrap() },
                Piece { guard: ConstraintSet::leq(parse("x1", 2).unwrap()), expr: parse("x1", 2).unwrap() },
            ],
            FnClass::Lipschitz,
            2,
        );
        let r = neg.proximal_subdifferential_test(&[0.0, 0.0], &[0.0, 0.0], &c).unwrap();
        assert!(!r.member);
    }

    /// Brute-force epigraph distance oracle for the convex-kink membership:
    /// dense grid + local refinement, direct formulas only.
    #[test]
    fn proximal_test_agrees_with_brute_force_epigraph_distance() {
        // B = |x1| in (x1, x2, r) space; probe point x + r0*(eta, -1) with
        // eta = (0.5, 0): distance to epi must equal r0*|(0.5,0,-1)|
        let r0 = 1e-2;
        let probe = [0.5 * r0, 0.0, -r0];
        let znorm = (0.5f64 * 0.5 + 1.0).sqrt();
        // distance from probe to {(x1,x2,r): r >= |x1|}: minimize over x1
        // (x2 = 0 optimal by symmetry), r = max(|x1|, anything below probe r)
        let mut best = f64::INFINITY;
        let mut arg = 0.0;
        for k in 0..=2_000_000u64 {
            let x1 = -0.05 + 0.1 * k as f64 / 2e6;
            let d2 = (x1 - probe[0]).powi(2) + (x1.abs() - probe[2]).powi(2);
            if d2 < best {
                best = d2;
                arg = x1;
            }
        }
        // local golden-section polish around the best grid cell
        let f = |x1: f64| ((x1 - probe[0]).powi(2) + (x1.abs() - probe[2]).powi(2)).sqrt();
        let (mut lo, mut hi) = (arg - 1e-7, arg + 1e-7);
        for _ in 0..200 {
            let m1 = lo + 0.382 * (hi - lo);
            let m2 = lo + 0.618 * (hi - lo);
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let oracle = f(0.5 * (lo + hi));
        let rel = (oracle - r0 * znorm).abs() / (r0 * znorm);
        assert!(rel <= 1e-4, "oracle {} vs touching radius {} (rel {rel})", oracle, r0 * znorm);
    }

    #[test]
    fn regularity_of_functions_per_spec_examples() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let c = ctx(&bounds, &t);
        assert!(abs_two_pieces().is_function_regular_at(&[0.0, 0.0], 24, &c).is_holds());
        let smooth = PiecewiseFunction::smooth(parse("sin(x1)*x2", 2).unwrap(), FnClass::C1);
        assert!(smooth.is_function_regular_at(&[0.4, -0.7], 24, &c).is_holds());
        // -|x1| is the classic non-regular function
        let neg = PiecewiseFunction::new(
            vec![
                Piece { guard: ConstraintSet::leq(parse("-x1", 2).unwrap()), expr: parse("-x1", 2).unwrap() },
                Piece { guard: ConstraintSet::leq(parse("x1", 2).unwrap()), expr: parse("x1", 2).unwrap() },
            ],
            FnClass::Lipschitz,
            2,
        );
        let verdict = neg.is_function_regular_at(&[0.0, 0.0], 24, &c);
        assert!(verdict.is_violated(), "{verdict:?}");
    }

    #[test]
    fn dini_derivative_fixtures() {
        let t = tols();
        let neg = PiecewiseFunction::smooth(parse("-x1", 1).unwrap(), FnClass::C1);
        assert!((neg.dini_derivative(3.0, t.tau_mem).unwrap() + 1.0).abs() <= 1e-9);
        let abs1 = PiecewiseFunction::smooth(parse("abs(x1)", 1).unwrap(), FnClass::LipschitzRegular);
        assert!((abs1.dini_derivative(0.0, t.tau_mem).unwrap() - 1.0).abs() <= 1e-9);
        let sq = PiecewiseFunction::smooth(parse("x1^2", 1).unwrap(), FnClass::C1);
        assert!((sq.dini_derivative(-1.0, t.tau_mem).unwrap() + 2.0).abs() <= 1e-3);
    }

    #[test]
    fn smooth_consistency_and_positive_scaling() {
        let t = tols();
        let b = PiecewiseFunction::smooth(parse("sin(x1)*x2 + x1^2", 2).unwrap(), FnClass::C1);
        let mut rng = crate::sampling::rng_from(11);
        use rand::Rng;
        for _ in 0..100 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let poly = b.clarke_gradient(&x, t.tau_mem, t.tau_kink).unwrap();
            assert_eq!(poly.vertices.len(), 1);
            let grad = b.pieces()[0].expr.gradient(&x, t.tau_kink).unwrap();
            assert!(dist(&poly.vertices[0], &grad) <= 1e-10);
            for c in [0.5, 2.0] {
                let scaled = b.scaled(c).clarke_gradient(&x, t.tau_mem, t.tau_kink).unwrap();
                let expect: Vec<f64> = grad.iter().map(|g| c * g).collect();
                assert!(dist(&scaled.vertices[0], &expect) <= 1e-10);
            }
        }
    }

    #[test]
    fn lebourg_mean_value_inclusion_on_random_lipschitz_fixtures() {
        // for B(x) - B(y) there is a segment point u whose gradient hull
        // contains the difference quotient; realized as: the interval of
        // <z, x - y> over hull vertices at some grid u contains B(x)-B(y)
        let t = tols();
        let mut rng = crate::sampling::rng_from(99);
        use rand::Rng;
        for trial in 0..100 {
            let a = rng.gen_range(-2.0..2.0);
            let bcoef = rng.gen_range(-2.0..2.0);
            let b = match trial % 3 {
                0 => PiecewiseFunction::smooth(
                    parse(&format!("{a}*x1 + {bcoef}*x2 + 0.25*x1^2"), 2).unwrap(),
                    FnClass::C1,
                ),
                1 => PiecewiseFunction::smooth(
                    parse(&format!("abs(x1 - {a}) + {bcoef}*x2"), 2).unwrap(),
                    FnClass::LipschitzRegular,
                ),
                _ => PiecewiseFunction::smooth(
                    parse(&format!("min(0.25*x1^2, {a}*x1 + 0.25*x2^2) + {bcoef}*x1"), 2).unwrap(),
                    FnClass::Lipschitz,
                ),
            };
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let bx = b.value(&x, t.tau_mem).unwrap();
            let by = b.value(&y, t.tau_mem).unwrap();
            let target = bx - by;
            let step: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
            let mut best_gap = f64::INFINITY;
            // kink window above the per-step change of the switching
            // argument: a 1000-point segment grid only straddles a kink, so
            // "gradients at nearby points" must include both branches within
            // a grid-cell-sized window
            let kink_window = 5e-2;
            for k in 1..1000 {
                let s = k as f64 / 1000.0;
                let u: Vec<f64> = y.iter().zip(&x).map(|(q, p)| q + s * (p - q)).collect();
                let poly = match b.clarke_gradient(&u, t.tau_mem, kink_window) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                let ips: Vec<f64> = poly.vertices.iter().map(|z| crate::sampling::dot(z, &step)).collect();
                let lo = ips.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = ips.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let gap = if target < lo {
                    lo - target
                } else if target > hi {
                    target - hi
                } else {
                    0.0
                };
                best_gap = best_gap.min(gap);
                if best_gap == 0.0 {
                    break;
                }
            }
            let dxy = dist(&x, &y);
            assert!(
                best_gap <= 1e-3 * (1.0 + dxy),
                "trial {trial}: gap {best_gap} for x={x:?} y={y:?}"
            );
        }
    }

    #[test]
    fn proximal_density_search_succeeds_on_the_step_fixture() {
        // at (x1, 0) the step function's epigraph has proximal normals with
        // negative vertical component arbitrarily close to the horizontal
        // one (0, 1, 0); the search over nearby points (including the point
        // itself) must find a member of the form (eta, -lambda), lambda > 0
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let c = ctx(&bounds, &t);
        let b = step_function();
        let x = [0.7, 0.0];
        let mut found = false;
        'search: for dx1 in [0.0, -1e-2, 1e-2] {
            for dx2 in [0.0, -1e-2, 1e-2] {
                let p = [x[0] + dx1, x[1] + dx2];
                // candidate subgradient directions, increasingly vertical
                for eta2 in [1.0, 0.5, 0.0] {
                    let r = b.proximal_subdifferential_test(&p, &[0.0, eta2], &c).unwrap();
                    if r.member {
                        found = true;
                        break 'search;
                    }
                }
            }
        }
        assert!(found);
    }
}
