//! Scenario files: the on-disk description of one system triple `(C, F, B)`
//! plus the checks to run against it.
//!
//! Files are TOML; the schema is documented in `docs/scenario-format.md`.
//! Loading validates everything up front and reports every failure at once.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::expr::{self, Expression};
use crate::geometry::ConstraintSet;
use crate::inclusion::{Branch, VelocityMap};
use crate::nonsmooth::{FnClass, Piece, PiecewiseFunction};
use crate::tol::Tolerances;
use crate::verdict::{AssumptionId, ConditionId};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path} is invalid:\n{}", failures.join("\n"))]
    Validation { path: String, failures: Vec<String> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    dimension: Option<usize>,
    #[serde(rename = "box")]
    box_bounds: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    constants: BTreeMap<String, f64>,
    set: Option<RawSetNode>,
    map: Option<RawMap>,
    function: Option<RawFunction>,
    #[serde(default)]
    grids: RawGrids,
    #[serde(default)]
    checks: RawChecks,
    #[serde(default)]
    simulation: RawSimulation,
    #[serde(default)]
    seeds: RawSeeds,
    #[serde(default)]
    tolerances: RawTolerances,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSetNode {
    leq: Option<String>,
    eq: Option<String>,
    union: Option<Vec<RawSetNode>>,
    intersection: Option<Vec<RawSetNode>>,
    /// `all = true` denotes the whole space.
    all: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    branch: Vec<RawBranch>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    guard: Option<RawSetNode>,
    vertices: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunction {
    class: String,
    piece: Vec<RawPiece>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiece {
    guard: Option<RawSetNode>,
    expr: String,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrids {
    boundary: Option<usize>,
    interior: Option<usize>,
    /// Shrinking neighborhood radii for localized assumption checks.
    radii: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    #[serde(default)]
    conditions: Vec<String>,
    #[serde(default)]
    assumptions: Vec<String>,
    oracle: Option<RawOracle>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    starts: Vec<Vec<f64>>,
    ensemble: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    dt: Option<f64>,
    horizon: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSeeds {
    root: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    tau_mem: Option<f64>,
    eps_tan: Option<f64>,
    eps_nrm: Option<f64>,
    eps_dual: Option<f64>,
    eps_cond: Option<f64>,
    eps_const: Option<f64>,
    tau_kink: Option<f64>,
    tau_flow: Option<f64>,
    tol_mono_abs: Option<f64>,
    jump_increase: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OracleRequest {
    pub starts: Vec<Vec<f64>>,
    pub ensemble: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub bounds: Vec<(f64, f64)>,
    pub set: ConstraintSet,
    pub map: VelocityMap,
    pub function: PiecewiseFunction,
    pub boundary_resolution: usize,
    pub interior_resolution: usize,
    pub radii: Vec<f64>,
    pub conditions: Vec<ConditionId>,
    pub assumptions: Vec<AssumptionId>,
    pub oracle: Option<OracleRequest>,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub tols: Tolerances,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let raw: RawScenario = toml::from_str(&text).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    resolve(raw, &path.display().to_string())
}

pub fn load_scenario_str(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    resolve(raw, origin)
}

fn resolve(raw: RawScenario, origin: &str) -> Result<Scenario, ScenarioError> {
    let mut failures: Vec<String> = Vec::new();
    let name = raw
        .name
        .clone()
        .unwrap_or_else(|| {
            failures.push("missing field `name`".into());
            String::new()
        });
    let dim = raw.dimension.unwrap_or_else(|| {
        failures.push("missing field `dimension`".into());
        0
    });
    if dim == 0 || dim > expr::MAX_DIM - 1 {
        failures.push(format!("dimension must be in 1..={}, got {dim}", expr::MAX_DIM - 1));
    }

    let mut bounds: Vec<(f64, f64)> = Vec::new();
    match &raw.box_bounds {
        Some(axes) => {
            if dim > 0 && axes.len() != dim {
                failures.push(format!("`box` has {} axes, expected {dim}", axes.len()));
            }
            for (i, axis) in axes.iter().enumerate() {
                if axis.len() != 2 || axis[0] >= axis[1] {
                    failures.push(format!("`box` axis {} must be [lo, hi] with lo < hi", i + 1));
                    bounds.push((-1.0, 1.0));
                } else {
                    bounds.push((axis[0], axis[1]));
                }
            }
        }
        None => failures.push("missing field `box`".into()),
    }

    let parse_expr = |src: &str, what: &str, failures: &mut Vec<String>| -> Option<Expression> {
        if dim == 0 {
            return None;
        }
        match expr::parse_with_constants(src, dim, &raw.constants) {
            Ok(e) => Some(e),
            Err(e) => {
                failures.push(format!("{what}: `{src}`: {e}"));
                None
            }
        }
    };

    type ExprParser<'a> = &'a dyn Fn(&str, &str, &mut Vec<String>) -> Option<Expression>;

    fn build_set(
        node: &RawSetNode,
        dim: usize,
        what: &str,
        parse: ExprParser,
        failures: &mut Vec<String>,
    ) -> Option<ConstraintSet> {
        let mut kinds = 0;
        if node.leq.is_some() {
            kinds += 1;
        }
        if node.eq.is_some() {
            kinds += 1;
        }
        if node.union.is_some() {
            kinds += 1;
        }
        if node.intersection.is_some() {
            kinds += 1;
        }
        if node.all.is_some() {
            kinds += 1;
        }
        if kinds != 1 {
            failures.push(format!(
                "{what}: each node needs exactly one of `leq`, `eq`, `union`, `intersection`, `all`"
            ));
            return None;
        }
        if let Some(src) = &node.leq {
            return parse(src, what, failures).map(ConstraintSet::leq);
        }
        if let Some(src) = &node.eq {
            return parse(src, what, failures).map(ConstraintSet::eq);
        }
        if node.all == Some(true) {
            return Some(ConstraintSet::whole_space(dim));
        }
        if node.all.is_some() {
            failures.push(format!("{what}: `all` must be true when present"));
            return None;
        }
        type SetCtor = fn(Vec<ConstraintSet>) -> ConstraintSet;
        let (children, ctor): (&Vec<RawSetNode>, SetCtor) =
            if let Some(u) = &node.union {
                (u, ConstraintSet::union)
            } else {
                (node.intersection.as_ref().unwrap(), ConstraintSet::intersection)
            };
        if children.is_empty() {
            failures.push(format!("{what}: empty union/intersection"));
            return None;
        }
        let mut parts = Vec::new();
        for (i, child) in children.iter().enumerate() {
            parts.push(build_set(child, dim, &format!("{what}[{i}]"), parse, failures)?);
        }
        Some(ctor(parts))
    }

    let set = match &raw.set {
        Some(node) => build_set(node, dim, "set", &parse_expr, &mut failures),
        None => {
            failures.push("missing table `set`".into());
            None
        }
    };

    let map = match &raw.map {
        Some(m) if m.branch.is_empty() => {
            failures.push("`map` needs at least one branch".into());
            None
        }
        Some(m) => {
            let mut branches = Vec::new();
            for (bi, b) in m.branch.iter().enumerate() {
                let guard = match &b.guard {
                    Some(node) => build_set(node, dim, &format!("map.branch[{bi}].guard"), &parse_expr, &mut failures),
                    None => Some(ConstraintSet::whole_space(dim.max(1))),
                };
                if b.vertices.is_empty() {
                    failures.push(format!("map.branch[{bi}] needs at least one vertex field"));
                    continue;
                }
                let mut vertex_fields = Vec::new();
                for (vi, field) in b.vertices.iter().enumerate() {
                    if dim > 0 && field.len() != dim {
                        failures.push(format!(
                            "map.branch[{bi}].vertices[{vi}] has {} components, expected {dim}",
                            field.len()
                        ));
                        continue;
                    }
                    let mut components = Vec::new();
                    for (ci, src) in field.iter().enumerate() {
                        if let Some(e) =
                            parse_expr(src, &format!("map.branch[{bi}].vertices[{vi}][{ci}]"), &mut failures)
                        {
                            components.push(e);
                        }
                    }
                    if components.len() == field.len() {
                        vertex_fields.push(components);
                    }
                }
                if let Some(guard) = guard {
                    if !vertex_fields.is_empty() {
                        branches.push(Branch { guard, vertex_fields });
                    }
                }
            }
            if branches.is_empty() {
                None
            } else {
                Some(VelocityMap::new(branches, dim.max(1)))
            }
        }
        None => {
            failures.push("missing table `map`".into());
            None
        }
    };

    let function = match &raw.function {
        Some(f) => {
            let class = match f.class.as_str() {
                "lsc" => Some(FnClass::Lsc),
                "lipschitz" => Some(FnClass::Lipschitz),
                "lipschitz-regular" => Some(FnClass::LipschitzRegular),
                "nonpathological" => Some(FnClass::Nonpathological),
                "c1" => Some(FnClass::C1),
                other => {
                    failures.push(format!(
                        "function.class must be one of lsc|lipschitz|lipschitz-regular|nonpathological|c1, got `{other}`"
                    ));
                    None
                }
            };
            if f.piece.is_empty() {
                failures.push("`function` needs at least one piece".into());
            }
            let mut pieces = Vec::new();
            for (pi, p) in f.piece.iter().enumerate() {
                let guard = match &p.guard {
                    Some(node) => build_set(node, dim, &format!("function.piece[{pi}].guard"), &parse_expr, &mut failures),
                    None => Some(ConstraintSet::whole_space(dim.max(1))),
                };
                let e = parse_expr(&p.expr, &format!("function.piece[{pi}].expr"), &mut failures);
                if let (Some(guard), Some(expr)) = (guard, e) {
                    pieces.push(Piece { guard, expr });
                }
            }
            match (class, pieces.is_empty()) {
                (Some(class), false) => Some(PiecewiseFunction::new(pieces, class, dim.max(1))),
                _ => None,
            }
        }
        None => {
            failures.push("missing table `function`".into());
            None
        }
    };

    let mut conditions = Vec::new();
    for s in &raw.checks.conditions {
        match ConditionId::parse(s) {
            Some(id) => conditions.push(id),
            None => failures.push(format!("unknown condition id `{s}`")),
        }
    }
    let mut assumptions = Vec::new();
    for s in &raw.checks.assumptions {
        match AssumptionId::parse(s) {
            Some(id) => assumptions.push(id),
            None => failures.push(format!("unknown assumption id `{s}`")),
        }
    }
    let oracle = raw.checks.oracle.as_ref().map(|o| {
        for (i, s) in o.starts.iter().enumerate() {
            if dim > 0 && s.len() != dim {
                failures.push(format!("oracle start {i} has {} coordinates, expected {dim}", s.len()));
            }
        }
        OracleRequest { starts: o.starts.clone(), ensemble: o.ensemble.unwrap_or(16) }
    });

    let mut tols = Tolerances::default();
    let t = &raw.tolerances;
    if let Some(v) = t.tau_mem {
        tols.tau_mem = v;
    }
    if let Some(v) = t.eps_tan {
        tols.eps_tan = v;
    }
    if let Some(v) = t.eps_nrm {
        tols.eps_nrm = v;
    }
    if let Some(v) = t.eps_dual {
        tols.eps_dual = v;
    }
    if let Some(v) = t.eps_cond {
        tols.eps_cond = v;
    }
    if let Some(v) = t.eps_const {
        tols.eps_const = v;
    }
    if let Some(v) = t.tau_kink {
        tols.tau_kink = v;
    }
    if let Some(v) = t.tau_flow {
        tols.tau_flow = v;
    }
    if let Some(v) = t.tol_mono_abs {
        tols.tol_mono_abs = v;
    }
    if let Some(v) = t.jump_increase {
        tols.jump_increase = v;
    }

    let dt = raw.simulation.dt.unwrap_or(1e-3);
    let horizon = raw.simulation.horizon.unwrap_or(2.0);
    if dt <= 0.0 || dt > 1e-1 {
        failures.push(format!("simulation.dt must be in (0, 0.1], got {dt}"));
    }
    if horizon <= 0.0 {
        failures.push(format!("simulation.horizon must be positive, got {horizon}"));
    }

    // sampling-box coverage: every expression must evaluate somewhere usable
    if let (Some(set), Some(map), Some(function)) = (&set, &map, &function) {
        if bounds.len() == dim && dim > 0 {
            let probes = crate::sampling::box_lattice(&bounds, 5);
            let mut covered = 0usize;
            for p in &probes {
                if function.value(p, tols.tau_mem).is_ok() {
                    covered += 1;
                }
                let _ = set.violation(p);
                let _ = map.image(p, tols.tau_mem);
            }
            if covered == 0 {
                failures.push("function pieces cover no point of the sampling box".into());
            }
        }
    }

    if !failures.is_empty() {
        return Err(ScenarioError::Validation { path: origin.to_string(), failures });
    }
    Ok(Scenario {
        name,
        dim,
        bounds,
        set: set.unwrap(),
        map: map.unwrap(),
        function: function.unwrap(),
        boundary_resolution: raw.grids.boundary.unwrap_or(21),
        interior_resolution: raw.grids.interior.unwrap_or(21),
        radii: raw.grids.radii.unwrap_or_else(|| crate::tol::NEIGHBORHOOD_RADII.to_vec()),
        conditions,
        assumptions,
        oracle,
        dt,
        horizon,
        seed: raw.seeds.root.unwrap_or(42),
        tols,
    })
}
