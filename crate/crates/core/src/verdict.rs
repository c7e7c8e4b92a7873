//! Infinitesimal condition checks, side-assumption diagnostics, and the
//! rule table that combines them into a conclusion about the nonincrease
//! property.
//!
//! Each condition is a universally quantified inequality `<eta, zeta> <= 0`
//! whose three ingredients vary by identifier: the quantifier domain (the
//! set of points from which nontrivial solutions start, or the interior of
//! the constraint set), the derivative object (gradient, Clarke gradient
//! vertices, proximal subgradients, or proximal normals of the constrained
//! epigraph), and the velocity side (admissible velocities only, or the
//! whole image). Derivative polytopes are enumerated by vertices (the
//! inequality is bilinear, so vertex extremes decide it); normal cones are
//! sampled by unit directions plus distinguished seeds and filtered through
//! the realized-projection test.
//!
//! The rule table is data, not branching: each row states the hypotheses a
//! statement needs and the direction it grants. `apply_theory` scans the
//! rows against the computed verdicts and reports the strongest usable
//! direction.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::flows::{self, Classification, CtildeLabel};
use crate::geometry::{ConstraintSet, QueryCtx};
use crate::inclusion::VelocityMap;
use crate::nonsmooth::{FnClass, PiecewiseFunction};
use crate::outcome::{Budget, ProxyStatus, Verdict, Witness};
use crate::sampling::{self, add_scaled, dist, dot, norm, unit_directions};

/// The system triple under analysis.
#[derive(Clone, Copy)]
pub struct System<'a> {
    pub set: &'a ConstraintSet,
    pub map: &'a VelocityMap,
    pub function: &'a PiecewiseFunction,
}

// ---------------------------------------------------------------------------
// condition identifiers

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConditionId {
    ProxCone,
    ProxPt,
    ProxInt,
    Clarke,
    ClarkeNp,
    ClarkeInt,
    ClarkeNpInt,
    GradAeInt,
    Grad,
    GradInt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Ctilde,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DerivativeObject {
    /// Proximal normals of `epi B ∩ (C x R)`, paired against velocities by
    /// their state components.
    ProxNormalConstrainedEpi,
    /// Proximal subgradients via the unconstrained epigraph.
    ProxSubdifferential,
    ClarkeVertices,
    /// Clarke vertices where the gradient exists (singleton), skipping
    /// nondifferentiability points (almost-everywhere quantifier).
    GradientWhereDefined,
    /// The gradient of a continuously differentiable function.
    Gradient,
}

impl ConditionId {
    pub const ALL: [ConditionId; 10] = [
        ConditionId::ProxCone,
        ConditionId::ProxPt,
        ConditionId::ProxInt,
        ConditionId::Clarke,
        ConditionId::ClarkeNp,
        ConditionId::ClarkeInt,
        ConditionId::ClarkeNpInt,
        ConditionId::GradAeInt,
        ConditionId::Grad,
        ConditionId::GradInt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ConditionId::ProxCone => "COND-PROX-CONE",
            ConditionId::ProxPt => "COND-PROX-PT",
            ConditionId::ProxInt => "COND-PROX-INT",
            ConditionId::Clarke => "COND-CLARKE",
            ConditionId::ClarkeNp => "COND-CLARKE-NP",
            ConditionId::ClarkeInt => "COND-CLARKE-INT",
            ConditionId::ClarkeNpInt => "COND-CLARKE-NP-INT",
            ConditionId::GradAeInt => "COND-GRAD-AE-INT",
            ConditionId::Grad => "COND-GRAD",
            ConditionId::GradInt => "COND-GRAD-INT",
        }
    }

    pub fn parse(s: &str) -> Option<ConditionId> {
        ConditionId::ALL.iter().copied().find(|c| c.name() == s)
    }

    pub fn domain(&self) -> Domain {
        match self {
            ConditionId::ProxCone | ConditionId::Clarke | ConditionId::ClarkeNp | ConditionId::Grad => {
                Domain::Ctilde
            }
            _ => Domain::Interior,
        }
    }

    fn derivative(&self) -> DerivativeObject {
        match self {
            ConditionId::ProxCone => DerivativeObject::ProxNormalConstrainedEpi,
            ConditionId::ProxPt | ConditionId::ProxInt => DerivativeObject::ProxSubdifferential,
            ConditionId::Clarke | ConditionId::ClarkeNp | ConditionId::ClarkeInt | ConditionId::ClarkeNpInt => {
                DerivativeObject::ClarkeVertices
            }
            ConditionId::GradAeInt => DerivativeObject::GradientWhereDefined,
            ConditionId::Grad | ConditionId::GradInt => DerivativeObject::Gradient,
        }
    }

    /// Whether the velocity quantifier is restricted to `F ∩ T_C`.
    fn admissible_only(&self) -> bool {
        matches!(
            self,
            ConditionId::ProxCone | ConditionId::Clarke | ConditionId::ClarkeNp | ConditionId::Grad
        )
    }

    /// The "constant inner product across all gradient vertices" clause.
    fn constant_clause(&self) -> bool {
        matches!(self, ConditionId::ClarkeNp | ConditionId::ClarkeNpInt)
    }

    /// Minimum function class the derivative object needs.
    pub fn admits_class(&self, class: FnClass) -> bool {
        match self.derivative() {
            DerivativeObject::ProxNormalConstrainedEpi | DerivativeObject::ProxSubdifferential => true,
            DerivativeObject::ClarkeVertices | DerivativeObject::GradientWhereDefined => {
                class.is_lipschitz()
            }
            DerivativeObject::Gradient => class.is_c1(),
        }
    }
}

impl std::fmt::Display for ConditionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// grids

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub point: Vec<f64>,
    pub class: Classification,
}

/// Classifies a point list against the nontriviality rules (parallel,
/// order-preserving).
pub fn classify_grid(sys: &System, points: &[Vec<f64>], ctx: &QueryCtx) -> Vec<GridPoint> {
    points
        .par_iter()
        .map(|p| GridPoint { point: p.clone(), class: flows::classify_nontrivial(sys.set, sys.map, p, ctx) })
        .collect()
}

// ---------------------------------------------------------------------------
// condition checking

#[derive(Debug, Clone)]
pub struct ConditionOutcome {
    pub id: ConditionId,
    pub verdict: Verdict,
    /// Inner products within `eps_cond` of zero (near-boundary ties).
    pub ties: usize,
    pub points_total: usize,
    pub points_skipped: usize,
}

#[derive(Debug, Clone, Default)]
struct PointReport {
    skipped: bool,
    unknown: bool,
    violations: Vec<Witness>,
    inconclusive: usize,
    ties: usize,
    directions: usize,
    velocities: usize,
}

pub fn check_condition(sys: &System, id: ConditionId, grid: &[GridPoint], ctx: &QueryCtx) -> ConditionOutcome {
    let class = sys.function.class();
    if !id.admits_class(class) {
        return ConditionOutcome {
            id,
            verdict: Verdict::inconclusive(
                format!("condition {id} needs a stronger function class than {class}"),
                Budget::default(),
            ),
            ties: 0,
            points_total: grid.len(),
            points_skipped: grid.len(),
        };
    }
    let reports: Vec<PointReport> = grid
        .par_iter()
        .map(|gp| evaluate_point(sys, id, gp, ctx))
        .collect();
    let mut budget = Budget { points: grid.len(), ..Budget::default() };
    let mut witnesses = Vec::new();
    let mut ties = 0usize;
    let mut skipped = 0usize;
    for r in &reports {
        if r.skipped {
            skipped += 1;
            continue;
        }
        if r.unknown {
            budget.unknown_points += 1;
        }
        budget.inconclusive += r.inconclusive;
        budget.directions = budget.directions.max(r.directions);
        budget.velocities = budget.velocities.max(r.velocities);
        ties += r.ties;
        if witnesses.len() < 16 {
            witnesses.extend(r.violations.iter().cloned());
        }
    }
    let verdict = if !witnesses.is_empty() {
        witnesses.truncate(16);
        Verdict::violated(witnesses, budget)
    } else if grid.len() == skipped {
        Verdict::inconclusive("no grid point lies in the quantifier domain", budget)
    } else {
        Verdict::holds(budget)
    };
    ConditionOutcome { id, verdict, ties, points_total: grid.len(), points_skipped: skipped }
}

fn evaluate_point(sys: &System, id: ConditionId, gp: &GridPoint, ctx: &QueryCtx) -> PointReport {
    let mut report = PointReport::default();
    let x = &gp.point;
    match id.domain() {
        Domain::Ctilde => match gp.class.label {
            CtildeLabel::TrivialOnly => {
                report.skipped = true;
                return report;
            }
            CtildeLabel::Unknown => report.unknown = true,
            CtildeLabel::Nontrivial => {}
        },
        Domain::Interior => {
            if !(sys.set.is_whole_space() || sys.set.interior_margin(x) > 1e-6) {
                report.skipped = true;
                return report;
            }
        }
    }

    // velocity side
    let velocities: Vec<Vec<f64>> = if id.admissible_only() {
        match sys.map.admissible_velocities(sys.set, x, 10, ctx) {
            Ok(samples) => {
                report.inconclusive += samples.iter().filter(|s| s.admissible.is_none()).count();
                samples
                    .into_iter()
                    .filter(|s| s.admissible == Some(true))
                    .map(|s| s.velocity)
                    .collect()
            }
            Err(_) => {
                report.inconclusive += 1;
                return report;
            }
        }
    } else {
        match sys.map.image(x, ctx.tols.tau_mem) {
            Ok(v) => v,
            Err(_) => {
                report.inconclusive += 1;
                return report;
            }
        }
    };
    report.velocities = velocities.len();
    if velocities.is_empty() {
        return report;
    }

    // derivative side
    let etas: Vec<Vec<f64>> = match id.derivative() {
        DerivativeObject::Gradient | DerivativeObject::GradientWhereDefined | DerivativeObject::ClarkeVertices => {
            match sys.function.clarke_gradient(x, ctx.tols.tau_mem, ctx.tols.tau_kink) {
                Ok(poly) => {
                    if matches!(id.derivative(), DerivativeObject::GradientWhereDefined)
                        && poly.vertices.len() != 1
                    {
                        report.skipped = true; // gradient does not exist here
                        return report;
                    }
                    poly.vertices
                }
                Err(_) => {
                    report.inconclusive += 1;
                    return report;
                }
            }
        }
        DerivativeObject::ProxSubdifferential => match proximal_subgradients(sys, x, &mut report, ctx) {
            Some(etas) => etas,
            None => return report,
        },
        DerivativeObject::ProxNormalConstrainedEpi => {
            match constrained_epigraph_normals(sys, x, 64 * (sys.set.dim() + 1), &mut report, ctx) {
                Some(etas) => etas,
                None => return report,
            }
        }
    };

    // the constant-inner-product clause restricts which velocities count
    let clarke_for_clause: Option<Vec<Vec<f64>>> = if id.constant_clause() {
        match sys.function.clarke_gradient(x, ctx.tols.tau_mem, ctx.tols.tau_kink) {
            Ok(p) => Some(p.vertices),
            Err(_) => {
                report.inconclusive += 1;
                return report;
            }
        }
    } else {
        None
    };

    for zeta in &velocities {
        if let Some(vertices) = &clarke_for_clause {
            let ips: Vec<f64> = vertices.iter().map(|v| dot(v, zeta)).collect();
            let spread = ips.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - ips.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > ctx.tols.eps_const * norm(zeta).max(1.0) {
                continue; // no constant c exists for this velocity
            }
        }
        for eta in &etas {
            let scale = (norm(eta) * norm(zeta)).max(1.0);
            let ip = dot(eta, zeta);
            if ip > ctx.tols.eps_cond * scale {
                report.violations.push(Witness::pair(x, eta, zeta, ip));
                if report.violations.len() >= 4 {
                    return report;
                }
            } else if ip.abs() <= ctx.tols.eps_cond * scale {
                report.ties += 1;
            }
        }
    }
    report
}

/// Proximal subgradients at `x` by direction sampling of the unconstrained
/// epigraph's normal cone, keeping directions with a negative vertical
/// component and rescaling them to slope form.
fn proximal_subgradients(
    sys: &System,
    x: &[f64],
    report: &mut PointReport,
    ctx: &QueryCtx,
) -> Option<Vec<Vec<f64>>> {
    let n = sys.set.dim();
    let epi = sys.function.epigraph(&ConstraintSet::whole_space(n));
    let value = match sys.function.value(x, ctx.tols.tau_mem) {
        Ok(v) => v,
        Err(_) => {
            report.inconclusive += 1;
            return None;
        }
    };
    let mut base = x.to_vec();
    base.push(value);
    let dirs = normal_direction_samples(sys, x, n, 64 * (n + 1), ctx);
    report.directions = dirs.len();
    let mut bounds = ctx.bounds.to_vec();
    bounds.push((-100.0, 100.0));
    let epi_ctx = QueryCtx { bounds: &bounds, tols: ctx.tols, seed: ctx.seed };
    let mut etas: Vec<Vec<f64>> = Vec::new();
    for dir in dirs {
        match epi.realized_proximal_normal(&base, &dir, &epi_ctx) {
            Ok(Some(realized)) => {
                let alpha = realized[n];
                if alpha < -1e-8 {
                    let eta: Vec<f64> = realized[..n].iter().map(|z| z / -alpha).collect();
                    push_unique(&mut etas, eta);
                }
            }
            Ok(None) => {}
            Err(_) => report.inconclusive += 1,
        }
    }
    Some(etas)
}

/// Proximal normals of `epi B ∩ (C x R)` at `(x, B(x))`, returned as their
/// state components (the inequality pairs them against state velocities).
fn constrained_epigraph_normals(
    sys: &System,
    x: &[f64],
    budget: usize,
    report: &mut PointReport,
    ctx: &QueryCtx,
) -> Option<Vec<Vec<f64>>> {
    let n = sys.set.dim();
    let epi = sys.function.epigraph(sys.set);
    let value = match sys.function.value(x, ctx.tols.tau_mem) {
        Ok(v) => v,
        Err(_) => {
            report.inconclusive += 1;
            return None;
        }
    };
    let mut base = x.to_vec();
    base.push(value);
    let dirs = normal_direction_samples(sys, x, n, budget, ctx);
    report.directions = dirs.len();
    let mut bounds = ctx.bounds.to_vec();
    bounds.push((-100.0, 100.0));
    let epi_ctx = QueryCtx { bounds: &bounds, tols: ctx.tols, seed: ctx.seed };
    let mut etas: Vec<Vec<f64>> = Vec::new();
    for dir in dirs {
        match epi.realized_proximal_normal(&base, &dir, &epi_ctx) {
            Ok(Some(realized)) => {
                let zeta: Vec<f64> = realized[..n].to_vec();
                if norm(&zeta) > 1e-10 {
                    push_unique(&mut etas, zeta);
                }
            }
            Ok(None) => {}
            Err(_) => report.inconclusive += 1,
        }
    }
    Some(etas)
}

/// Unit direction samples in the epigraph space, seeded with the
/// distinguished directions: (gradient vertex, -1) for every active piece
/// branch, active constraint gradients of `C` (horizontal), and the pure
/// vertical.
fn normal_direction_samples(sys: &System, x: &[f64], n: usize, count: usize, ctx: &QueryCtx) -> Vec<Vec<f64>> {
    let mut dirs = unit_directions(
        n + 1,
        count,
        sampling::derive_seed(ctx.seed, 0xd1a, sampling::point_hash(x)),
    );
    let mut push = |mut d: Vec<f64>| {
        let dn = norm(&d);
        if dn > 1e-12 {
            d.iter_mut().for_each(|c| *c /= dn);
            if !dirs.iter().any(|e| dist(e, &d) <= 1e-12) {
                dirs.push(d);
            }
        }
    };
    // vertical
    let mut vertical = vec![0.0; n + 1];
    vertical[n] = -1.0;
    push(vertical);
    // piece gradients as subgradient seeds
    for piece in sys.function.pieces() {
        if piece.guard.contains(x, ctx.tols.tau_mem).unwrap_or(false) {
            for branch in piece.expr.smooth_branches(x, ctx.tols.tau_kink).into_iter().flatten() {
                if let Ok(g) = branch.gradient(x, ctx.tols.tau_kink) {
                    let mut d = g;
                    d.push(-1.0);
                    push(d);
                }
            }
        }
    }
    // active constraint gradients of C, both signs, horizontal
    collect_active_gradients(sys.set, x, &mut |g| {
        let mut d: Vec<f64> = g.to_vec();
        d.push(0.0);
        push(d.clone());
        d.iter_mut().for_each(|c| *c = -*c);
        push(d);
    });
    dirs
}

fn collect_active_gradients(set: &ConstraintSet, x: &[f64], sink: &mut impl FnMut(&[f64])) {
    for branch in set.disjuncts() {
        for leaf in branch {
            if let Ok(g) = leaf.expr.evaluate(x) {
                if g.abs() <= 1e-7 {
                    if let Ok(grad) = leaf.expr.gradient(x, 1e-12) {
                        if norm(&grad) > 1e-10 {
                            sink(&grad);
                        }
                    }
                }
            }
        }
    }
}

fn push_unique(list: &mut Vec<Vec<f64>>, v: Vec<f64>) {
    if !list.iter().any(|w| dist(w, &v) <= 1e-9) {
        list.push(v);
    }
}

// ---------------------------------------------------------------------------
// assumptions

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AssumptionId {
    A1,
    M1,
    M1Prime,
    M2,
    A2,
    A3,
    A4,
    A5,
}

impl AssumptionId {
    pub const ALL: [AssumptionId; 8] = [
        AssumptionId::A1,
        AssumptionId::M1,
        AssumptionId::M1Prime,
        AssumptionId::M2,
        AssumptionId::A2,
        AssumptionId::A3,
        AssumptionId::A4,
        AssumptionId::A5,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AssumptionId::A1 => "A1",
            AssumptionId::M1 => "M1",
            AssumptionId::M1Prime => "M1'",
            AssumptionId::M2 => "M2",
            AssumptionId::A2 => "A2",
            AssumptionId::A3 => "A3",
            AssumptionId::A4 => "A4",
            AssumptionId::A5 => "A5",
        }
    }

    pub fn parse(s: &str) -> Option<AssumptionId> {
        AssumptionId::ALL.iter().copied().find(|a| a.name() == s)
    }
}

impl std::fmt::Display for AssumptionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionOutcome {
    pub id: AssumptionId,
    pub verdict: Verdict,
    pub proxy: ProxyStatus,
    pub note: String,
}

/// Sampled structural diagnostics of the velocity map, reused by the rule
/// table. `continuous` and `lipschitz` are sample-based unless the map has a
/// single unconditional branch of smooth fields.
#[derive(Debug, Clone)]
pub struct MapDiagnostics {
    pub continuous: bool,
    pub lipschitz: bool,
    pub lipschitz_estimate: f64,
    pub usc_defect: f64,
    pub lsc_defect: f64,
    pub exact: bool,
}

pub fn map_diagnostics(sys: &System, grid: &[Vec<f64>], ctx: &QueryCtx) -> MapDiagnostics {
    let report = sys.map.continuity_diagnostic(grid, 1e-3, ctx.tols.tau_mem, ctx.seed);
    let single_branch = sys.map.branches().len() == 1 && sys.map.branches()[0].guard.is_whole_space();
    MapDiagnostics {
        continuous: report.usc_defect <= 1e-3 && report.lsc_defect <= 1e-3,
        lipschitz: report.lipschitz_estimate.is_finite(),
        lipschitz_estimate: report.lipschitz_estimate,
        usc_defect: report.usc_defect,
        lsc_defect: report.lsc_defect,
        exact: single_branch,
    }
}

/// Simulation parameters consumed by the trajectory-based diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SimParams {
    pub dt: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn check_assumption(
    sys: &System,
    id: AssumptionId,
    boundary_grid: &[GridPoint],
    radii: &[f64],
    sim: SimParams,
    ctx: &QueryCtx,
) -> AssumptionOutcome {
    match id {
        AssumptionId::A1 => check_a1(sys, boundary_grid, ctx),
        AssumptionId::M1 => check_m1(sys, boundary_grid, radii, ctx),
        AssumptionId::M1Prime => check_m1_prime(sys, boundary_grid, sim, ctx),
        AssumptionId::M2 => check_m2(sys, boundary_grid, radii, ctx),
        AssumptionId::A2 => check_a2(sys, boundary_grid, radii, ctx),
        AssumptionId::A3 => check_a3(sys, boundary_grid, radii, ctx),
        AssumptionId::A4 => check_a4(sys, boundary_grid, sim, ctx),
        AssumptionId::A5 => check_a5(sys, boundary_grid, radii, ctx),
    }
}

fn check_a1(sys: &System, grid: &[GridPoint], ctx: &QueryCtx) -> AssumptionOutcome {
    let points: Vec<Vec<f64>> = grid.iter().map(|g| g.point.clone()).collect();
    let lattice = sampling::box_lattice(ctx.bounds, 9);
    let all: Vec<Vec<f64>> = points.iter().cloned().chain(lattice).collect();
    let diag = map_diagnostics(sys, &all, ctx);
    let budget = Budget { points: all.len(), ..Budget::default() };
    let verdict = if diag.usc_defect <= 1e-3 {
        Verdict::holds(budget)
    } else {
        Verdict::violated(vec![Witness { point: Vec::new(), eta: None, zeta: None, value: diag.usc_defect }], budget)
    };
    AssumptionOutcome {
        id: AssumptionId::A1,
        verdict,
        proxy: if diag.exact { ProxyStatus::Exact } else { ProxyStatus::Proxy },
        note: format!(
            "images are finite hulls (compact, convex by construction); usc defect {:.3e}, lsc defect {:.3e}, Lipschitz estimate {:.3e}",
            diag.usc_defect, diag.lsc_defect, diag.lipschitz_estimate
        ),
    }
}

/// Admissible velocity options at a point: flagged samples restricted to
/// the admitted ones.
fn admitted_velocities(sys: &System, x: &[f64], ctx: &QueryCtx) -> Option<Vec<Vec<f64>>> {
    sys.map
        .admissible_velocities(sys.set, x, 10, ctx)
        .ok()
        .map(|s| s.into_iter().filter(|v| v.admissible == Some(true)).map(|v| v.velocity).collect())
}

/// Nearby boundary points of `C` around `x` at the given radius.
fn boundary_shell(sys: &System, x: &[f64], radius: f64, ctx: &QueryCtx) -> Vec<Vec<f64>> {
    let dirs = unit_directions(
        sys.set.dim(),
        16,
        sampling::derive_seed(ctx.seed, 0x5e11, sampling::point_hash(x)),
    );
    let mut out = Vec::new();
    for u in &dirs {
        let probe = add_scaled(x, radius, u);
        let p = if sys.set.violation(&probe) <= ctx.tols.tau_mem {
            probe
        } else {
            match sys.set.distance_and_project(&probe, ctx) {
                Ok(p) if p.distance <= 2.0 * radius => p.point,
                _ => continue,
            }
        };
        if sys.set.interior_margin(&p) <= 1e-6 && dist(&p, x) > 1e-9 {
            out.push(p);
        }
    }
    out
}

/// Lower semicontinuity proxy for the continuous-selection hypothesis: each
/// admissible velocity at a boundary point must have a nearby admissible
/// velocity at every nearby boundary point.
fn check_m1(sys: &System, grid: &[GridPoint], radii: &[f64], ctx: &QueryCtx) -> AssumptionOutcome {
    let mut budget = Budget::default();
    for gp in grid {
        if gp.class.label != CtildeLabel::Nontrivial {
            // assumption domains are quantified over certain C-tilde points;
            // unknowns are counted, not evaluated
            if gp.class.label == CtildeLabel::Unknown {
                budget.unknown_points += 1;
            }
            continue;
        }
        budget.points += 1;
        let x = &gp.point;
        let at_x = match admitted_velocities(sys, x, ctx) {
            Some(v) if !v.is_empty() => v,
            Some(_) => continue, // M1 is conditional on a nonempty intersection
            None => {
                budget.inconclusive += 1;
                continue;
            }
        };
        // lsc must hold on arbitrarily small neighborhoods: test the
        // smallest radius
        let radius = radii.iter().cloned().fold(f64::INFINITY, f64::min);
        for y in boundary_shell(sys, x, radius, ctx) {
            let at_y = match admitted_velocities(sys, &y, ctx) {
                Some(v) => v,
                None => {
                    budget.inconclusive += 1;
                    continue;
                }
            };
            for v in &at_x {
                let tol = 0.1 * (1.0 + norm(v));
                let reachable = at_y.iter().any(|w| dist(w, v) <= tol);
                if !reachable {
                    return AssumptionOutcome {
                        id: AssumptionId::M1,
                        verdict: Verdict::violated(
                            vec![Witness { point: x.clone(), eta: None, zeta: Some(v.clone()), value: radius }],
                            budget,
                        ),
                        proxy: ProxyStatus::Proxy,
                        note: format!(
                            "admissible set loses {v:?} near {y:?}; lower-semicontinuity proxy for the selection hypothesis"
                        ),
                    };
                }
            }
        }
    }
    AssumptionOutcome {
        id: AssumptionId::M1,
        verdict: Verdict::holds(budget),
        proxy: ProxyStatus::Proxy,
        note: "lower-semicontinuity proxy of the admissible velocity map on boundary samples".into(),
    }
}

/// Trajectory-tangency variant: every admissible vertex must be realized as
/// a difference quotient of some surviving simulated solution.
fn check_m1_prime(sys: &System, grid: &[GridPoint], sim: SimParams, ctx: &QueryCtx) -> AssumptionOutcome {
    let mut budget = Budget::default();
    let probe_grid = sampling::box_lattice(ctx.bounds, 11);
    let v_max = sys.map.velocity_bound(&probe_grid, ctx.tols.tau_mem);
    for gp in grid {
        if gp.class.label != CtildeLabel::Nontrivial {
            if gp.class.label == CtildeLabel::Unknown {
                budget.unknown_points += 1;
            }
            continue;
        }
        budget.points += 1;
        let x = &gp.point;
        let vertices = match sys.map.image(x, ctx.tols.tau_mem) {
            Ok(v) => v,
            Err(_) => {
                budget.inconclusive += 1;
                continue;
            }
        };
        for v in &vertices {
            let tangent = match sys.set.in_contingent_cone(x, v, ctx) {
                Ok(r) => r.member,
                Err(_) => {
                    budget.inconclusive += 1;
                    continue;
                }
            };
            if !tangent {
                continue;
            }
            let seed = sampling::derive_seed(ctx.seed, 0x317a, sampling::point_hash(x));
            let traj = flows::simulate(
                sys.set,
                sys.map,
                x,
                &flows::Strategy::TangentialBias(v.clone()),
                sim.dt,
                12.0 * sim.dt,
                seed,
                ctx,
            );
            let tol = (0.05 * (1.0 + norm(v))).max(20.0 * sim.dt * v_max);
            let survives = traj.step_count() >= 10;
            let mut matched = false;
            for k in 1..=traj.step_count().min(10) {
                let h = traj.times[k] - traj.times[0];
                if h <= 0.0 {
                    continue;
                }
                let quotient: Vec<f64> =
                    traj.states[k].iter().zip(&traj.states[0]).map(|(b, a)| (b - a) / h).collect();
                if dist(&quotient, v) <= tol {
                    matched = true;
                }
            }
            if !(survives && matched) {
                return AssumptionOutcome {
                    id: AssumptionId::M1Prime,
                    verdict: Verdict::violated(
                        vec![Witness {
                            point: x.clone(),
                            eta: None,
                            zeta: Some(v.clone()),
                            value: traj.step_count() as f64,
                        }],
                        budget,
                    ),
                    proxy: ProxyStatus::SimulationBased,
                    note: format!(
                        "no surviving simulated solution is tangent to {v:?} (trajectory lasted {} steps)",
                        traj.step_count()
                    ),
                };
            }
        }
    }
    AssumptionOutcome {
        id: AssumptionId::M1Prime,
        verdict: Verdict::holds(budget),
        proxy: ProxyStatus::SimulationBased,
        note: "difference-quotient tangency of simulated solutions to each admissible vertex".into(),
    }
}

/// `F(x) ⊂ T_C(x)` on shrinking boundary neighborhoods of each sampled
/// boundary point with nontrivial solutions.
fn check_m2(sys: &System, grid: &[GridPoint], radii: &[f64], ctx: &QueryCtx) -> AssumptionOutcome {
    let mut budget = Budget::default();
    let mut max_radius_needed = 0.0f64;
    let mut witnesses: Vec<Witness> = Vec::new();
    for gp in grid {
        if gp.class.label != CtildeLabel::Nontrivial {
            if gp.class.label == CtildeLabel::Unknown {
                budget.unknown_points += 1;
            }
            continue;
        }
        budget.points += 1;
        let x = &gp.point;
        let mut passed_at = None;
        let mut witness: Option<Witness> = None;
        for radius in radii {
            // the inner quantifier ranges over the whole boundary near x
            let mut neighborhood = vec![x.clone()];
            neighborhood.extend(boundary_shell(sys, x, *radius, ctx));
            let mut all_ok = true;
            for y in &neighborhood {
                let vertices = match sys.map.image(y, ctx.tols.tau_mem) {
                    Ok(v) => v,
                    Err(_) => {
                        budget.inconclusive += 1;
                        all_ok = false;
                        break;
                    }
                };
                for v in &vertices {
                    match sys.set.in_contingent_cone(y, v, ctx) {
                        Ok(r) if r.member => {}
                        Ok(r) => {
                            all_ok = false;
                            if witness.is_none() {
                                witness = Some(Witness {
                                    point: y.clone(),
                                    eta: None,
                                    zeta: Some(v.clone()),
                                    value: r.residual,
                                });
                            }
                            break;
                        }
                        Err(_) => {
                            budget.inconclusive += 1;
                            all_ok = false;
                            break;
                        }
                    }
                }
                if !all_ok {
                    break;
                }
            }
            if all_ok {
                passed_at = Some(*radius);
                break;
            }
        }
        match passed_at {
            Some(r) => max_radius_needed = max_radius_needed.max(r),
            None => {
                if witnesses.len() < 16 {
                    witnesses.push(witness.unwrap_or(Witness::at(x, f64::NAN)));
                }
            }
        }
    }
    if !witnesses.is_empty() {
        return AssumptionOutcome {
            id: AssumptionId::M2,
            verdict: Verdict::violated(witnesses, budget),
            proxy: ProxyStatus::Exact,
            note: "an image vertex leaves the contingent cone at every tested radius".into(),
        };
    }
    AssumptionOutcome {
        id: AssumptionId::M2,
        verdict: Verdict::holds(budget),
        proxy: ProxyStatus::Exact,
        note: format!("holds on boundary samples; largest neighborhood radius needed {max_radius_needed:.1e}"),
    }
}

/// Lower semicontinuity sample of the state components of the constrained
/// epigraph's proximal normal cone.
fn check_a2(sys: &System, grid: &[GridPoint], radii: &[f64], ctx: &QueryCtx) -> AssumptionOutcome {
    let mut budget = Budget::default();
    let n = sys.set.dim();
    let normals_at = |x: &[f64], report: &mut PointReport| -> Option<Vec<Vec<f64>>> {
        // a light direction budget: this is a continuity sample, not the
        // condition quantifier
        let etas = constrained_epigraph_normals(sys, x, 16, report, ctx)?;
        Some(
            etas.into_iter()
                .filter_map(|z| {
                    let zn = norm(&z);
                    if zn > 1e-8 {
                        Some(z.iter().map(|c| c / zn).collect::<Vec<f64>>())
                    } else {
                        None
                    }
                })
                .collect(),
        )
    };
    let _ = n;
    for gp in grid {
        if gp.class.label != CtildeLabel::Nontrivial {
            if gp.class.label == CtildeLabel::Unknown {
                budget.unknown_points += 1;
            }
            continue;
        }
        budget.points += 1;
        let x = &gp.point;
        let mut report = PointReport::default();
        let at_x = match normals_at(x, &mut report) {
            Some(v) => v,
            None => {
                budget.inconclusive += 1;
                continue;
            }
        };
        budget.inconclusive += report.inconclusive;
        if at_x.is_empty() {
            continue;
        }
        let radius = radii.iter().cloned().fold(f64::INFINITY, f64::min);
        for y in boundary_shell(sys, x, radius, ctx).into_iter().take(8) {
            let mut report = PointReport::default();
            let at_y = match normals_at(&y, &mut report) {
                Some(v) => v,
                None => {
                    budget.inconclusive += 1;
                    continue;
                }
            };
            for zhat in &at_x {
                if !at_y.iter().any(|w| dist(w, zhat) <= 0.2) {
                    return AssumptionOutcome {
                        id: AssumptionId::A2,
                        verdict: Verdict::violated(
                            vec![Witness { point: x.clone(), eta: Some(zhat.clone()), zeta: None, value: radius }],
                            budget,
                        ),
                        proxy: ProxyStatus::Proxy,
                        note: format!("projected proximal normal {zhat:?} has no nearby counterpart at {y:?}"),
                    };
                }
            }
        }
    }
    AssumptionOutcome {
        id: AssumptionId::A2,
        verdict: Verdict::holds(budget),
        proxy: ProxyStatus::Proxy,
        note: "lower-semicontinuity sample of projected proximal normals".into(),
    }
}

/// Interior reachability: every neighborhood of a boundary point of `C`
/// must meet `int(C)`; tested on the caller's radii, smallest first.
fn check_a3(sys: &System, grid: &[GridPoint], radii: &[f64], ctx: &QueryCtx) -> AssumptionOutcome {
    let mut budget = Budget::default();
    let mut max_radius_needed = 0.0f64;
    let mut sorted: Vec<f64> = radii.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for gp in grid {
        budget.points += 1;
        let x = &gp.point;
        let dirs = unit_directions(
            sys.set.dim(),
            16,
            sampling::derive_seed(ctx.seed, 0xa3, sampling::point_hash(x)),
        );
        let mut found: Option<f64> = None;
        'radii: for radius in &sorted {
            for u in &dirs {
                for frac in [0.25, 0.5, 1.0] {
                    let probe = add_scaled(x, frac * radius, u);
                    if sys.set.contains(&probe, ctx.tols.tau_mem).unwrap_or(false)
                        && sys.set.interior_margin(&probe) > 1e-6
                    {
                        found = Some(*radius);
                        break 'radii;
                    }
                }
            }
        }
        match found {
            Some(r) => max_radius_needed = max_radius_needed.max(r),
            None => {
                return AssumptionOutcome {
                    id: AssumptionId::A3,
                    verdict: Verdict::violated(
                        vec![Witness::at(x, sorted.last().copied().unwrap_or(f64::NAN))],
                        budget,
                    ),
                    proxy: ProxyStatus::Proxy,
                    note: format!("no interior point found within the tested radii around {x:?}"),
                };
            }
        }
    }
    AssumptionOutcome {
        id: AssumptionId::A3,
        verdict: Verdict::holds(budget),
        proxy: ProxyStatus::Proxy,
        note: format!("interior reachable from boundary samples; largest radius needed {max_radius_needed:.1e}"),
    }
}

fn check_a4(sys: &System, grid: &[GridPoint], sim: SimParams, ctx: &QueryCtx) -> AssumptionOutcome {
    let samples: Vec<Vec<f64>> = grid.iter().map(|g| g.point.clone()).collect();
    let verdict = flows::is_precontractive(sys.set, sys.map, sys.set, &samples, sim.dt, ctx.seed, ctx);
    AssumptionOutcome {
        id: AssumptionId::A4,
        verdict,
        proxy: ProxyStatus::SimulationBased,
        note: "pre-contractivity of cl(C) from simulated boundary ensembles".into(),
    }
}

/// Continuity of the function on boundary points with nontrivial solutions,
/// sampled along `cl(C)`.
fn check_a5(sys: &System, grid: &[GridPoint], radii: &[f64], ctx: &QueryCtx) -> AssumptionOutcome {
    let mut budget = Budget::default();
    let radius = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    // slack for Lipschitz variation across the shell: sampled slope bound
    let lattice = sampling::box_lattice(ctx.bounds, 9);
    let slope = sys.function.sampled_gradient_bound(&lattice, ctx.tols.tau_mem, ctx.tols.tau_kink);
    for gp in grid {
        if gp.class.label != CtildeLabel::Nontrivial {
            if gp.class.label == CtildeLabel::Unknown {
                budget.unknown_points += 1;
            }
            continue;
        }
        budget.points += 1;
        let x = &gp.point;
        let bx = match sys.function.value(x, ctx.tols.tau_mem) {
            Ok(v) => v,
            Err(_) => {
                budget.inconclusive += 1;
                continue;
            }
        };
        let dirs = unit_directions(
            sys.set.dim(),
            16,
            sampling::derive_seed(ctx.seed, 0xa5, sampling::point_hash(x)),
        );
        for u in &dirs {
            let probe = add_scaled(x, radius, u);
            let y = if sys.set.violation(&probe) <= ctx.tols.tau_mem {
                probe
            } else {
                match sys.set.distance_and_project(&probe, ctx) {
                    Ok(p) if p.distance <= 2.0 * radius => p.point,
                    _ => continue,
                }
            };
            let by = match sys.function.value(&y, ctx.tols.tau_mem) {
                Ok(v) => v,
                Err(_) => {
                    budget.inconclusive += 1;
                    continue;
                }
            };
            let gap = (by - bx).abs();
            if gap > 1e-3 * (1.0 + bx.abs()) + 2.0 * slope * radius {
                return AssumptionOutcome {
                    id: AssumptionId::A5,
                    verdict: Verdict::violated(vec![Witness { point: x.clone(), eta: None, zeta: Some(y), value: gap }], budget),
                    proxy: ProxyStatus::Proxy,
                    note: "function jumps across nearby constrained points".into(),
                };
            }
        }
    }
    AssumptionOutcome {
        id: AssumptionId::A5,
        verdict: Verdict::holds(budget),
        proxy: ProxyStatus::Proxy,
        note: "sampled continuity of the function along cl(C) near boundary points".into(),
    }
}

// ---------------------------------------------------------------------------
// rule table

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grant {
    Sufficient,
    Necessary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClassReq {
    AnyLsc,
    Lipschitz,
    LipschitzRegular,
    Nonpathological,
    C1,
}

impl ClassReq {
    fn admits(&self, class: FnClass) -> bool {
        match self {
            ClassReq::AnyLsc => true,
            ClassReq::Lipschitz => class.is_lipschitz(),
            ClassReq::LipschitzRegular => class.is_regular(),
            ClassReq::Nonpathological => class.is_nonpathological(),
            ClassReq::C1 => class.is_c1(),
        }
    }
}

/// One statement of the applicability table: under the listed hypotheses,
/// the condition is sufficient or necessary for the nonincrease property.
#[derive(Debug, Clone)]
pub struct TheoremRow {
    pub id: &'static str,
    pub condition: ConditionId,
    pub grants: Grant,
    class: ClassReq,
    needs_f_continuous: bool,
    needs_f_lipschitz: bool,
    pub needs_assumptions: &'static [&'static str],
    /// The assumptions may be replaced by the sampled "no boundary point
    /// admits nontrivial solutions" diagnostic (an open quantifier domain).
    accepts_open_domain: bool,
}

/// The applicability table. Rows mirror the statements the checker
/// implements; hypotheses are matched against computed verdicts only.
pub fn theorem_table() -> &'static [TheoremRow] {
    const T: &[TheoremRow] = &[
        // proximal-normal condition on the full quantifier domain
        TheoremRow { id: "THM-1", condition: ConditionId::ProxCone, grants: Grant::Necessary, class: ClassReq::AnyLsc, needs_f_continuous: true, needs_f_lipschitz: false, needs_assumptions: &["M1"], accepts_open_domain: false },
        TheoremRow { id: "THM-1", condition: ConditionId::ProxCone, grants: Grant::Sufficient, class: ClassReq::AnyLsc, needs_f_continuous: true, needs_f_lipschitz: true, needs_assumptions: &["M2"], accepts_open_domain: false },
        TheoremRow { id: "THM-2", condition: ConditionId::ProxCone, grants: Grant::Necessary, class: ClassReq::AnyLsc, needs_f_continuous: true, needs_f_lipschitz: false, needs_assumptions: &["A2", "A3"], accepts_open_domain: false },
        // interior proximal-subgradient condition
        TheoremRow { id: "COR-1", condition: ConditionId::ProxInt, grants: Grant::Necessary, class: ClassReq::AnyLsc, needs_f_continuous: true, needs_f_lipschitz: false, needs_assumptions: &[], accepts_open_domain: false },
        TheoremRow { id: "COR-1", condition: ConditionId::ProxInt, grants: Grant::Sufficient, class: ClassReq::AnyLsc, needs_f_continuous: true, needs_f_lipschitz: true, needs_assumptions: &["A4", "A5"], accepts_open_domain: true },
        // Clarke-gradient conditions
        TheoremRow { id: "THM-3", condition: ConditionId::Clarke, grants: Grant::Sufficient, class: ClassReq::Lipschitz, needs_f_continuous: false, needs_f_lipschitz: false, needs_assumptions: &[], accepts_open_domain: false },
        TheoremRow { id: "THM-3", condition: ConditionId::Clarke, grants: Grant::Necessary, class: ClassReq::LipschitzRegular, needs_f_continuous: true, needs_f_lipschitz: false, needs_assumptions: &["M1"], accepts_open_domain: false },
        TheoremRow { id: "THM-3", condition: ConditionId::ClarkeNp, grants: Grant::Sufficient, class: ClassReq::Nonpathological, needs_f_continuous: false, needs_f_lipschitz: false, needs_assumptions: &[], accepts_open_domain: false },
        TheoremRow { id: "THM-4", condition: ConditionId::Clarke, grants: Grant::Necessary, class: ClassReq::LipschitzRegular, needs_f_continuous: true, needs_f_lipschitz: false, needs_assumptions: &["A2", "A3"], accepts_open_domain: false },
        // interior Clarke conditions under pre-contractivity
        TheoremRow { id: "COR-3", condition: ConditionId::ClarkeInt, grants: Grant::Sufficient, class: ClassReq::Lipschitz, needs_f_continuous: false, needs_f_lipschitz: false, needs_assumptions: &["A4"], accepts_open_domain: false },
        TheoremRow { id: "COR-3", condition: ConditionId::ClarkeNpInt, grants: Grant::Sufficient, class: ClassReq::Nonpathological, needs_f_continuous: false, needs_f_lipschitz: false, needs_assumptions: &["A4"], accepts_open_domain: false },
        TheoremRow { id: "COR-3", condition: ConditionId::GradAeInt, grants: Grant::Sufficient, class: ClassReq::Lipschitz, needs_f_continuous: true, needs_f_lipschitz: false, needs_assumptions: &["A4"], accepts_open_domain: false },
        // gradient conditions for continuously differentiable functions
        TheoremRow { id: "COR-4", condition: ConditionId::Grad, grants: Grant::Sufficient, class: ClassReq::C1, needs_f_continuous: false, needs_f_lipschitz: false, needs_assumptions: &[], accepts_open_domain: false },
        TheoremRow { id: "COR-4", condition: ConditionId::Grad, grants: Grant::Necessary, class: ClassReq::C1, needs_f_continuous: true, needs_f_lipschitz: false, needs_assumptions: &["M1"], accepts_open_domain: false },
        TheoremRow { id: "COR-5", condition: ConditionId::Grad, grants: Grant::Necessary, class: ClassReq::C1, needs_f_continuous: true, needs_f_lipschitz: false, needs_assumptions: &["A3"], accepts_open_domain: false },
        TheoremRow { id: "COR-6", condition: ConditionId::GradInt, grants: Grant::Necessary, class: ClassReq::C1, needs_f_continuous: false, needs_f_lipschitz: false, needs_assumptions: &[], accepts_open_domain: false },
        TheoremRow { id: "COR-6", condition: ConditionId::GradInt, grants: Grant::Sufficient, class: ClassReq::C1, needs_f_continuous: true, needs_f_lipschitz: false, needs_assumptions: &["A4"], accepts_open_domain: false },
    ];
    T
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    SufficientForStar,
    NecessaryForStar,
    EquivalentToStar,
    NoneApplicable,
}

impl Direction {
    pub fn name(&self) -> &'static str {
        match self {
            Direction::SufficientForStar => "sufficient-for-star",
            Direction::NecessaryForStar => "necessary-for-star",
            Direction::EquivalentToStar => "equivalent-to-star",
            Direction::NoneApplicable => "none-applicable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StarImplication {
    HoldsOnSamples,
    Refuted,
    Undetermined,
}

impl StarImplication {
    pub fn name(&self) -> &'static str {
        match self {
            StarImplication::HoldsOnSamples => "holds-on-samples",
            StarImplication::Refuted => "refuted",
            StarImplication::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub name: String,
    pub satisfied: bool,
    pub sample_based: bool,
}

#[derive(Debug, Clone)]
pub struct Conclusion {
    pub theorem: Option<&'static str>,
    pub condition: Option<ConditionId>,
    pub direction: Direction,
    pub star: StarImplication,
    pub hypotheses: Vec<Hypothesis>,
}

/// Everything the rule table matches against.
#[derive(Debug, Clone)]
pub struct TheoryInputs {
    pub class: FnClass,
    pub conditions: BTreeMap<ConditionId, bool>, // holds / violated (inconclusive omitted)
    pub assumptions: BTreeMap<AssumptionId, (bool, ProxyStatus)>,
    pub f_continuous: bool,
    pub f_lipschitz: bool,
    pub f_exact: bool,
    /// Sampled proxy for an open quantifier domain: no boundary sample
    /// admits a nontrivial solution.
    pub boundary_all_trivial: bool,
}

fn row_applies(row: &TheoremRow, inputs: &TheoryInputs) -> Option<Vec<Hypothesis>> {
    if !row.class.admits(inputs.class) {
        return None;
    }
    let mut hyps = vec![Hypothesis {
        name: format!("function class {}", inputs.class),
        satisfied: true,
        sample_based: false,
    }];
    if row.needs_f_continuous {
        if !inputs.f_continuous {
            return None;
        }
        hyps.push(Hypothesis { name: "velocity map continuous".into(), satisfied: true, sample_based: !inputs.f_exact });
    }
    if row.needs_f_lipschitz {
        if !inputs.f_lipschitz {
            return None;
        }
        hyps.push(Hypothesis { name: "velocity map locally Lipschitz".into(), satisfied: true, sample_based: !inputs.f_exact });
    }
    if row.accepts_open_domain && inputs.boundary_all_trivial {
        hyps.push(Hypothesis {
            name: "no boundary sample admits nontrivial solutions".into(),
            satisfied: true,
            sample_based: true,
        });
        return Some(hyps);
    }
    for name in row.needs_assumptions {
        let id = AssumptionId::parse(name)?;
        match inputs.assumptions.get(&id) {
            Some((true, proxy)) => hyps.push(Hypothesis {
                name: format!("assumption {name}"),
                satisfied: true,
                sample_based: *proxy != ProxyStatus::Exact,
            }),
            _ => return None,
        }
    }
    Some(hyps)
}

/// Scans the rule table against the computed verdicts and returns the
/// strongest usable direction: an equivalence when both directions of some
/// checked condition apply, a one-sided conclusion when the applicable
/// direction is informative for the condition's verdict, and
/// none-applicable otherwise.
pub fn apply_theory(inputs: &TheoryInputs) -> Conclusion {
    let table = theorem_table();
    let mut best: Option<Conclusion> = None;
    let strength = |c: &Conclusion| match c.direction {
        Direction::EquivalentToStar => 3,
        Direction::SufficientForStar | Direction::NecessaryForStar => 2,
        Direction::NoneApplicable => 0,
    };
    for (&cond, &holds) in &inputs.conditions {
        let mut suff: Option<(&TheoremRow, Vec<Hypothesis>)> = None;
        let mut nec: Option<(&TheoremRow, Vec<Hypothesis>)> = None;
        for row in table.iter().filter(|r| r.condition == cond) {
            if let Some(hyps) = row_applies(row, inputs) {
                match row.grants {
                    Grant::Sufficient if suff.is_none() => suff = Some((row, hyps)),
                    Grant::Necessary if nec.is_none() => nec = Some((row, hyps)),
                    _ => {}
                }
            }
        }
        let candidate = match (&suff, &nec) {
            (Some((srow, shyps)), Some((_nrow, nhyps))) => {
                let mut hyps = shyps.clone();
                hyps.extend(nhyps.clone());
                Some(Conclusion {
                    theorem: Some(srow.id),
                    condition: Some(cond),
                    direction: Direction::EquivalentToStar,
                    star: if holds { StarImplication::HoldsOnSamples } else { StarImplication::Refuted },
                    hypotheses: hyps,
                })
            }
            (Some((row, hyps)), None) if holds => Some(Conclusion {
                theorem: Some(row.id),
                condition: Some(cond),
                direction: Direction::SufficientForStar,
                star: StarImplication::HoldsOnSamples,
                hypotheses: hyps.clone(),
            }),
            (None, Some((row, hyps))) if !holds => Some(Conclusion {
                theorem: Some(row.id),
                condition: Some(cond),
                direction: Direction::NecessaryForStar,
                star: StarImplication::Refuted,
                hypotheses: hyps.clone(),
            }),
            _ => None,
        };
        if let Some(c) = candidate {
            if best.as_ref().is_none_or(|b| strength(&c) > strength(b)) {
                best = Some(c);
            }
        }
    }
    best.unwrap_or(Conclusion {
        theorem: None,
        condition: None,
        direction: Direction::NoneApplicable,
        star: StarImplication::Undetermined,
        hypotheses: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// witness revalidation

/// Recomputes a witness residual from its stored point and vectors: the
/// inner product when both vectors are present, the contingent-cone
/// quotient when only the velocity side is.
pub fn revalidate_witness(sys: &System, witness: &Witness, ctx: &QueryCtx) -> Option<f64> {
    match (&witness.eta, &witness.zeta) {
        (Some(eta), Some(zeta)) => Some(dot(eta, zeta)),
        (None, Some(zeta)) => sys
            .set
            .in_contingent_cone(&witness.point, zeta, ctx)
            .ok()
            .map(|r| r.residual),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::inclusion::Branch;
    use crate::nonsmooth::Piece;
    use crate::tol::Tolerances;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn field(components: &[&str], dim: usize) -> Vec<crate::expr::Expression> {
        components.iter().map(|s| parse(s, dim).unwrap()).collect()
    }

    /// Line constraint with the drifting hull map and B = -x1.
    struct LineScenario {
        set: ConstraintSet,
        map: VelocityMap,
        function: PiecewiseFunction,
    }

    fn line_scenario() -> LineScenario {
        LineScenario {
            set: ConstraintSet::eq(parse("x2", 2).unwrap()),
            map: VelocityMap::uniform(
                vec![field(&["1", "0"], 2), field(&["-cos(x1^2)", "sin(x1^2)"], 2)],
                2,
            ),
            function: PiecewiseFunction::smooth(parse("-x1", 2).unwrap(), FnClass::C1),
        }
    }

    struct BallScenario {
        set: ConstraintSet,
        map: VelocityMap,
        function: PiecewiseFunction,
    }

    fn ball_scenario() -> BallScenario {
        BallScenario {
            set: ConstraintSet::leq(parse("-x1", 2).unwrap()),
            map: VelocityMap::uniform(vec![field(&["x2", "-9.81"], 2)], 2),
            function: PiecewiseFunction::smooth(parse("9.81*x1 + 0.5*x2^2", 2).unwrap(), FnClass::C1),
        }
    }

    struct CuspScenario {
        set: ConstraintSet,
        map: VelocityMap,
        function: PiecewiseFunction,
    }

    fn cusp_scenario() -> CuspScenario {
        CuspScenario {
            set: ConstraintSet::union(vec![
                ConstraintSet::leq(parse("x1^2 - abs(x2)", 2).unwrap()),
                ConstraintSet::leq(parse("x1", 2).unwrap()),
                ConstraintSet::eq(parse("x2", 2).unwrap()),
            ]),
            map: VelocityMap::new(
                vec![
                    Branch {
                        guard: ConstraintSet::leq(parse("-x1", 2).unwrap()),
                        vertex_fields: vec![field(&["1", "x1"], 2), field(&["1", "-x1"], 2)],
                    },
                    Branch {
                        guard: ConstraintSet::leq(parse("x1", 2).unwrap()),
                        vertex_fields: vec![field(&["1", "0"], 2)],
                    },
                ],
                2,
            ),
            function: PiecewiseFunction::new(
                vec![
                    Piece { guard: ConstraintSet::leq(parse("x2", 2).unwrap()), expr: parse("0", 2).unwrap() },
                    Piece { guard: ConstraintSet::leq(parse("-x2", 2).unwrap()), expr: parse("1", 2).unwrap() },
                ],
                FnClass::Lsc,
                2,
            ),
        }
    }

    #[test]
    fn gradient_condition_violated_at_the_origin_of_the_line_scenario() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = line_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let points = s.set.sample_boundary(21, &ctx);
        assert!(points.iter().any(|p| p[0].abs() < 1e-9), "grid must contain the origin");
        let grid = classify_grid(&sys, &points, &ctx);
        let outcome = check_condition(&sys, ConditionId::Grad, &grid, &ctx);
        assert!(outcome.verdict.is_violated(), "{:?}", outcome.verdict);
        let w = outcome.verdict.witness().unwrap();
        assert!(w.point[0].abs() < 1e-9, "witness at {:?}", w.point);
        let zeta = w.zeta.as_ref().unwrap();
        assert!(dist(zeta, &[-1.0, 0.0]) <= 1e-6, "witness velocity {zeta:?}");
        assert!((w.value - 1.0).abs() <= 1e-9, "residual {}", w.value);
    }

    #[test]
    fn gradient_condition_cancels_exactly_for_the_ballistic_energy() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = ball_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let mut points = s.set.sample_boundary(21, &ctx);
        points.extend(s.set.sample_interior(21, &ctx));
        let grid = classify_grid(&sys, &points, &ctx);
        assert!(grid.len() >= 21 * 21 / 2);
        let outcome = check_condition(&sys, ConditionId::Grad, &grid, &ctx);
        assert!(outcome.verdict.is_holds(), "{:?}", outcome.verdict);
        // every inner product is an exact cancellation: all counted as ties
        assert!(outcome.ties > 0);
    }

    #[test]
    fn prox_cone_condition_holds_on_the_cusp_boundary() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = cusp_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let points = s.set.sample_boundary(21, &ctx);
        let grid = classify_grid(&sys, &points, &ctx);
        let outcome = check_condition(&sys, ConditionId::ProxCone, &grid, &ctx);
        assert!(outcome.verdict.is_holds(), "{:?}", outcome.verdict);
    }

    #[test]
    fn m2_witness_sits_on_the_positive_axis_for_the_cusp_scenario() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = cusp_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let points = s.set.sample_boundary(21, &ctx);
        let grid = classify_grid(&sys, &points, &ctx);
        let outcome = check_assumption(
            &sys,
            AssumptionId::M2,
            &grid,
            &crate::tol::NEIGHBORHOOD_RADII,
            SimParams { dt: 1e-3 },
            &ctx,
        );
        assert!(outcome.verdict.is_violated(), "{:?}", outcome.verdict);
        let on_axis = outcome
            .verdict
            .witnesses()
            .iter()
            .any(|w| w.point[1].abs() <= 1e-6 && w.point[0] > 0.1 && w.point[0] <= 1.0);
        assert!(on_axis, "witnesses {:?}", outcome.verdict.witnesses());
    }

    #[test]
    fn m2_holds_on_the_rising_ballistic_boundary() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = ball_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let points = s.set.sample_boundary(21, &ctx);
        let grid = classify_grid(&sys, &points, &ctx);
        // the domain keeps only boundary points with nontrivial solutions,
        // which for this system is the rising half of the wall
        let outcome = check_assumption(
            &sys,
            AssumptionId::M2,
            &grid,
            &crate::tol::NEIGHBORHOOD_RADII,
            SimParams { dt: 1e-3 },
            &ctx,
        );
        assert!(outcome.verdict.is_holds(), "{:?}", outcome.verdict);
    }

    #[test]
    fn m1_proxy_collapses_at_the_origin_of_the_line_scenario() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = line_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let points = s.set.sample_boundary(21, &ctx);
        let grid = classify_grid(&sys, &points, &ctx);
        let outcome = check_assumption(
            &sys,
            AssumptionId::M1,
            &grid,
            &crate::tol::NEIGHBORHOOD_RADII,
            SimParams { dt: 1e-3 },
            &ctx,
        );
        assert!(outcome.verdict.is_violated(), "{:?}", outcome.verdict);
        let w = outcome.verdict.witness().unwrap();
        assert!(w.point[0].abs() < 1e-9, "witness {:?}", w.point);
        // the surviving rightward direction is not the collapsing one
        let v = w.zeta.as_ref().unwrap();
        assert!(v[0] < 0.5, "collapsing velocity {v:?}");
    }

    #[test]
    fn m1_and_a3_hold_for_the_ballistic_scenario() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = ball_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let points = s.set.sample_boundary(21, &ctx);
        let grid = classify_grid(&sys, &points, &ctx);
        let m1 = check_assumption(&sys, AssumptionId::M1, &grid, &crate::tol::NEIGHBORHOOD_RADII, SimParams { dt: 1e-3 }, &ctx);
        assert!(m1.verdict.is_holds(), "{:?}", m1.verdict);
        let a3 = check_assumption(&sys, AssumptionId::A3, &grid, &crate::tol::NEIGHBORHOOD_RADII, SimParams { dt: 1e-3 }, &ctx);
        assert!(a3.verdict.is_holds(), "{:?}", a3.verdict);
        let m1p = check_assumption(&sys, AssumptionId::M1Prime, &grid, &crate::tol::NEIGHBORHOOD_RADII, SimParams { dt: 1e-3 }, &ctx);
        assert!(m1p.verdict.is_holds(), "{:?}", m1p.verdict);
    }

    #[test]
    fn remaining_assumption_diagnostics_on_the_ballistic_fixture() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = ball_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let points = s.set.sample_boundary(21, &ctx);
        let grid = classify_grid(&sys, &points, &ctx);
        let sim = SimParams { dt: 1e-3 };
        let radii = crate::tol::NEIGHBORHOOD_RADII;

        // A1: single smooth branch, no continuity defects
        let a1 = check_assumption(&sys, AssumptionId::A1, &grid, &radii, sim, &ctx);
        assert!(a1.verdict.is_holds(), "{:?}", a1.verdict);
        assert_eq!(a1.proxy, ProxyStatus::Exact);

        // A2: projected epigraph normals vary continuously along the wall
        let a2 = check_assumption(&sys, AssumptionId::A2, &grid, &radii, sim, &ctx);
        assert!(a2.verdict.is_holds(), "{:?}", a2.verdict);
        assert_eq!(a2.proxy, ProxyStatus::Proxy);

        // A3: the halfplane interior is reachable from every wall point
        let a3 = check_assumption(&sys, AssumptionId::A3, &grid, &radii, sim, &ctx);
        assert!(a3.verdict.is_holds(), "{:?}", a3.verdict);

        // A4: rising trajectories enter the interior immediately
        let a4 = check_assumption(&sys, AssumptionId::A4, &grid, &radii, sim, &ctx);
        assert!(a4.verdict.is_holds(), "{:?}", a4.verdict);
        assert_eq!(a4.proxy, ProxyStatus::SimulationBased);

        // A5: the energy is continuous along the constrained set
        let a5 = check_assumption(&sys, AssumptionId::A5, &grid, &radii, sim, &ctx);
        assert!(a5.verdict.is_holds(), "{:?}", a5.verdict);

        // and A5 flags the step function on the cusp axis: a shell wide
        // enough to reach the upper branch sees the full jump height
        let c = cusp_scenario();
        let cusp_ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let cusp_sys = System { set: &c.set, map: &c.map, function: &c.function };
        let cusp_points = c.set.sample_boundary(21, &cusp_ctx);
        let cusp_grid = classify_grid(&cusp_sys, &cusp_points, &cusp_ctx);
        let a5 = check_assumption(&cusp_sys, AssumptionId::A5, &cusp_grid, &[0.5], sim, &cusp_ctx);
        assert!(a5.verdict.is_violated(), "{:?}", a5.verdict);
    }

    #[test]
    fn rule_table_grants_equivalence_for_the_ballistic_scenario() {
        let mut conditions = BTreeMap::new();
        conditions.insert(ConditionId::Grad, true);
        let mut assumptions = BTreeMap::new();
        assumptions.insert(AssumptionId::M1, (true, ProxyStatus::Proxy));
        assumptions.insert(AssumptionId::M2, (true, ProxyStatus::Exact));
        let inputs = TheoryInputs {
            class: FnClass::C1,
            conditions,
            assumptions,
            f_continuous: true,
            f_lipschitz: true,
            f_exact: true,
            boundary_all_trivial: false,
        };
        let conclusion = apply_theory(&inputs);
        assert_eq!(conclusion.direction, Direction::EquivalentToStar);
        assert_eq!(conclusion.theorem, Some("COR-4"));
        assert_eq!(conclusion.star, StarImplication::HoldsOnSamples);
        assert!(conclusion.hypotheses.iter().any(|h| h.sample_based));
    }

    #[test]
    fn rule_table_grants_nothing_when_the_hinge_assumption_fails() {
        // violated gradient condition without the selection hypothesis:
        // no necessity, so nothing can be concluded
        let mut conditions = BTreeMap::new();
        conditions.insert(ConditionId::Grad, false);
        let mut assumptions = BTreeMap::new();
        assumptions.insert(AssumptionId::M1, (false, ProxyStatus::Proxy));
        let inputs = TheoryInputs {
            class: FnClass::C1,
            conditions,
            assumptions,
            f_continuous: true,
            f_lipschitz: true,
            f_exact: false,
            boundary_all_trivial: false,
        };
        let conclusion = apply_theory(&inputs);
        assert_eq!(conclusion.direction, Direction::NoneApplicable);

        // holding prox condition without the tangency assumption: the
        // sufficiency row is blocked, necessity is uninformative
        let mut conditions = BTreeMap::new();
        conditions.insert(ConditionId::ProxCone, true);
        let mut assumptions = BTreeMap::new();
        assumptions.insert(AssumptionId::M2, (false, ProxyStatus::Exact));
        let inputs = TheoryInputs {
            class: FnClass::Lsc,
            conditions,
            assumptions,
            f_continuous: true,
            f_lipschitz: true,
            f_exact: false,
            boundary_all_trivial: false,
        };
        let conclusion = apply_theory(&inputs);
        assert_eq!(conclusion.direction, Direction::NoneApplicable);
    }

    #[test]
    fn condition_verdicts_are_invariant_under_positive_scaling() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = line_scenario();
        let points = s.set.sample_boundary(21, &ctx);
        for c in [0.5, 2.0] {
            let scaled = s.function.scaled(c);
            let sys = System { set: &s.set, map: &s.map, function: &scaled };
            let grid = classify_grid(&sys, &points, &ctx);
            let outcome = check_condition(&sys, ConditionId::Grad, &grid, &ctx);
            assert!(outcome.verdict.is_violated());
            let w = outcome.verdict.witness().unwrap();
            assert!(w.point[0].abs() < 1e-9);
            assert!((w.value - c).abs() <= 1e-9, "scaled residual {} for c={c}", w.value);
        }
    }

    #[test]
    fn vertex_pairs_decide_bilinear_conditions() {
        // random bilinear fixtures: checking gradient vertices against hull
        // vertices gives the same verdict as a dense hull sampling
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        use rand::Rng;
        let mut rng = crate::sampling::rng_from(4242);
        for trial in 0..50 {
            let g1 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let g2 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let v1 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let v2 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let etas = [g1, g2];
            let zetas = [v1, v2];
            let vertex_violation = etas
                .iter()
                .flat_map(|e| zetas.iter().map(move |z| dot(e, z)))
                .any(|ip| ip > t.eps_cond);
            let mut dense_violation = false;
            for i in 0..=10 {
                for j in 0..=10 {
                    let a = i as f64 / 10.0;
                    let b = j as f64 / 10.0;
                    let eta = [a * g1[0] + (1.0 - a) * g2[0], a * g1[1] + (1.0 - a) * g2[1]];
                    let zeta = [b * v1[0] + (1.0 - b) * v2[0], b * v1[1] + (1.0 - b) * v2[1]];
                    if dot(&eta, &zeta) > t.eps_cond {
                        dense_violation = true;
                    }
                }
            }
            assert_eq!(vertex_violation, dense_violation, "trial {trial}");
        }
        let _ = ctx;
    }

    #[test]
    fn enlarging_the_grid_keeps_violations() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = line_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let coarse = s.set.sample_boundary(21, &ctx);
        let fine = s.set.sample_boundary(41, &ctx);
        assert!(fine.len() > coarse.len());
        let coarse_grid = classify_grid(&sys, &coarse, &ctx);
        let fine_grid = classify_grid(&sys, &fine, &ctx);
        let a = check_condition(&sys, ConditionId::Grad, &coarse_grid, &ctx);
        let b = check_condition(&sys, ConditionId::Grad, &fine_grid, &ctx);
        assert!(a.verdict.is_violated());
        assert!(b.verdict.is_violated());
    }

    #[test]
    fn constant_clause_filters_the_velocity_quantifier() {
        // switched descent toward the kink line of |x1|: the plain Clarke
        // condition fails at the kink (vertex velocities pair positively
        // with one gradient vertex), but only velocities with a constant
        // inner product across both vertices count for the
        // nonpathological variant, and those all pair nonpositively
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let set = ConstraintSet::whole_space(2);
        let map = VelocityMap::new(
            vec![
                Branch {
                    guard: ConstraintSet::leq(parse("-x1", 2).unwrap()),
                    vertex_fields: vec![field(&["-1", "1"], 2)],
                },
                Branch {
                    guard: ConstraintSet::leq(parse("x1", 2).unwrap()),
                    vertex_fields: vec![field(&["1", "1"], 2)],
                },
            ],
            2,
        );
        let function = PiecewiseFunction::smooth(parse("abs(x1)", 2).unwrap(), FnClass::LipschitzRegular);
        let sys = System { set: &set, map: &map, function: &function };
        // grid with the kink line included
        let points: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![0.5, 0.0],
            vec![-0.5, 0.5],
            vec![1.0, -1.0],
        ];
        let grid = classify_grid(&sys, &points, &ctx);
        let plain = check_condition(&sys, ConditionId::ClarkeInt, &grid, &ctx);
        assert!(plain.verdict.is_violated(), "{:?}", plain.verdict);
        let w = plain.verdict.witness().unwrap();
        assert!(w.point[0].abs() <= 1e-9, "plain violation should sit on the kink, got {:?}", w.point);
        let np = check_condition(&sys, ConditionId::ClarkeNpInt, &grid, &ctx);
        assert!(np.verdict.is_holds(), "{:?}", np.verdict);
    }

    #[test]
    fn interior_condition_ids_behave_on_smooth_fixtures() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let set = ConstraintSet::whole_space(2);
        let decay = VelocityMap::uniform(vec![field(&["-x1", "-x2"], 2)], 2);
        let growth = VelocityMap::uniform(vec![field(&["x1", "x2"], 2)], 2);
        let b = PiecewiseFunction::smooth(parse("x1^2 + x2^2", 2).unwrap(), FnClass::C1);
        let points: Vec<Vec<f64>> = vec![vec![0.5, 0.5], vec![-1.0, 0.3], vec![0.2, -0.8]];

        for id in [ConditionId::GradInt, ConditionId::ClarkeInt, ConditionId::ProxInt, ConditionId::GradAeInt] {
            let sys = System { set: &set, map: &decay, function: &b };
            let grid = classify_grid(&sys, &points, &ctx);
            let outcome = check_condition(&sys, id, &grid, &ctx);
            assert!(outcome.verdict.is_holds(), "{id}: {:?}", outcome.verdict);

            let sys = System { set: &set, map: &growth, function: &b };
            let grid = classify_grid(&sys, &points, &ctx);
            let outcome = check_condition(&sys, id, &grid, &ctx);
            assert!(outcome.verdict.is_violated(), "{id}: {:?}", outcome.verdict);
        }

        // the almost-everywhere variant skips nondifferentiability points
        let kinked = PiecewiseFunction::smooth(parse("abs(x1)", 2).unwrap(), FnClass::LipschitzRegular);
        let sys = System { set: &set, map: &decay, function: &kinked };
        let kink_grid = classify_grid(&sys, &[vec![0.0, 0.5]], &ctx);
        let outcome = check_condition(&sys, ConditionId::GradAeInt, &kink_grid, &ctx);
        assert!(outcome.verdict.is_inconclusive(), "all points skipped: {:?}", outcome.verdict);
    }

    #[test]
    fn class_gates_reject_too_weak_functions() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = cusp_scenario(); // lsc step function
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let grid = classify_grid(&sys, &[vec![0.5, 0.0]], &ctx);
        for id in [ConditionId::Grad, ConditionId::Clarke, ConditionId::GradInt] {
            let outcome = check_condition(&sys, id, &grid, &ctx);
            assert!(outcome.verdict.is_inconclusive(), "{id} must refuse lsc input");
        }
    }

    #[test]
    fn witnesses_revalidate_exactly() {
        let t = tols();
        let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
        let ctx = QueryCtx { bounds: &bounds, tols: &t, seed: 42 };
        let s = line_scenario();
        let sys = System { set: &s.set, map: &s.map, function: &s.function };
        let points = s.set.sample_boundary(21, &ctx);
        let grid = classify_grid(&sys, &points, &ctx);
        let outcome = check_condition(&sys, ConditionId::Grad, &grid, &ctx);
        for w in outcome.verdict.witnesses() {
            let again = revalidate_witness(&sys, w, &ctx).unwrap();
            assert!((again - w.value).abs() <= 1e-12);
        }
    }
}
