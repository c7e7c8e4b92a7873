//! Solution simulation, nontriviality classification, pre-contractivity,
//! and the brute-force monotonicity oracle.
//!
//! Integration is explicit Euler with boundary bisection and tangential
//! re-selection: when a raw step would leave `cl(C)` (beyond the flow
//! containment tolerance `tau_flow`), the step is bisected back onto the
//! boundary; if no forward progress is possible along the picked velocity,
//! the velocity is re-selected as the admissible sample best aligned with
//! the pick. A step that stalls under both attempts terminates the
//! trajectory (maximal but not complete — the "pre" of pre-invariance).
//! Sliding along measure-zero branches such as lines falls out of the
//! re-selection rule without a DAE solver.
//!
//! The oracle is one-sided: `HOLDS-ON-SAMPLES` is evidence, `VIOLATED`
//! carries a replayable witness trajectory.

use rand::Rng;

use crate::geometry::{ConstraintSet, QueryCtx};
use crate::inclusion::{VelocityMap, VelocitySample};
use crate::nonsmooth::PiecewiseFunction;
use crate::outcome::{Budget, Verdict, Witness};
use crate::sampling::{self, add_scaled, combination, dist, dot, unit_directions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Horizon,
    NoAdmissibleVelocity,
    ProjectionFailure,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Horizon => "horizon",
            Termination::NoAdmissibleVelocity => "no-admissible-velocity",
            Termination::ProjectionFailure => "projection-failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Barycentric weights of the velocity selected at each step
    /// (`len == times.len() - 1`), over the image vertices at that state.
    pub step_weights: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the start state")
    }

    pub fn step_count(&self) -> usize {
        self.states.len() - 1
    }

    /// CSV dump `t,x1..xn,B` with 17 significant digits.
    pub fn to_csv(&self, function: &PiecewiseFunction, tau_mem: f64) -> String {
        let n = self.states[0].len();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",B\n");
        for (t, x) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.16e}"));
            for c in x {
                out.push_str(&format!(",{c:.16e}"));
            }
            match function.value(x, tau_mem) {
                Ok(b) => out.push_str(&format!(",{b:.16e}\n")),
                Err(_) => out.push_str(",nan\n"),
            }
        }
        out
    }
}

/// Per-step velocity selection rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Fixed vertex field (index modulo the image size at each state).
    Vertex(usize),
    /// Seeded random barycentric weights over the image vertices.
    RandomHull,
    /// Admissible sample best aligned with the indexed vertex field.
    TangentialVertex(usize),
    /// Admissible sample best aligned with a random hull pick.
    TangentialRandom,
    /// Admissible sample best aligned with a fixed direction.
    TangentialBias(Vec<f64>),
}

/// Deterministic mixed-strategy ensemble member.
pub fn ensemble_strategy(j: usize) -> Strategy {
    match j % 4 {
        0 => Strategy::Vertex(j / 4),
        1 => Strategy::RandomHull,
        2 => Strategy::TangentialVertex(j / 4),
        _ => Strategy::TangentialRandom,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtildeLabel {
    Nontrivial,
    TrivialOnly,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtildeRule {
    EmptyIntersection,
    NeighborhoodIntersection,
    Hypertangent,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: CtildeLabel,
    pub rule: CtildeRule,
}

const MIN_SUBSTEP: f64 = 1e-6;

enum Attempt {
    Full(Vec<f64>),
    Partial(Vec<f64>, f64),
    Stalled,
}

/// One containment-checked Euler substep along `w`.
fn attempt_step(c: &ConstraintSet, x: &[f64], w: &[f64], dt: f64, tau_flow: f64) -> Attempt {
    let candidate = add_scaled(x, dt, w);
    if c.contains(&candidate, tau_flow).unwrap_or(false) {
        return Attempt::Full(candidate);
    }
    // bisect the step fraction back onto the boundary
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let probe = add_scaled(x, mid * dt, w);
        if c.contains(&probe, tau_flow).unwrap_or(false) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo < MIN_SUBSTEP {
        return Attempt::Stalled;
    }
    Attempt::Partial(add_scaled(x, lo * dt, w), lo * dt)
}

fn admissible_of(samples: &[VelocitySample]) -> Vec<&VelocitySample> {
    samples.iter().filter(|s| s.admissible == Some(true)).collect()
}

/// Simulates one solution of the constrained inclusion.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    c: &ConstraintSet,
    f: &VelocityMap,
    x0: &[f64],
    strategy: &Strategy,
    dt: f64,
    horizon: f64,
    seed: u64,
    ctx: &QueryCtx,
) -> Trajectory {
    let tau_flow = ctx.tols.tau_flow;
    let mut rng = sampling::rng_from(seed);
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut step_weights: Vec<Vec<f64>> = Vec::new();
    let max_steps = ((horizon / dt).ceil() as usize).max(1) * 2 + 16;
    let mut termination = Termination::Horizon;

    'steps: while *times.last().unwrap() < horizon - 1e-12 && step_weights.len() < max_steps {
        let x = states.last().unwrap().clone();
        let vertices = match f.image(&x, ctx.tols.tau_mem) {
            Ok(v) => v,
            Err(_) => {
                termination = Termination::ProjectionFailure;
                break;
            }
        };
        let k = vertices.len();
        let random_weights = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0f64).max(1e-12)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|r| r / total).collect()
        };
        // raw pick with its weights
        let (pick, pick_weights): (Vec<f64>, Vec<f64>) = match strategy {
            Strategy::Vertex(i) | Strategy::TangentialVertex(i) => {
                let idx = i % k;
                let mut w = vec![0.0; k];
                w[idx] = 1.0;
                (vertices[idx].clone(), w)
            }
            Strategy::RandomHull | Strategy::TangentialRandom => {
                let w = random_weights(&mut rng);
                (combination(&vertices, &w), w)
            }
            Strategy::TangentialBias(bias) => (bias.clone(), vec![f64::NAN; k]),
        };
        let tangential = matches!(
            strategy,
            Strategy::TangentialVertex(_) | Strategy::TangentialRandom | Strategy::TangentialBias(_)
        );
        // tangential strategies select from the admissible set up front
        let (mut w, mut weights) = if tangential {
            let samples = match f.admissible_velocities(c, &x, 10, ctx) {
                Ok(s) => s,
                Err(_) => {
                    termination = Termination::ProjectionFailure;
                    break;
                }
            };
            let admitted = admissible_of(&samples);
            match admitted.iter().max_by(|a, b| {
                dot(&a.velocity, &pick)
                    .partial_cmp(&dot(&b.velocity, &pick))
                    .unwrap_or(std::cmp::Ordering::Equal)
            }) {
                Some(best) => (best.velocity.clone(), best.weights.clone()),
                None => {
                    termination = Termination::NoAdmissibleVelocity;
                    break;
                }
            }
        } else {
            (pick.clone(), pick_weights)
        };

        // two attempts: the selected velocity, then (for raw strategies) a
        // tangential re-selection at the boundary
        for attempt_idx in 0..2 {
            match attempt_step(c, &x, &w, dt, tau_flow) {
                Attempt::Full(next) => {
                    times.push(times.last().unwrap() + dt);
                    states.push(next);
                    step_weights.push(weights);
                    continue 'steps;
                }
                Attempt::Partial(next, advanced) => {
                    times.push(times.last().unwrap() + advanced);
                    states.push(next);
                    step_weights.push(weights);
                    continue 'steps;
                }
                Attempt::Stalled => {
                    if attempt_idx == 1 || tangential {
                        termination = Termination::NoAdmissibleVelocity;
                        break 'steps;
                    }
                    let samples = match f.admissible_velocities(c, &x, 10, ctx) {
                        Ok(s) => s,
                        Err(_) => {
                            termination = Termination::ProjectionFailure;
                            break 'steps;
                        }
                    };
                    let admitted = admissible_of(&samples);
                    match admitted.iter().max_by(|a, b| {
                        dot(&a.velocity, &pick)
                            .partial_cmp(&dot(&b.velocity, &pick))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    }) {
                        Some(best) if dist(&best.velocity, &w) > 1e-12 => {
                            w = best.velocity.clone();
                            weights = best.weights.clone();
                        }
                        _ => {
                            termination = Termination::NoAdmissibleVelocity;
                            break 'steps;
                        }
                    }
                }
            }
        }
    }
    Trajectory { times, states, step_weights, termination }
}

/// Labels a point by whether a nontrivial solution starts there, using the
/// three solvability rules in order: empty admissible intersection
/// (trivial-only), admissible velocities on a whole neighborhood
/// (nontrivial), every image vertex hypertangent (nontrivial).
pub fn classify_nontrivial(c: &ConstraintSet, f: &VelocityMap, x: &[f64], ctx: &QueryCtx) -> Classification {
    let samples = match f.admissible_velocities(c, x, 10, ctx) {
        Ok(s) => s,
        Err(_) => return Classification { label: CtildeLabel::Unknown, rule: CtildeRule::None },
    };
    let mut inconclusive = false;
    let mut any_admissible = false;
    let mut all_far = true;
    for s in &samples {
        match s.admissible {
            Some(true) => any_admissible = true,
            Some(false) => {
                // NaN residuals also count as "not far"
                if s.residual.partial_cmp(&(10.0 * ctx.tols.eps_tan)) != Some(std::cmp::Ordering::Greater) {
                    all_far = false;
                }
            }
            None => inconclusive = true,
        }
    }
    if !any_admissible && !inconclusive && all_far {
        return Classification { label: CtildeLabel::TrivialOnly, rule: CtildeRule::EmptyIntersection };
    }

    // rule 2: admissible velocities exist on a full neighborhood sample
    'radii: for radius in [1e-2, 1e-3] {
        let dirs = unit_directions(
            c.dim(),
            32,
            sampling::derive_seed(ctx.seed, 0xc7de, sampling::point_hash(x)),
        );
        let mut neighborhood: Vec<Vec<f64>> = vec![x.to_vec()];
        for u in &dirs {
            let probe = add_scaled(x, radius, u);
            if c.contains(&probe, ctx.tols.tau_mem).unwrap_or(false) {
                neighborhood.push(probe);
            } else if let Ok(p) = c.distance_and_project(&probe, ctx) {
                if p.distance <= radius {
                    neighborhood.push(p.point);
                }
            } else {
                continue 'radii;
            }
        }
        let mut all_nonempty = true;
        for y in &neighborhood {
            match f.admissible_velocities(c, y, 10, ctx) {
                Ok(samples) => {
                    if !samples.iter().any(|s| s.admissible == Some(true)) {
                        all_nonempty = false;
                        break;
                    }
                }
                Err(_) => {
                    all_nonempty = false;
                    break;
                }
            }
        }
        if all_nonempty {
            return Classification {
                label: CtildeLabel::Nontrivial,
                rule: CtildeRule::NeighborhoodIntersection,
            };
        }
    }

    // rule 3: the whole image fits in the hypertangent cone
    if let Ok(vertices) = f.image(x, ctx.tols.tau_mem) {
        let mut all_member = true;
        for v in &vertices {
            match c.in_hypertangent_cone(x, v, ctx) {
                Ok(r) if r.member => {}
                _ => {
                    all_member = false;
                    break;
                }
            }
        }
        if all_member {
            return Classification { label: CtildeLabel::Nontrivial, rule: CtildeRule::Hypertangent };
        }
    }
    Classification { label: CtildeLabel::Unknown, rule: CtildeRule::None }
}

/// Pre-contractivity diagnostic for a closed set `K`: from every sampled
/// boundary point admitting a nontrivial solution, simulated trajectories
/// must sit strictly inside `K` for their first ten steps.
#[allow(clippy::too_many_arguments)]
pub fn is_precontractive(
    c: &ConstraintSet,
    f: &VelocityMap,
    k: &ConstraintSet,
    boundary_samples: &[Vec<f64>],
    dt: f64,
    seed: u64,
    ctx: &QueryCtx,
) -> Verdict {
    let mut budget = Budget { points: boundary_samples.len(), ..Budget::default() };
    const ENSEMBLE: usize = 8;
    for (pi, x) in boundary_samples.iter().enumerate() {
        let class = classify_nontrivial(c, f, x, ctx);
        if class.label == CtildeLabel::TrivialOnly {
            continue;
        }
        if class.label == CtildeLabel::Unknown {
            budget.unknown_points += 1;
        }
        for j in 0..ENSEMBLE {
            let strategy = ensemble_strategy(j);
            let traj_seed =
                sampling::derive_seed(seed, 0x9c0e, sampling::point_hash(x).wrapping_add(j as u64));
            let traj = simulate(c, f, x, &strategy, dt, 12.0 * dt, traj_seed, ctx);
            if traj.step_count() < 2 {
                continue; // a step-then-stall artifact is discretely trivial
            }
            for step in 1..=traj.step_count().min(10) {
                let state = &traj.states[step];
                if k.interior_margin(state) <= 0.0 {
                    return Verdict::violated(
                        vec![Witness {
                            point: x.clone(),
                            eta: None,
                            zeta: Some(state.clone()),
                            value: k.interior_margin(state),
                        }],
                        Budget { points: pi + 1, ..budget },
                    );
                }
            }
        }
    }
    Verdict::holds(budget)
}

/// Everything the oracle decided and the bounds it used, for reporting.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub verdict: Verdict,
    pub tol_mono: f64,
    pub velocity_bound: f64,
    pub gradient_bound: f64,
    pub trajectories: usize,
    /// (start index, trajectory index, step j, step k, B_j, B_k) of the
    /// first violation in deterministic order, with the trajectory itself.
    pub witness: Option<OracleWitness>,
}

#[derive(Debug, Clone)]
pub struct OracleWitness {
    pub start_index: usize,
    pub trajectory_index: usize,
    pub step_low: usize,
    pub step_high: usize,
    pub value_low: f64,
    pub value_high: f64,
    pub trajectory: Trajectory,
}

/// Brute-force monotonicity oracle: simulates `ensemble` mixed-strategy
/// trajectories per start and scans the function along each. An increase
/// beyond `tol_mono` (or any single-step jump of at least 0.5) is a
/// violation; the first one in (start, trajectory, step) order is reported.
#[allow(clippy::too_many_arguments)]
pub fn monotonicity_oracle(
    c: &ConstraintSet,
    f: &VelocityMap,
    b: &PiecewiseFunction,
    starts: &[Vec<f64>],
    ensemble: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
    ctx: &QueryCtx,
) -> OracleReport {
    let probe_grid = sampling::box_lattice(ctx.bounds, 11);
    let velocity_bound = f.velocity_bound(&probe_grid, ctx.tols.tau_mem);
    let gradient_bound = b.sampled_gradient_bound(&probe_grid, ctx.tols.tau_mem, ctx.tols.tau_kink);
    let tol_mono = if b.class().is_lipschitz() {
        ctx.tols.tol_mono_abs + gradient_bound * velocity_bound * dt
    } else {
        // lsc: no Lipschitz slack, jumps are caught by the step rule
        ctx.tols.tol_mono_abs
    };
    let mut budget = Budget { points: starts.len(), ..Budget::default() };
    let mut trajectories = 0usize;
    for (si, start) in starts.iter().enumerate() {
        for j in 0..ensemble {
            trajectories += 1;
            let strategy = ensemble_strategy(j);
            let traj_seed = sampling::derive_seed(
                seed,
                0x0ac1e,
                sampling::point_hash(start).wrapping_add(j as u64),
            );
            let traj = simulate(c, f, start, &strategy, dt, horizon, traj_seed, ctx);
            let mut values = Vec::with_capacity(traj.states.len());
            let mut ok = true;
            for state in &traj.states {
                match b.value(state, ctx.tols.tau_mem) {
                    Ok(v) => values.push(v),
                    Err(_) => {
                        budget.inconclusive += 1;
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let mut min_idx = 0usize;
            for k in 1..values.len() {
                let jump = values[k] - values[k - 1];
                let rise = values[k] - values[min_idx];
                if jump >= ctx.tols.jump_increase || rise > tol_mono {
                    let (lo, hi) = if jump >= ctx.tols.jump_increase { (k - 1, k) } else { (min_idx, k) };
                    let witness = OracleWitness {
                        start_index: si,
                        trajectory_index: j,
                        step_low: lo,
                        step_high: hi,
                        value_low: values[lo],
                        value_high: values[hi],
                        trajectory: traj.clone(),
                    };
                    let verdict = Verdict::violated(
                        vec![Witness {
                            point: traj.states[hi].clone(),
                            eta: None,
                            zeta: None,
                            value: values[hi] - values[lo],
                        }],
                        Budget { velocities: trajectories, ..budget },
                    );
                    return OracleReport {
                        verdict,
                        tol_mono,
                        velocity_bound,
                        gradient_bound,
                        trajectories,
                        witness: Some(witness),
                    };
                }
                if values[k] < values[min_idx] {
                    min_idx = k;
                }
            }
        }
    }
    budget.velocities = trajectories;
    OracleReport {
        verdict: Verdict::holds(budget),
        tol_mono,
        velocity_bound,
        gradient_bound,
        trajectories,
        witness: None,
    }
}
