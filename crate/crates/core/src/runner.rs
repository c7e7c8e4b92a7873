//! Orchestrates a scenario run: grids, classification, condition and
//! assumption checks, the oracle, the conclusion, and the verdict report.
//!
//! Reports are plain TOML-style text with stable field names and ordering
//! (schema in `docs/report-schema.md`). All floats are printed with Rust's
//! shortest-roundtrip formatting, so a rerun with the same seed produces a
//! byte-identical report; the only non-deterministic field (the timestamp)
//! is omitted under `reproducible`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::flows::{self, CtildeLabel};
use crate::geometry::QueryCtx;
use crate::outcome::{ProxyStatus, Verdict, Witness};
use crate::scenario::Scenario;
use crate::verdict::{
    self, apply_theory, check_assumption, check_condition, classify_grid, map_diagnostics,
    AssumptionId, AssumptionOutcome, ConditionId, ConditionOutcome, Conclusion, GridPoint,
    MapDiagnostics, SimParams, System, TheoryInputs,
};

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub grid: Option<usize>,
    pub emit_trajectories: bool,
    /// Overrides the scenario's requested checks when present.
    pub conditions: Option<Vec<ConditionId>>,
    pub assumptions: Option<Vec<AssumptionId>>,
    pub force_oracle: bool,
    pub reproducible: bool,
}

/// Structured results of a run, before rendering.
pub struct RunResults {
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub boundary_grid: Vec<GridPoint>,
    pub interior_grid: Vec<GridPoint>,
    pub diagnostics: MapDiagnostics,
    pub conditions: Vec<ConditionOutcome>,
    pub assumptions: Vec<AssumptionOutcome>,
    pub oracle: Option<flows::OracleReport>,
    pub conclusion: Conclusion,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: String,
    /// (file name, CSV body) pairs for requested trajectory dumps.
    pub trajectories: Vec<(String, String)>,
    pub inconclusive_present: bool,
}

pub fn run_checks(scenario: &Scenario, config: &RunConfig) -> RunResults {
    let seed = config.seed.unwrap_or(scenario.seed);
    let dt = config.dt.unwrap_or(scenario.dt);
    let horizon = config.horizon.unwrap_or(scenario.horizon);
    let boundary_res = config.grid.unwrap_or(scenario.boundary_resolution);
    let interior_res = config.grid.unwrap_or(scenario.interior_resolution);
    let conditions = config.conditions.clone().unwrap_or_else(|| scenario.conditions.clone());
    let assumptions = config.assumptions.clone().unwrap_or_else(|| scenario.assumptions.clone());
    let run_oracle = config.force_oracle || scenario.oracle.is_some();

    let ctx = QueryCtx { bounds: &scenario.bounds, tols: &scenario.tols, seed };
    let sys = System { set: &scenario.set, map: &scenario.map, function: &scenario.function };

    let boundary_points = scenario.set.sample_boundary(boundary_res, &ctx);
    let interior_points = scenario.set.sample_interior(interior_res, &ctx);
    let boundary_grid = classify_grid(&sys, &boundary_points, &ctx);
    let interior_grid = classify_grid(&sys, &interior_points, &ctx);
    let mut full_grid: Vec<GridPoint> = boundary_grid.clone();
    full_grid.extend(interior_grid.iter().cloned());
    let boundary_all_trivial =
        boundary_grid.iter().all(|g| g.class.label == CtildeLabel::TrivialOnly);

    let diag_points: Vec<Vec<f64>> = full_grid.iter().map(|g| g.point.clone()).collect();
    let diagnostics = map_diagnostics(&sys, &diag_points, &ctx);

    let condition_outcomes: Vec<ConditionOutcome> = conditions
        .iter()
        .map(|id| {
            let grid = match id.domain() {
                verdict::Domain::Ctilde => &full_grid,
                verdict::Domain::Interior => &interior_grid,
            };
            check_condition(&sys, *id, grid, &ctx)
        })
        .collect();

    let sim = SimParams { dt };
    let assumption_outcomes: Vec<AssumptionOutcome> = assumptions
        .iter()
        .map(|id| check_assumption(&sys, *id, &boundary_grid, &scenario.radii, sim, &ctx))
        .collect();

    let oracle = if run_oracle {
        let request = scenario.oracle.clone().unwrap_or(crate::scenario::OracleRequest {
            starts: default_starts(&boundary_grid, &interior_grid),
            ensemble: 16,
        });
        Some(flows::monotonicity_oracle(
            sys.set,
            sys.map,
            sys.function,
            &request.starts,
            request.ensemble,
            dt,
            horizon,
            seed,
            &ctx,
        ))
    } else {
        None
    };

    let mut cond_map = BTreeMap::new();
    for outcome in &condition_outcomes {
        match &outcome.verdict {
            Verdict::HoldsOnSamples { .. } => {
                cond_map.insert(outcome.id, true);
            }
            Verdict::Violated { .. } => {
                cond_map.insert(outcome.id, false);
            }
            Verdict::Inconclusive { .. } => {}
        }
    }
    let mut assume_map: BTreeMap<AssumptionId, (bool, ProxyStatus)> = BTreeMap::new();
    for outcome in &assumption_outcomes {
        match &outcome.verdict {
            Verdict::HoldsOnSamples { .. } => {
                assume_map.insert(outcome.id, (true, outcome.proxy));
            }
            Verdict::Violated { .. } => {
                assume_map.insert(outcome.id, (false, outcome.proxy));
            }
            Verdict::Inconclusive { .. } => {}
        }
    }
    let conclusion = apply_theory(&TheoryInputs {
        class: scenario.function.class(),
        conditions: cond_map,
        assumptions: assume_map,
        f_continuous: diagnostics.continuous,
        f_lipschitz: diagnostics.lipschitz,
        f_exact: diagnostics.exact,
        boundary_all_trivial,
    });

    RunResults {
        seed,
        dt,
        horizon,
        boundary_grid,
        interior_grid,
        diagnostics,
        conditions: condition_outcomes,
        assumptions: assumption_outcomes,
        oracle,
        conclusion,
    }
}

pub fn run(scenario: &Scenario, config: &RunConfig) -> RunArtifacts {
    let results = run_checks(scenario, config);
    let ctx = QueryCtx { bounds: &scenario.bounds, tols: &scenario.tols, seed: results.seed };

    let mut trajectories: Vec<(String, String)> = Vec::new();
    if let Some(oracle) = &results.oracle {
        if let Some(w) = &oracle.witness {
            trajectories.push((
                format!("{}.witness.traj.csv", scenario.name),
                w.trajectory.to_csv(&scenario.function, scenario.tols.tau_mem),
            ));
        }
        if config.emit_trajectories {
            if let Some(request) = &scenario.oracle {
                for (i, start) in request.starts.iter().enumerate() {
                    let traj = flows::simulate(
                        &scenario.set,
                        &scenario.map,
                        start,
                        &flows::ensemble_strategy(0),
                        results.dt,
                        results.horizon,
                        crate::sampling::derive_seed(results.seed, 0x0ac1e, crate::sampling::point_hash(start)),
                        &ctx,
                    );
                    trajectories.push((
                        format!("{}.start{}.traj.csv", scenario.name, i),
                        traj.to_csv(&scenario.function, scenario.tols.tau_mem),
                    ));
                }
            }
        }
    }

    let inconclusive_present = results.conditions.iter().any(|c| c.verdict.is_inconclusive())
        || results.assumptions.iter().any(|a| a.verdict.is_inconclusive())
        || results.oracle.as_ref().is_some_and(|o| o.verdict.is_inconclusive());

    let report = render_report(scenario, &results, config.reproducible);
    RunArtifacts { report, trajectories, inconclusive_present }
}

fn default_starts(boundary: &[GridPoint], interior: &[GridPoint]) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = boundary
        .iter()
        .filter(|g| g.class.label != CtildeLabel::TrivialOnly)
        .take(3)
        .map(|g| g.point.clone())
        .collect();
    starts.extend(interior.iter().take(3_usize.saturating_sub(starts.len())).map(|g| g.point.clone()));
    starts
}

fn fmt_f(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let inner: Vec<String> = v.iter().map(|c| fmt_f(*c)).collect();
    format!("[{}]", inner.join(", "))
}

fn write_witness(out: &mut String, table: &str, w: &Witness) {
    let _ = writeln!(out, "[[{table}]]");
    let _ = writeln!(out, "point = {}", fmt_vec(&w.point));
    if let Some(eta) = &w.eta {
        let _ = writeln!(out, "eta = {}", fmt_vec(eta));
    }
    if let Some(zeta) = &w.zeta {
        let _ = writeln!(out, "zeta = {}", fmt_vec(zeta));
    }
    let _ = writeln!(out, "value = {}", fmt_f(w.value));
}

fn write_verdict_fields(out: &mut String, verdict: &Verdict) {
    let _ = writeln!(out, "verdict = \"{verdict}\"");
    let b = verdict.budget();
    let _ = writeln!(
        out,
        "budget = {{ points = {}, unknown = {}, directions = {}, velocities = {}, inconclusive = {} }}",
        b.points, b.unknown_points, b.directions, b.velocities, b.inconclusive
    );
    if let Verdict::Inconclusive { reason, .. } = verdict {
        let _ = writeln!(out, "reason = \"{reason}\"");
    }
}

fn render_report(scenario: &Scenario, results: &RunResults, reproducible: bool) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "schema = \"noninc-verdict/1\"");
    let _ = writeln!(w, "scenario = \"{}\"", scenario.name);
    let _ = writeln!(w, "seed = {}", results.seed);
    let _ = writeln!(w, "dt = {}", fmt_f(results.dt));
    let _ = writeln!(w, "horizon = {}", fmt_f(results.horizon));
    if !reproducible {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(w, "generated_unix = {now}");
    }
    let _ = writeln!(w);

    let count = |grid: &[GridPoint], label: CtildeLabel| grid.iter().filter(|g| g.class.label == label).count();
    let boundary = &results.boundary_grid;
    let _ = writeln!(w, "[grid]");
    let _ = writeln!(w, "boundary_points = {}", boundary.len());
    let _ = writeln!(w, "interior_points = {}", results.interior_grid.len());
    let _ = writeln!(w, "boundary_nontrivial = {}", count(boundary, CtildeLabel::Nontrivial));
    let _ = writeln!(w, "boundary_trivial_only = {}", count(boundary, CtildeLabel::TrivialOnly));
    let _ = writeln!(w, "boundary_unknown = {}", count(boundary, CtildeLabel::Unknown));
    let _ = writeln!(w);

    let diag = &results.diagnostics;
    let _ = writeln!(w, "[map]");
    let _ = writeln!(w, "continuous_on_samples = {}", diag.continuous);
    let _ = writeln!(w, "lipschitz_estimate = {}", fmt_f(diag.lipschitz_estimate));
    let _ = writeln!(w, "usc_defect = {}", fmt_f(diag.usc_defect));
    let _ = writeln!(w, "lsc_defect = {}", fmt_f(diag.lsc_defect));
    let _ = writeln!(w, "structural = {}", if diag.exact { "\"exact\"" } else { "\"sampled\"" });
    let _ = writeln!(w);

    for outcome in &results.conditions {
        let _ = writeln!(w, "[[condition]]");
        let _ = writeln!(w, "id = \"{}\"", outcome.id);
        write_verdict_fields(w, &outcome.verdict);
        let _ = writeln!(w, "points_total = {}", outcome.points_total);
        let _ = writeln!(w, "points_skipped = {}", outcome.points_skipped);
        let _ = writeln!(w, "near_boundary_ties = {}", outcome.ties);
        for witness in outcome.verdict.witnesses() {
            write_witness(w, "condition.witness", witness);
        }
        let _ = writeln!(w);
    }

    for outcome in &results.assumptions {
        let _ = writeln!(w, "[[assumption]]");
        let _ = writeln!(w, "id = \"{}\"", outcome.id);
        write_verdict_fields(w, &outcome.verdict);
        let _ = writeln!(w, "status = \"{}\"", outcome.proxy);
        let _ = writeln!(w, "note = \"{}\"", outcome.note.replace('"', "'"));
        for witness in outcome.verdict.witnesses() {
            write_witness(w, "assumption.witness", witness);
        }
        let _ = writeln!(w);
    }

    if let Some(report) = &results.oracle {
        let _ = writeln!(w, "[oracle]");
        write_verdict_fields(w, &report.verdict);
        let _ = writeln!(w, "trajectories = {}", report.trajectories);
        let _ = writeln!(w, "tol_mono = {}", fmt_f(report.tol_mono));
        let _ = writeln!(w, "velocity_bound = {}", fmt_f(report.velocity_bound));
        let _ = writeln!(w, "gradient_bound = {}", fmt_f(report.gradient_bound));
        if let Some(witness) = &report.witness {
            let _ = writeln!(w);
            let _ = writeln!(w, "[oracle.witness]");
            let _ = writeln!(w, "start_index = {}", witness.start_index);
            let _ = writeln!(w, "trajectory_index = {}", witness.trajectory_index);
            let _ = writeln!(w, "step_low = {}", witness.step_low);
            let _ = writeln!(w, "step_high = {}", witness.step_high);
            let _ = writeln!(w, "value_low = {}", fmt_f(witness.value_low));
            let _ = writeln!(w, "value_high = {}", fmt_f(witness.value_high));
            let _ = writeln!(w, "increase = {}", fmt_f(witness.value_high - witness.value_low));
            let _ = writeln!(w, "termination = \"{}\"", witness.trajectory.termination.name());
        }
        let _ = writeln!(w);
    }

    let conclusion = &results.conclusion;
    let _ = writeln!(w, "[conclusion]");
    let _ = writeln!(
        w,
        "theorem = {}",
        conclusion.theorem.map(|t| format!("\"{t}\"")).unwrap_or_else(|| "\"none\"".into())
    );
    let _ = writeln!(
        w,
        "condition = {}",
        conclusion.condition.map(|c| format!("\"{c}\"")).unwrap_or_else(|| "\"none\"".into())
    );
    let _ = writeln!(w, "direction = \"{}\"", conclusion.direction.name());
    let _ = writeln!(w, "star = \"{}\"", conclusion.star.name());
    for h in &conclusion.hypotheses {
        let _ = writeln!(w, "[[conclusion.hypothesis]]");
        let _ = writeln!(w, "name = \"{}\"", h.name);
        let _ = writeln!(w, "sample_based = {}", h.sample_based);
    }
    out
}

/// Recomputes every condition witness residual against the checker.
/// Returns the absolute deviations; the report invariant requires them
/// below 1e-12.
pub fn revalidate_conditions(scenario: &Scenario, outcomes: &[ConditionOutcome], seed: u64) -> Vec<f64> {
    let ctx = QueryCtx { bounds: &scenario.bounds, tols: &scenario.tols, seed };
    let sys = System { set: &scenario.set, map: &scenario.map, function: &scenario.function };
    let mut deviations = Vec::new();
    for outcome in outcomes {
        for witness in outcome.verdict.witnesses() {
            if let Some(r) = verdict::revalidate_witness(&sys, witness, &ctx) {
                deviations.push((r - witness.value).abs());
            }
        }
    }
    deviations
}
