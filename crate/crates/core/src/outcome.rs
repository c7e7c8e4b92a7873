//! Shared verdict and witness types returned by checkers and diagnostics.

use std::fmt;

/// A concrete counterexample attached to a `Verdict::Violated`.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// State-space point the violation was found at.
    pub point: Vec<f64>,
    /// Derivative-side vector (gradient vertex, subgradient, or normal
    /// direction), when the check has one.
    pub eta: Option<Vec<f64>>,
    /// Velocity-side vector, when the check has one.
    pub zeta: Option<Vec<f64>>,
    /// The residual that crossed the threshold (inner product, cone
    /// quotient, or jump size, depending on the check).
    pub value: f64,
}

impl Witness {
    pub fn at(point: &[f64], value: f64) -> Self {
        Witness { point: point.to_vec(), eta: None, zeta: None, value }
    }

    pub fn pair(point: &[f64], eta: &[f64], zeta: &[f64], value: f64) -> Self {
        Witness {
            point: point.to_vec(),
            eta: Some(eta.to_vec()),
            zeta: Some(zeta.to_vec()),
            value,
        }
    }
}

/// How a diagnostic relates to the property it reports on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxyStatus {
    /// The check decides the property itself (up to numerics).
    Exact,
    /// The check tests a sufficient or stand-in criterion.
    Proxy,
    /// The check draws its evidence from simulated trajectories.
    SimulationBased,
}

impl fmt::Display for ProxyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProxyStatus::Exact => write!(f, "exact"),
            ProxyStatus::Proxy => write!(f, "proxy"),
            ProxyStatus::SimulationBased => write!(f, "simulation-based"),
        }
    }
}

/// Sampling effort a verdict is based on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Budget {
    /// Points the quantifier domain was sampled at.
    pub points: usize,
    /// Points whose domain membership could not be classified and were
    /// evaluated with a flag instead of being skipped.
    pub unknown_points: usize,
    /// Direction samples per derivative object.
    pub directions: usize,
    /// Velocity samples per point.
    pub velocities: usize,
    /// Subqueries that came back inconclusive.
    pub inconclusive: usize,
}

/// Outcome of a sampled condition or assumption check.
///
/// `HoldsOnSamples` is evidence, `Violated` carries a replayable witness,
/// `Inconclusive` means the budget ran out before a determination.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    HoldsOnSamples { budget: Budget },
    Violated { witnesses: Vec<Witness>, budget: Budget },
    Inconclusive { reason: String, budget: Budget },
}

impl Verdict {
    pub fn holds(budget: Budget) -> Self {
        Verdict::HoldsOnSamples { budget }
    }

    pub fn violated(witnesses: Vec<Witness>, budget: Budget) -> Self {
        Verdict::Violated { witnesses, budget }
    }

    pub fn inconclusive(reason: impl Into<String>, budget: Budget) -> Self {
        Verdict::Inconclusive { reason: reason.into(), budget }
    }

    pub fn is_holds(&self) -> bool {
        matches!(self, Verdict::HoldsOnSamples { .. })
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, Verdict::Violated { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, Verdict::Inconclusive { .. })
    }

    pub fn budget(&self) -> &Budget {
        match self {
            Verdict::HoldsOnSamples { budget }
            | Verdict::Violated { budget, .. }
            | Verdict::Inconclusive { budget, .. } => budget,
        }
    }

    pub fn witnesses(&self) -> &[Witness] {
        match self {
            Verdict::Violated { witnesses, .. } => witnesses,
            _ => &[],
        }
    }

    /// Primary witness, when violated.
    pub fn witness(&self) -> Option<&Witness> {
        self.witnesses().first()
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::HoldsOnSamples { .. } => write!(f, "HOLDS-ON-SAMPLES"),
            Verdict::Violated { .. } => write!(f, "VIOLATED"),
            Verdict::Inconclusive { .. } => write!(f, "INCONCLUSIVE"),
        }
    }
}
