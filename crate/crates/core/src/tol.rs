//! Numerical tolerances used throughout the toolkit.
//!
//! Every knob here can be overridden per scenario file; the defaults are the
//! values the checkers and the test fixtures are calibrated against.

/// Tolerance bundle threaded through set, cone, and condition queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Membership slack on constraint leaf values (`g(x) <= tau_mem` for
    /// inequality leaves, `|g(x)| <= tau_mem` for equality leaves).
    pub tau_mem: f64,
    /// Contingent-cone residual threshold: a direction is tangent when the
    /// minimized quotient `|x + h v|_S / h` stays below this.
    pub eps_tan: f64,
    /// Proximal-normal test threshold on `| |x + r z|_S - r|z| | / (r |z|)`.
    pub eps_nrm: f64,
    /// Relative slack on the projection touch-point: a proximal normal must
    /// project back onto its base point within `eps_touch * r |z|`.
    pub eps_touch: f64,
    /// Duality slack for the normal/tangent pairing property.
    pub eps_dual: f64,
    /// Inner-product threshold for condition checks; values at or below it
    /// count as holding (near-boundary ties are annotated, not flagged).
    pub eps_cond: f64,
    /// Slack on the "constant inner product across all gradient vertices"
    /// clause of the nonpathological condition variants.
    pub eps_const: f64,
    /// Kink-detection window on the switching argument of abs/min/max.
    pub tau_kink: f64,
    /// Relative accuracy target for distance computations on the fixtures.
    pub eps_proj: f64,
    /// Containment slack applied to simulated states. Steps that would leave
    /// `cl(C)` by more than this are bisected back onto the boundary.
    pub tau_flow: f64,
    /// Absolute floor of the monotonicity tolerance.
    pub tol_mono_abs: f64,
    /// Any single-step increase of at least this much is always a violation
    /// (jump detection for lower semicontinuous functions).
    pub jump_increase: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tau_mem: 1e-9,
            eps_tan: 1e-4,
            eps_nrm: 1e-4,
            eps_touch: 1e-6,
            eps_dual: 1e-3,
            eps_cond: 1e-6,
            eps_const: 1e-6,
            tau_kink: 1e-12,
            eps_proj: 1e-6,
            tau_flow: 1e-12,
            tol_mono_abs: 1e-6,
            jump_increase: 0.5,
        }
    }
}

/// Geometric grid of step sizes used to realize `liminf_{h -> 0+}` tests:
/// `1e-2 * 2^-k` for `k = 0..=20`.
pub fn h_grid() -> impl Iterator<Item = f64> {
    (0..=20).map(|k| 1e-2 * 0.5f64.powi(k))
}

/// Probe radii for the proximal-normal touching-ball test.
pub const PROX_RADII: [f64; 3] = [1e-3, 1e-2, 1e-1];

/// Default shrinking neighborhood radii for localized assumption checks.
pub const NEIGHBORHOOD_RADII: [f64; 2] = [1e-2, 1e-3];
