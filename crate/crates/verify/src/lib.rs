//! Pinned tolerances for the acceptance suite in `tests/acceptance.rs`.
//! Run it with `cargo test -p crossdiff-verify --test acceptance`.

/// Relative per-species mass drift over a run without growth.
pub const MASS_DRIFT_TOL: f64 = 1e-12;
pub const MASS_STEPS: usize = 10_000;

/// Accepted ratio of heat-oracle L2 errors between n = 256 and n = 512.
pub const HEAT_RATIO_RANGE: (f64, f64) = (3.2, 4.8);

pub const BARENBLATT_L1_TOL: f64 = 0.02;
/// Support edge: outermost cell with density above this fraction of the maximum.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;
/// Relative deviation of the fitted support exponent from `1 / (alpha + 1)`.
pub const SUPPORT_EXPONENT_TOL: f64 = 0.05;

pub const CONFINED_L1_TOL: f64 = 0.01;

/// Entropy residual allowed per step, in units of that step's `dt`.
pub const ENTROPY_SLACK: f64 = 1.0;

/// Mean `|m11|` of the coarsest rung over that of the second-finest.
pub const M11_FACTOR_MIN: f64 = 2.0;
pub const CS_RATIO_MAX: f64 = 1.0 + 1e-12;

/// Observed order of the balance-law residuals under `(dx, dt) -> (dx/2, dt/4)`.
pub const RESIDUAL_RATE_MIN: f64 = 1.0;

/// Max-norm gap per step between the weighted and the rescaled solve.
pub const WEIGHTED_TOL: f64 = 1e-12;
