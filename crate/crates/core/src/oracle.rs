//! Closed-form reference solutions and error reports against them.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;

use crate::domain::{Field, GridSpec};
use crate::error::{Error, Result};
use crate::model::AnalyticProfile;
use crate::solver::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExactSolution {
    /// `mass / sqrt(4 pi D tau) exp(-(x - center)^2 / (4 D tau))`, `tau = t + t_offset`.
    GaussianHeat {
        diffusivity: f64,
        mass: f64,
        center: f64,
        t_offset: f64,
    },
    /// Self-similar solution of `d_t s = (1/alpha) d_xx s^alpha`, evaluated at
    /// `tau = (t + t_offset) / alpha` of the standard profile.
    Barenblatt {
        alpha: f64,
        mass: f64,
        t_offset: f64,
    },
    /// Stationary profile with `p(s) + V` constant on its support. The mass
    /// constraint is resolved over `window`.
    ConfinedSteadyState {
        alpha: f64,
        potential: AnalyticProfile,
        mass: f64,
        window: (f64, f64),
    },
}

/// Barenblatt shape constants `k = 1/(alpha+1)`, `kappa = (alpha-1) k / (2 alpha)`.
fn barenblatt_exponents(alpha: f64) -> (f64, f64, f64) {
    let k = 1.0 / (alpha + 1.0);
    let kappa = (alpha - 1.0) * k / (2.0 * alpha);
    let m = 1.0 / (alpha - 1.0);
    (k, kappa, m)
}

/// Height constant `C` of the Barenblatt profile carrying `mass`.
pub fn barenblatt_constant(alpha: f64, mass: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "Barenblatt profile needs alpha > 1, got {alpha}"
        )));
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "Barenblatt mass must be positive, got {mass}"
        )));
    }
    let (_, kappa, m) = barenblatt_exponents(alpha);
    // mass = C^(m + 1/2) kappa^(-1/2) B(1/2, m + 1)
    let unit = beta(0.5, m + 1.0) / kappa.sqrt();
    Ok((mass / unit).powf(1.0 / (m + 0.5)))
}

/// Closed-form normalisation for `alpha = 2`, `V = x^2 / 2`.
pub fn confined_quadratic_constant(mass: f64) -> f64 {
    (3.0 * mass / (4.0 * 2.0_f64.sqrt())).powf(2.0 / 3.0)
}

impl ExactSolution {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExactSolution::GaussianHeat {
                diffusivity,
                mass,
                center,
                t_offset,
            } => {
                if !(*diffusivity > 0.0
                    && mass.is_finite()
                    && *mass >= 0.0
                    && center.is_finite()
                    && t_offset.is_finite())
                {
                    return Err(Error::InvalidInput(
                        "Gaussian oracle needs D > 0 and finite parameters".into(),
                    ));
                }
            }
            ExactSolution::Barenblatt {
                alpha,
                mass,
                t_offset,
            } => {
                barenblatt_constant(*alpha, *mass)?;
                if !t_offset.is_finite() {
                    return Err(Error::InvalidInput("t_offset must be finite".into()));
                }
            }
            ExactSolution::ConfinedSteadyState {
                alpha,
                mass,
                window,
                ..
            } => {
                if !(*alpha >= 1.0 && alpha.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "confined steady state needs alpha >= 1, got {alpha}"
                    )));
                }
                if !(*mass > 0.0 && mass.is_finite()) {
                    return Err(Error::InvalidInput("confined mass must be positive".into()));
                }
                if !(window.1 > window.0) {
                    return Err(Error::InvalidInput(
                        "confined window must be nonempty".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let tau = match self {
            ExactSolution::GaussianHeat { t_offset, .. }
            | ExactSolution::Barenblatt { t_offset, .. } => t + t_offset,
            ExactSolution::ConfinedSteadyState { .. } => return Ok(()),
        };
        if !(tau > 0.0) {
            return Err(Error::InvalidInput(format!(
                "self-similar profile evaluated at t + t_offset = {tau} <= 0"
            )));
        }
        Ok(())
    }

    /// Pointwise evaluator; parameters must already be validated.
    pub fn pointwise(&self, t: f64) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        self.validate()?;
        self.check_time(t)?;
        Ok(match self.clone() {
            ExactSolution::GaussianHeat {
                diffusivity,
                mass,
                center,
                t_offset,
            } => {
                let tau = t + t_offset;
                let a = mass / (4.0 * PI * diffusivity * tau).sqrt();
                let b = 4.0 * diffusivity * tau;
                Box::new(move |x: f64| a * (-(x - center).powi(2) / b).exp())
            }
            ExactSolution::Barenblatt {
                alpha,
                mass,
                t_offset,
            } => {
                let c = barenblatt_constant(alpha, mass)?;
                let (k, kappa, m) = barenblatt_exponents(alpha);
                let tau = (t + t_offset) / alpha;
                let amp = tau.powf(-k);
                let q = kappa * tau.powf(-2.0 * k);
                Box::new(move |x: f64| {
                    let base = c - q * x * x;
                    if base <= 0.0 {
                        0.0
                    } else {
                        amp * base.powf(m)
                    }
                })
            }
            ExactSolution::ConfinedSteadyState {
                alpha,
                potential,
                mass,
                window,
            } => {
                let c = confined_constant(alpha, &potential, mass, window)?;
                Box::new(move |x: f64| confined_profile(alpha, c - potential.value(x)))
            }
        })
    }

    /// Cell-midpoint samples at time `t`.
    pub fn evaluate(&self, t: f64, grid: &GridSpec) -> Result<Field> {
        let f = self.pointwise(t)?;
        Ok(Field::from_fn(*grid, f))
    }

    pub fn mass(&self) -> f64 {
        match self {
            ExactSolution::GaussianHeat { mass, .. }
            | ExactSolution::Barenblatt { mass, .. }
            | ExactSolution::ConfinedSteadyState { mass, .. } => *mass,
        }
    }

    /// Support half-width at time `t` for the Barenblatt profile, centred at 0.
    pub fn support_radius(&self, t: f64) -> Result<f64> {
        match self {
            ExactSolution::Barenblatt {
                alpha,
                mass,
                t_offset,
            } => {
                self.check_time(t)?;
                let c = barenblatt_constant(*alpha, *mass)?;
                let (k, kappa, _) = barenblatt_exponents(*alpha);
                let tau = (t + t_offset) / alpha;
                Ok((c / kappa).sqrt() * tau.powf(k))
            }
            _ => Err(Error::InvalidInput(
                "support radius is only defined for the Barenblatt profile".into(),
            )),
        }
    }

    /// Mass by high-accuracy quadrature of the closed form at time `t`.
    pub fn quadrature_mass(&self, t: f64) -> Result<f64> {
        let f = self.pointwise(t)?;
        match self {
            ExactSolution::GaussianHeat {
                diffusivity,
                center,
                t_offset,
                ..
            } => {
                let sd = (2.0 * diffusivity * (t + t_offset)).sqrt();
                Ok(simpson(&f, center - 40.0 * sd, center + 40.0 * sd, 20_000))
            }
            ExactSolution::Barenblatt { .. } => {
                let r = self.support_radius(t)?;
                // x = r sin(theta) removes the edge singularity of the derivative
                Ok(simpson(
                    |th| f(r * th.sin()) * r * th.cos(),
                    -FRAC_PI_2,
                    FRAC_PI_2,
                    20_000,
                ))
            }
            ExactSolution::ConfinedSteadyState {
                alpha,
                potential,
                mass,
                window,
            } => {
                let c = confined_constant(*alpha, potential, *mass, *window)?;
                Ok(confined_mass(*alpha, potential, c, *window))
            }
        }
    }
}

fn confined_profile(alpha: f64, gap: f64) -> f64 {
    if alpha == 1.0 {
        return gap.exp();
    }
    if gap <= 0.0 {
        0.0
    } else {
        ((alpha - 1.0) * gap).powf(1.0 / (alpha - 1.0))
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Mass of the confined profile with constant `c` inside `window`.
fn confined_mass(alpha: f64, potential: &AnalyticProfile, c: f64, window: (f64, f64)) -> f64 {
    let gap = |x: f64| c - potential.value(x);
    if alpha == 1.0 {
        return simpson(|x| gap(x).exp(), window.0, window.1, 20_000);
    }
    // split the window where the profile switches on or off
    const SCAN: usize = 4096;
    let (a, b) = window;
    let h = (b - a) / SCAN as f64;
    let mut edges = vec![a];
    for i in 0..SCAN {
        let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
        if (gap(x0) > 0.0) != (gap(x1) > 0.0) {
            edges.push(bisect(gap, x0, x1));
        }
    }
    edges.push(b);
    edges
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            if gap(0.5 * (lo + hi)) <= 0.0 {
                return 0.0;
            }
            // x = lo + (hi - lo)(1 - cos phi)/2 flattens the edge behaviour
            let half = 0.5 * (hi - lo);
            simpson(
                |phi| {
                    confined_profile(alpha, gap(lo + half * (1.0 - phi.cos()))) * half * phi.sin()
                },
                0.0,
                PI,
                8000,
            )
        })
        .sum()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == flo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Constant `C` such that the confined profile carries `mass` in `window`.
pub fn confined_constant(
    alpha: f64,
    potential: &AnalyticProfile,
    mass: f64,
    window: (f64, f64),
) -> Result<f64> {
    if alpha < 1.0 {
        return Err(Error::InvalidInput(format!(
            "confined steady state needs alpha >= 1, got {alpha}"
        )));
    }
    let (a, b) = window;
    let n = 2048;
    let vs: Vec<f64> = (0..=n)
        .map(|i| potential.value(a + (b - a) * i as f64 / n as f64))
        .collect();
    let v_min = vs.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !v_min.is_finite() || !v_max.is_finite() {
        return Err(Error::InvalidInput(
            "confining potential is not finite on the window".into(),
        ));
    }
    let m = |c: f64| confined_mass(alpha, potential, c, window);
    let mut lo = if alpha == 1.0 { v_min - 50.0 } else { v_min };
    let mut hi = v_max.max(v_min + 1.0);
    let mut grow = 0;
    while m(hi) < mass {
        hi = v_min + 2.0 * (hi - v_min);
        grow += 1;
        if grow > 200 {
            return Err(Error::InvalidInput(
                "could not bracket the confined normalisation".into(),
            ));
        }
    }
    if alpha == 1.0 {
        while m(lo) > mass {
            lo -= 50.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if m(mid) < mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// Per-snapshot `L1`, `L2` and `Linf` norms of `u - exact`.
pub fn error_report(traj: &Trajectory, sol: &ExactSolution) -> Result<Vec<ErrorRow>> {
    if traj
        .snapshots
        .iter()
        .any(|s| s.v.values.iter().any(|&x| x != 0.0))
    {
        return Err(Error::InvalidInput(
            "oracle comparison needs a single-species trajectory (v = 0)".into(),
        ));
    }
    let grid = traj.grid;
    let dx = grid.dx();
    traj.snapshots
        .iter()
        .map(|s| {
            let exact = sol.evaluate(s.t, &grid)?;
            let (mut l1, mut l2, mut linf) = (0.0, 0.0, 0.0_f64);
            for (a, b) in s.u.values.iter().zip(&exact.values) {
                let e = (a - b).abs();
                l1 += e;
                l2 += e * e;
                linf = linf.max(e);
            }
            Ok(ErrorRow {
                t: s.t,
                l1: dx * l1,
                l2: (dx * l2).sqrt(),
                linf,
            })
        })
        .collect()
}
