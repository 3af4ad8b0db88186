//! Monitored functionals, entropy dissipation checks and weak residuals of
//! the balance laws satisfied by smooth solutions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{gradient, integrate, Boundary, Field, GridSpec, State};
use crate::error::{Error, Result};
use crate::model::{to_reduced_state, weighted_reduction, Discretization, ModelSpec};
use crate::solver::Trajectory;

/// `x log x` with `0 log 0 = 0`.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `a / b`, or 0 where `b` vanishes.
#[inline]
fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// `dx * sum_faces ((f_r - f_l) / dx)^2`, i.e. the squared `L^2` norm of the
/// two-point gradient. No-flux boundary faces do not contribute.
pub fn face_gradient_sq(values: &[f64], grid: &GridSpec) -> f64 {
    let n = values.len();
    let mut acc: f64 = values
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum();
    if grid.boundary == Boundary::Periodic {
        let d = values[0] - values[n - 1];
        acc += d * d;
    }
    acc / grid.dx()
}

/// `dx * sum_faces |f_r - f_l| / dx`, the total variation.
pub fn face_gradient_abs(values: &[f64], grid: &GridSpec) -> f64 {
    let n = values.len();
    let mut acc: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    if grid.boundary == Boundary::Periodic {
        acc += (values[0] - values[n - 1]).abs();
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpNorms {
    pub l1: (f64, f64),
    pub l2: (f64, f64),
    pub linf: (f64, f64),
}

/// Scalar functionals of one state. Quantities built from the total density
/// use the pressure argument `c_u u + c_v v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    /// `int s |x|`
    pub moment1_s: f64,
    pub lp_norms: LpNorms,
    /// `int u log u + v log v`
    pub entropy: f64,
    /// `int (|u log u| + |v log v|) |x|^(1/2)`
    pub entropy_moment: f64,
    /// `||d_x s^(alpha/2)||^2`
    pub grad_s_alpha_half_sq: f64,
    /// `||d_x s^alpha||^2`
    pub grad_s_alpha_sq: f64,
    /// `eps ||d_x sqrt(u)||^2`
    pub eps_grad_sqrt_u_sq: f64,
    pub eps_grad_sqrt_v_sq: f64,
    /// `eps ||d_x u||^2`
    pub eps_grad_u_sq: f64,
    pub eps_grad_v_sq: f64,
    /// `||d_x s||^2`, reported for `alpha <= 2`.
    pub grad_s_sq: Option<f64>,
    /// `int |d_x s^(1 - alpha)|`, reported for `alpha <= 1/3`.
    pub fast_diff_grad: Option<f64>,
    pub linf_s: f64,
    /// `int (u log u + v log v + s |x|)`
    pub entropy_compensated: f64,
    /// `-(4/e) int exp(-|x|/2)`, the pointwise lower bound summed over both species.
    pub entropy_compensated_floor: f64,
}

impl DiagnosticsRecord {
    /// CSV column order.
    pub const COLUMNS: [&'static str; 23] = [
        "t",
        "mass_u",
        "mass_v",
        "moment1_s",
        "l1_u",
        "l1_v",
        "l2_u",
        "l2_v",
        "linf_u",
        "linf_v",
        "entropy",
        "entropy_moment",
        "grad_s_alpha_half_sq",
        "grad_s_alpha_sq",
        "eps_grad_sqrt_u_sq",
        "eps_grad_sqrt_v_sq",
        "eps_grad_u_sq",
        "eps_grad_v_sq",
        "grad_s_sq",
        "fast_diff_grad",
        "linf_s",
        "entropy_compensated",
        "entropy_compensated_floor",
    ];

    /// Values in [`Self::COLUMNS`] order; unreported entries are `None`.
    pub fn row(&self) -> Vec<Option<f64>> {
        let n = &self.lp_norms;
        vec![
            Some(self.t),
            Some(self.mass_u),
            Some(self.mass_v),
            Some(self.moment1_s),
            Some(n.l1.0),
            Some(n.l1.1),
            Some(n.l2.0),
            Some(n.l2.1),
            Some(n.linf.0),
            Some(n.linf.1),
            Some(self.entropy),
            Some(self.entropy_moment),
            Some(self.grad_s_alpha_half_sq),
            Some(self.grad_s_alpha_sq),
            Some(self.eps_grad_sqrt_u_sq),
            Some(self.eps_grad_sqrt_v_sq),
            Some(self.eps_grad_u_sq),
            Some(self.eps_grad_v_sq),
            self.grad_s_sq,
            self.fast_diff_grad,
            Some(self.linf_s),
            Some(self.entropy_compensated),
            Some(self.entropy_compensated_floor),
        ]
    }
}

/// Evaluates every monitored functional of `state`.
pub fn record(state: &State, model: &ModelSpec) -> DiagnosticsRecord {
    let grid = state.grid();
    let dx = grid.dx();
    let law = &model.pressure;
    let alpha = law.alpha;
    let eps = model.epsilon;
    let u = &state.u.values;
    let v = &state.v.values;
    let n = u.len();
    let s: Vec<f64> = (0..n).map(|i| law.total(u[i], v[i])).collect();
    let xs = grid.centers();

    let sum = |f: &dyn Fn(usize) -> f64| dx * (0..n).map(f).sum::<f64>();
    let l1 = |a: &[f64]| dx * a.iter().map(|x| x.abs()).sum::<f64>();
    let l2 = |a: &[f64]| (dx * a.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let linf = |a: &[f64]| a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));

    let sqrt_u: Vec<f64> = u.iter().map(|x| x.max(0.0).sqrt()).collect();
    let sqrt_v: Vec<f64> = v.iter().map(|x| x.max(0.0).sqrt()).collect();
    let s_half: Vec<f64> = s.iter().map(|x| x.max(0.0).powf(alpha / 2.0)).collect();
    let s_alpha: Vec<f64> = s.iter().map(|&x| law.power(x.max(0.0))).collect();

    let entropy = sum(&|i| xlogx(u[i]) + xlogx(v[i]));
    let moment1_s = sum(&|i| s[i] * xs[i].abs());
    DiagnosticsRecord {
        t: state.t,
        mass_u: integrate(&state.u),
        mass_v: integrate(&state.v),
        moment1_s,
        lp_norms: LpNorms {
            l1: (l1(u), l1(v)),
            l2: (l2(u), l2(v)),
            linf: (linf(u), linf(v)),
        },
        entropy,
        entropy_moment: sum(&|i| (xlogx(u[i]).abs() + xlogx(v[i]).abs()) * xs[i].abs().sqrt()),
        grad_s_alpha_half_sq: face_gradient_sq(&s_half, &grid),
        grad_s_alpha_sq: face_gradient_sq(&s_alpha, &grid),
        eps_grad_sqrt_u_sq: eps * face_gradient_sq(&sqrt_u, &grid),
        eps_grad_sqrt_v_sq: eps * face_gradient_sq(&sqrt_v, &grid),
        eps_grad_u_sq: eps * face_gradient_sq(u, &grid),
        eps_grad_v_sq: eps * face_gradient_sq(v, &grid),
        grad_s_sq: (alpha <= 2.0).then(|| face_gradient_sq(&s, &grid)),
        fast_diff_grad: (alpha <= 1.0 / 3.0).then(|| {
            let p: Vec<f64> = s.iter().map(|x| x.max(0.0).powf(1.0 - alpha)).collect();
            face_gradient_abs(&p, &grid)
        }),
        linf_s: linf(&s),
        entropy_compensated: entropy + moment1_s,
        entropy_compensated_floor: -2.0
            * (2.0 / std::f64::consts::E)
            * sum(&|i| (-xs[i].abs() / 2.0).exp()),
    }
}

/// [`record`] for every snapshot, in snapshot order.
pub fn record_trajectory(traj: &Trajectory) -> Vec<DiagnosticsRecord> {
    traj.snapshots
        .par_iter()
        .map(|s| record(s, &traj.model))
        .collect()
}

/// Smallest cellwise gap `rho log rho + rho |x| + (2/e) exp(-|x|/2)`; the
/// pointwise lower bound asserts it is nonnegative.
pub fn pointwise_entropy_bound_gap(f: &Field) -> f64 {
    f.values
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let w = f.grid.cell_center(i).abs();
            xlogx(r) + r * w + (2.0 / std::f64::consts::E) * (-w / 2.0).exp()
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub min: f64,
    pub max: f64,
    pub last: f64,
}

/// Min, max and final value of every column; columns never reported map to `None`.
pub fn summarize(records: &[DiagnosticsRecord]) -> Vec<(&'static str, Option<SeriesSummary>)> {
    let rows: Vec<Vec<Option<f64>>> = records.iter().map(|r| r.row()).collect();
    DiagnosticsRecord::COLUMNS
        .iter()
        .enumerate()
        .map(|(j, &name)| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            let summary = vals.last().map(|&last| SeriesSummary {
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                last,
            });
            (name, summary)
        })
        .collect()
}

/// One interval of the discrete entropy inequality
/// `dE/dt + (4/alpha^2) ||d_x s^(alpha/2)||^2 + 4 eps (||d_x sqrt u||^2 + ||d_x sqrt v||^2) <= C_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyInterval {
    pub t0: f64,
    pub t1: f64,
    /// `(E(t1) - E(t0)) / (t1 - t0)`
    pub rate: f64,
    /// Dissipation sampled at `t0`.
    pub dissipation: f64,
    pub bound: f64,
    /// `rate + dissipation - bound`; nonpositive up to time-discretization slack.
    pub residual: f64,
}

/// Streaming evaluation of the entropy inequality, fed step by step.
#[derive(Debug, Clone)]
pub struct EntropyMonitor {
    disc: Discretization,
    reduce: Option<crate::model::PressureLaw>,
    pub intervals: Vec<EntropyInterval>,
}

impl EntropyMonitor {
    /// Models with weighted pressure are checked in the reduced unknowns
    /// `(c_u u, c_v v)`, for which the inequality holds with unit weights.
    pub fn new(model: &ModelSpec, grid: GridSpec) -> Result<Self> {
        let reduced = weighted_reduction(model)?;
        let reduce = (!model.pressure.is_unit_weight()).then_some(model.pressure);
        Ok(EntropyMonitor {
            disc: Discretization::new(&reduced, grid)?,
            reduce,
            intervals: Vec::new(),
        })
    }

    fn prepare(&self, state: &State) -> Result<State> {
        match &self.reduce {
            Some(law) => to_reduced_state(state, law),
            None => Ok(state.clone()),
        }
    }

    fn entropy(state: &State) -> f64 {
        let dx = state.grid().dx();
        dx * state
            .u
            .values
            .iter()
            .zip(&state.v.values)
            .map(|(&a, &b)| xlogx(a) + xlogx(b))
            .sum::<f64>()
    }

    /// `(dissipation, C_bound)` at `state` (already reduced).
    fn terms(&self, state: &State) -> Result<(f64, f64)> {
        let model = &self.disc.model;
        let rec = record(state, model);
        let alpha = model.pressure.alpha;
        let dissipation = 4.0 / (alpha * alpha) * rec.grad_s_alpha_half_sq
            + 4.0 * (rec.eps_grad_sqrt_u_sq + rec.eps_grad_sqrt_v_sq);
        let (d1, d2) = self.disc.cell_second_derivatives(&state.u, &state.v)?;
        let mass = rec.mass_u + rec.mass_v;
        let mut bound = (d1.max_abs() + d2.max_abs()) * mass;
        let growth = &model.growth;
        if !growth.is_zero() {
            let s_max = rec.linf_s;
            let dx = state.grid().dx();
            let weighted =
                |f: &Field| dx * f.values.iter().map(|&x| x + xlogx(x).abs()).sum::<f64>();
            bound += growth.g1.sup_abs(s_max) * weighted(&state.u)
                + growth.g2.sup_abs(s_max) * weighted(&state.v);
        }
        Ok((dissipation, bound))
    }

    pub fn observe(&mut self, before: &State, after: &State, dt: f64) -> Result<()> {
        let a = self.prepare(before)?;
        let b = self.prepare(after)?;
        let span = if dt > 0.0 { dt } else { b.t - a.t };
        if !(span > 0.0) {
            return Err(Error::InvalidInput(
                "entropy interval has zero length".into(),
            ));
        }
        let rate = (Self::entropy(&b) - Self::entropy(&a)) / span;
        let (dissipation, bound) = self.terms(&a)?;
        self.intervals.push(EntropyInterval {
            t0: a.t,
            t1: a.t + span,
            rate,
            dissipation,
            bound,
            residual: rate + dissipation - bound,
        });
        Ok(())
    }
}

/// Per-interval residuals of the entropy inequality between consecutive
/// snapshots. Record every step (`output_every = 1`) for the per-step check.
pub fn entropy_dissipation_check(traj: &Trajectory) -> Result<Vec<f64>> {
    Ok(entropy_intervals(traj)?
        .into_iter()
        .map(|i| i.residual)
        .collect())
}

pub fn entropy_intervals(traj: &Trajectory) -> Result<Vec<EntropyInterval>> {
    if traj.snapshots.len() < 2 {
        return Err(Error::InvalidInput(
            "entropy check needs at least two snapshots".into(),
        ));
    }
    let mut monitor = EntropyMonitor::new(&traj.model, traj.grid)?;
    for w in traj.snapshots.windows(2) {
        monitor.observe(&w[0], &w[1], w[1].t - w[0].t)?;
    }
    Ok(monitor.intervals)
}

/// `exp(-1 / (1 - z^2))` on `|z| < 1`, zero elsewhere.
#[inline]
pub fn bump(z: f64) -> f64 {
    if z.abs() < 1.0 {
        (-1.0 / (1.0 - z * z)).exp()
    } else {
        0.0
    }
}

#[inline]
pub fn bump_derivative(z: f64) -> f64 {
    if z.abs() < 1.0 {
        let q = 1.0 - z * z;
        bump(z) * (-2.0 * z / (q * q))
    } else {
        0.0
    }
}

/// Space-time test function `bump((t - t_c) / t_w) * bump((x - x_c) / x_w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub t_center: f64,
    pub t_half_width: f64,
    pub x_center: f64,
    pub x_half_width: f64,
}

impl TestFunction {
    pub fn new(id: impl Into<String>, t: (f64, f64), x: (f64, f64)) -> Self {
        TestFunction {
            id: id.into(),
            t_center: t.0,
            t_half_width: t.1,
            x_center: x.0,
            x_half_width: x.1,
        }
    }

    pub fn time_factor(&self, t: f64) -> f64 {
        bump((t - self.t_center) / self.t_half_width)
    }

    pub fn space_factor(&self, x: f64) -> f64 {
        bump((x - self.x_center) / self.x_half_width)
    }

    pub fn space_derivative(&self, x: f64) -> f64 {
        bump_derivative((x - self.x_center) / self.x_half_width) / self.x_half_width
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.time_factor(t) * self.space_factor(x)
    }

    /// The support must lie strictly inside the spatial domain and inside
    /// the open time interval `(t_start, t_end)`.
    pub fn check_support(&self, grid: &GridSpec, t_start: f64, t_end: f64) -> Result<()> {
        if !(self.t_half_width > 0.0 && self.x_half_width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "test function {} needs positive widths",
                self.id
            )));
        }
        let (a, b) = (
            self.x_center - self.x_half_width,
            self.x_center + self.x_half_width,
        );
        if !(a > grid.x_min && b < grid.x_max) {
            return Err(Error::InvalidInput(format!(
                "test function {} support [{a}, {b}] touches the boundary of [{}, {}]",
                self.id, grid.x_min, grid.x_max
            )));
        }
        let (c, d) = (
            self.t_center - self.t_half_width,
            self.t_center + self.t_half_width,
        );
        if !(c >= t_start && d <= t_end) {
            return Err(Error::InvalidInput(format!(
                "test function {} time support [{c}, {d}] leaves [{t_start}, {t_end}]",
                self.id
            )));
        }
        Ok(())
    }
}

/// Three fixed bumps inside `grid` and `(t_start, t_end)`, used by the
/// refinement studies.
pub fn standard_test_functions(grid: &GridSpec, t_start: f64, t_end: f64) -> Vec<TestFunction> {
    let len = grid.len();
    let tc = 0.5 * (t_start + t_end);
    let tw = 0.45 * (t_end - t_start);
    [(-0.25, 0.2), (0.0, 0.3), (0.2, 0.15)]
        .iter()
        .enumerate()
        .map(|(k, &(c, w))| {
            TestFunction::new(
                format!("bump{k}"),
                (tc, tw),
                (grid.x_min + len * (0.5 + c), len * w),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Law {
    /// `u log u + v log v`
    Entropy,
    /// `u^2 / s`
    RatioSquared,
    /// `u^(theta+1) / s^theta`
    RatioTheta(f64),
    /// The weak formulation for `u` without viscosity.
    WeakFormU,
    WeakFormV,
    /// `s^(alpha+1) / (alpha+1)`
    EnergyIdentity,
}

impl Law {
    pub fn name(&self) -> String {
        match self {
            Law::Entropy => "entropy".into(),
            Law::RatioSquared => "ratio_squared".into(),
            Law::RatioTheta(th) => format!("ratio_theta_{th}"),
            Law::WeakFormU => "weak_u".into(),
            Law::WeakFormV => "weak_v".into(),
            Law::EnergyIdentity => "energy".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Law::RatioTheta(th) = self {
            if !(th.is_finite() && *th > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "theta must be positive, got {th}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Species {
    U,
    V,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResidual {
    pub law: Law,
    pub test_function_id: String,
    pub value: f64,
    /// `floor(log2(n_cells))` of the grid the residual was evaluated on.
    pub refinement_level: u32,
}

/// Fourth-order centred difference; cells within two of a no-flux edge fall
/// back to [`gradient`].
pub fn gradient4(values: &[f64], grid: &GridSpec) -> Vec<f64> {
    let n = values.len();
    let h = grid.dx();
    let periodic = grid.boundary == Boundary::Periodic;
    if n < 5 {
        return gradient(&Field {
            grid: *grid,
            values: values.to_vec(),
        })
        .values;
    }
    let at = |i: isize| values[i.rem_euclid(n as isize) as usize];
    let mut out = if periodic {
        vec![0.0; n]
    } else {
        gradient(&Field {
            grid: *grid,
            values: values.to_vec(),
        })
        .values
    };
    for i in 0..n as isize {
        if !periodic && (i < 2 || i > n as isize - 3) {
            continue;
        }
        out[i as usize] = (-at(i + 2) + 8.0 * at(i + 1) - 8.0 * at(i - 1) + at(i - 2)) / (12.0 * h);
    }
    out
}

/// Cell values of a balance law `d_t eta = d_x flux + source`, where the
/// viscous divergence part is folded into `flux`.
#[derive(Debug, Clone, PartialEq)]
pub struct LawTerms {
    pub eta: Vec<f64>,
    pub flux: Vec<f64>,
    pub source: Vec<f64>,
}

/// Cell fields shared by every law at one state (unit pressure weights).
struct Pointwise {
    u: Vec<f64>,
    v: Vec<f64>,
    s: Vec<f64>,
    du: Vec<f64>,
    dv: Vec<f64>,
    ds: Vec<f64>,
    ds_alpha: Vec<f64>,
    ds_half: Vec<f64>,
    dsqrt_u: Vec<f64>,
    dsqrt_v: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
    dd1: Vec<f64>,
    dd2: Vec<f64>,
    /// `d_x (s d_x (V1 - V2))`
    d_s_gap: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
}

impl Pointwise {
    fn new(state: &State, disc: &Discretization) -> Result<Self> {
        let model = &disc.model;
        let alpha = model.pressure.alpha;
        let grid = state.grid();
        let grad = |f: Vec<f64>| -> Vec<f64> { gradient4(&f, &grid) };
        let u = state.u.values.clone();
        let v = state.v.values.clone();
        let s: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let (w1, w2) = disc.cell_velocities(&state.u, &state.v)?;
        let (dd1, dd2) = disc.cell_second_derivatives(&state.u, &state.v)?;
        let gap: Vec<f64> = (0..s.len())
            .map(|i| s[i] * (w1.values[i] - w2.values[i]))
            .collect();
        let g = &model.growth;
        Ok(Pointwise {
            du: grad(u.clone()),
            dv: grad(v.clone()),
            ds: grad(s.clone()),
            ds_alpha: grad(s.iter().map(|&x| model.pressure.power(x)).collect()),
            ds_half: grad(s.iter().map(|&x| x.powf(alpha / 2.0)).collect()),
            dsqrt_u: grad(u.iter().map(|x| x.sqrt()).collect()),
            dsqrt_v: grad(v.iter().map(|x| x.sqrt()).collect()),
            d_s_gap: grad(gap),
            g1: s.iter().map(|&x| g.g1.eval(x)).collect(),
            g2: s.iter().map(|&x| g.g2.eval(x)).collect(),
            w1: w1.values,
            w2: w2.values,
            dd1: dd1.values,
            dd2: dd2.values,
            u,
            v,
            s,
        })
    }
}

fn eta_value(law: Law, alpha: f64, u: f64, v: f64) -> f64 {
    let s = u + v;
    match law {
        Law::Entropy => xlogx(u) + xlogx(v),
        Law::RatioSquared => ratio(u * u, s),
        Law::RatioTheta(th) => u * ratio(u, s).powf(th),
        Law::WeakFormU => u,
        Law::WeakFormV => v,
        Law::EnergyIdentity => s.powf(alpha + 1.0) / (alpha + 1.0),
    }
}

/// `(1 + log x) d_x x` with the vacuum convention.
#[inline]
fn log_flux(x: f64, dx: f64) -> f64 {
    if x > 0.0 {
        (1.0 + x.ln()) * dx
    } else {
        0.0
    }
}

#[inline]
fn log_source(x: f64) -> f64 {
    if x > 0.0 {
        x * (1.0 + x.ln())
    } else {
        0.0
    }
}

fn law_terms_from(p: &Pointwise, model: &ModelSpec, law: Law, include_eps: bool) -> LawTerms {
    let alpha = model.pressure.alpha;
    let eps = if include_eps { model.epsilon } else { 0.0 };
    let n = p.u.len();
    let mut eta = vec![0.0; n];
    let mut flux = vec![0.0; n];
    let mut source = vec![0.0; n];
    for i in 0..n {
        let (u, v, s) = (p.u[i], p.v[i], p.s[i]);
        let (w1, w2) = (p.w1[i], p.w2[i]);
        let (g1, g2) = (p.g1[i], p.g2[i]);
        eta[i] = eta_value(law, alpha, u, v);
        let (f, g) = match law {
            Law::Entropy => {
                let e = xlogx(u) + xlogx(v);
                let mut f = (ratio(e, s) + if s > 0.0 { 1.0 } else { 0.0 }) * p.ds_alpha[i] / alpha
                    + xlogx(u) * w1
                    + xlogx(v) * w2;
                f += eps * (log_flux(u, p.du[i]) + log_flux(v, p.dv[i]));
                let mut g = -4.0 / (alpha * alpha) * p.ds_half[i] * p.ds_half[i]
                    + u * p.dd1[i]
                    + v * p.dd2[i];
                g -= 4.0 * eps * (p.dsqrt_u[i] * p.dsqrt_u[i] + p.dsqrt_v[i] * p.dsqrt_v[i]);
                g += log_source(u) * g1 + log_source(v) * g2;
                (f, g)
            }
            Law::RatioSquared | Law::RatioTheta(_) => {
                let th = match law {
                    Law::RatioTheta(th) => th,
                    _ => 1.0,
                };
                let r = ratio(u, s);
                let r_th = r.powf(th);
                let r_th1 = r_th * r;
                let mut f = r_th1 * p.ds_alpha[i] / alpha + u * r_th * w1
                    - th / (th + 2.0) * u * r_th1 * (w1 - w2);
                f += eps * ((th + 1.0) * r_th * p.du[i] - th * r_th1 * p.ds[i]);
                let mut g = th * r_th1 * (1.0 - (th + 1.0) / (th + 2.0) * r) * p.d_s_gap[i];
                if s > 0.0 {
                    let dr = (p.du[i] * s - u * p.ds[i]) / (s * s);
                    g -= th * (th + 1.0) * eps * s * r.powf(th - 1.0) * dr * dr;
                }
                g += (th + 1.0) * r_th * u * g1 - th * r_th1 * (u * g1 + v * g2);
                (f, g)
            }
            Law::WeakFormU => (
                ratio(u, s) * p.ds_alpha[i] / alpha + u * w1 + eps * p.du[i],
                u * g1,
            ),
            Law::WeakFormV => (
                ratio(v, s) * p.ds_alpha[i] / alpha + v * w2 + eps * p.dv[i],
                v * g2,
            ),
            Law::EnergyIdentity => {
                let sa = model.pressure.power(s);
                let carried = u * w1 + v * w2;
                let f = sa * (p.ds_alpha[i] / alpha + carried + eps * p.ds[i]);
                let g = -p.ds_alpha[i] * p.ds_alpha[i] / alpha
                    - p.ds_alpha[i] * carried
                    - eps * p.ds[i] * p.ds_alpha[i]
                    + sa * (u * g1 + v * g2);
                (f, g)
            }
        };
        flux[i] = f;
        source[i] = g;
    }
    LawTerms { eta, flux, source }
}

/// Cell values of `eta`, flux and source of `law` at `state` for a
/// unit-weight model, with centred differences for every derivative. With
/// `include_eps = false` the viscous terms are dropped.
pub fn law_terms(
    state: &State,
    model: &ModelSpec,
    law: Law,
    include_eps: bool,
) -> Result<LawTerms> {
    law.validate()?;
    if !model.pressure.is_unit_weight() {
        return Err(Error::InvalidInput(
            "law terms need unit pressure weights; reduce the model first".into(),
        ));
    }
    let disc = Discretization::new(model, state.grid())?;
    let p = Pointwise::new(state, &disc)?;
    Ok(law_terms_from(&p, model, law, include_eps))
}

struct Probe {
    law: Law,
    include_eps: bool,
    tf: TestFunction,
    phi_x: Vec<f64>,
    dphi_x: Vec<f64>,
    value: f64,
}

/// Streaming space-time weak residual
/// `-int eta d_t phi + int flux d_x phi - int source phi`
/// for a set of (law, test function) pairs. The time derivative is moved
/// onto the test function by summation by parts and the spatial integrals
/// use the cell midpoints.
pub struct ResidualAccumulator {
    disc: Discretization,
    reduce: Option<crate::model::PressureLaw>,
    probes: Vec<Probe>,
    level: u32,
}

impl ResidualAccumulator {
    /// `probes` lists `(law, test function, include viscous terms)`.
    pub fn new(
        model: &ModelSpec,
        grid: GridSpec,
        t_range: (f64, f64),
        probes: Vec<(Law, TestFunction, bool)>,
    ) -> Result<Self> {
        let reduced = weighted_reduction(model)?;
        let reduce = (!model.pressure.is_unit_weight()).then_some(model.pressure);
        let xs = grid.centers();
        let probes = probes
            .into_iter()
            .map(|(law, tf, include_eps)| {
                law.validate()?;
                tf.check_support(&grid, t_range.0, t_range.1)?;
                Ok(Probe {
                    law,
                    include_eps,
                    phi_x: xs.iter().map(|&x| tf.space_factor(x)).collect(),
                    dphi_x: xs.iter().map(|&x| tf.space_derivative(x)).collect(),
                    tf,
                    value: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResidualAccumulator {
            disc: Discretization::new(&reduced, grid)?,
            reduce,
            probes,
            level: grid.n_cells.ilog2(),
        })
    }

    pub fn observe(&mut self, before: &State, after: &State, dt: f64) -> Result<()> {
        let t0 = before.t;
        let t1 = after.t;
        let active: Vec<usize> = (0..self.probes.len())
            .filter(|&k| {
                let tf = &self.probes[k].tf;
                tf.time_factor(t0) != 0.0 || tf.time_factor(t1) != 0.0
            })
            .collect();
        if active.is_empty() {
            return Ok(());
        }
        let (a, b) = match &self.reduce {
            Some(law) => (
                to_reduced_state(before, law)?,
                to_reduced_state(after, law)?,
            ),
            None => (before.clone(), after.clone()),
        };
        let p = Pointwise::new(&a, &self.disc)?;
        let dx = a.grid().dx();
        let alpha = self.disc.model.pressure.alpha;
        let span = if dt > 0.0 { dt } else { t1 - t0 };
        for k in active {
            let probe = &mut self.probes[k];
            let bt0 = probe.tf.time_factor(t0);
            let bt1 = probe.tf.time_factor(t1);
            let terms = law_terms_from(&p, &self.disc.model, probe.law, probe.include_eps);
            let mut time_part = 0.0;
            let mut space_part = 0.0;
            for i in 0..terms.eta.len() {
                let eta_next = eta_value(probe.law, alpha, b.u.values[i], b.v.values[i]);
                time_part += eta_next * probe.phi_x[i];
                space_part += terms.flux[i] * probe.dphi_x[i] - terms.source[i] * probe.phi_x[i];
            }
            probe.value += -(bt1 - bt0) * time_part * dx + span * bt0 * space_part * dx;
        }
        Ok(())
    }

    pub fn finish(self) -> Vec<BalanceResidual> {
        let level = self.level;
        self.probes
            .into_iter()
            .map(|p| BalanceResidual {
                law: p.law,
                test_function_id: p.tf.id,
                value: p.value,
                refinement_level: level,
            })
            .collect()
    }
}

fn replay(
    traj: &Trajectory,
    probes: Vec<(Law, TestFunction, bool)>,
) -> Result<Vec<BalanceResidual>> {
    let times = traj.times();
    let (t0, t1) = (times[0], *times.last().expect("nonempty"));
    let mut acc = ResidualAccumulator::new(&traj.model, traj.grid, (t0, t1), probes)?;
    for w in traj.snapshots.windows(2) {
        acc.observe(&w[0], &w[1], w[1].t - w[0].t)?;
    }
    Ok(acc.finish())
}

/// Weak residual of a balance law (viscous terms included) along a recorded
/// trajectory. Snapshots should be dense in time (`output_every = 1`).
pub fn conservation_law_residual(
    traj: &Trajectory,
    law: Law,
    test_function: &TestFunction,
) -> Result<BalanceResidual> {
    let mut out = replay(traj, vec![(law, test_function.clone(), true)])?;
    Ok(out.remove(0))
}

/// Residual of the viscosity-free weak formulation for one species.
pub fn weak_solution_residual(
    traj: &Trajectory,
    test_function: &TestFunction,
    species: Species,
) -> Result<f64> {
    let law = match species {
        Species::U => Law::WeakFormU,
        Species::V => Law::WeakFormV,
    };
    Ok(replay(traj, vec![(law, test_function.clone(), false)])?
        .remove(0)
        .value)
}

/// Global energy balance
/// `int s^(alpha+1)/(alpha+1) |_0^T + int int [(1/alpha)|d_x s^alpha|^2 + eps d_x s d_x s^alpha + d_x s^alpha (u d_x V1 + v d_x V2) - s^alpha (u G1 + v G2)]`
/// with left-point time quadrature over the snapshots; zero for exact solutions
/// without boundary flux.
pub fn energy_identity_defect(traj: &Trajectory) -> Result<f64> {
    if traj.snapshots.len() < 2 {
        return Err(Error::InvalidInput(
            "energy identity needs at least two snapshots".into(),
        ));
    }
    let reduced = weighted_reduction(&traj.model)?;
    let disc = Discretization::new(&reduced, traj.grid)?;
    let law = traj.model.pressure;
    let prep = |s: &State| -> Result<State> {
        if law.is_unit_weight() {
            Ok(s.clone())
        } else {
            to_reduced_state(s, &law)
        }
    };
    let energy = |s: &State| -> f64 {
        let a = reduced.pressure.alpha;
        integrate(&s.u.zip_map(&s.v, |x, y| (x + y).powf(a + 1.0) / (a + 1.0)))
    };
    let first = prep(&traj.snapshots[0])?;
    let last = prep(traj.final_state())?;
    let mut total = energy(&last) - energy(&first);
    for w in traj.snapshots.windows(2) {
        let a = prep(&w[0])?;
        let p = Pointwise::new(&a, &disc)?;
        let terms = law_terms_from(&p, &reduced, Law::EnergyIdentity, true);
        total -= (w[1].t - w[0].t) * a.grid().dx() * terms.source.iter().sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Boundary, GridSpec};
    use crate::model::{GrowthFn, Kernel, PressureLaw};
    use crate::oracle::ExactSolution;
    use crate::scenarios::demo_model;
    use crate::solver::{run, SolverParams};

    fn periodic(n: usize) -> GridSpec {
        GridSpec::new(0.0, 1.0, n, Boundary::Periodic).unwrap()
    }

    #[test]
    fn zero_state_record() {
        let g = periodic(32);
        let r = record(&State::zeros(g), &demo_model(0.1));
        assert_eq!(r.mass_u, 0.0);
        assert_eq!(r.mass_v, 0.0);
        assert_eq!(r.entropy, 0.0);
        assert_eq!(r.grad_s_alpha_sq, 0.0);
        assert_eq!(r.grad_s_alpha_half_sq, 0.0);
        assert_eq!(r.eps_grad_sqrt_u_sq, 0.0);
        assert_eq!(r.lp_norms.linf, (0.0, 0.0));
        assert_eq!(r.grad_s_sq, Some(0.0));
        assert_eq!(r.fast_diff_grad, None);
    }

    #[test]
    fn unit_state_record() {
        let g = periodic(16);
        let st = State::new(0.0, Field::constant(g, 1.0), Field::constant(g, 1.0)).unwrap();
        let r = record(&st, &ModelSpec::pure_diffusion(2.0, 0.1));
        assert!((r.mass_u - 1.0).abs() < 1e-14);
        assert_eq!(r.entropy, 0.0);
        assert_eq!(r.grad_s_alpha_sq, 0.0);
        assert_eq!(r.eps_grad_u_sq, 0.0);
        assert!((r.linf_s - 2.0).abs() < 1e-15);
        assert!((r.lp_norms.l2.0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fast_diffusion_quantity_reported_only_for_small_alpha() {
        let g = periodic(16);
        let st = State::new(0.0, Field::from_fn(g, |x| 1.0 + x), Field::zeros(g)).unwrap();
        let r = record(&st, &ModelSpec::pure_diffusion(0.25, 0.0));
        assert!(r.fast_diff_grad.is_some());
        assert!(r.grad_s_sq.is_some());
        let r = record(&st, &ModelSpec::pure_diffusion(3.0, 0.0));
        assert!(r.fast_diff_grad.is_none());
        assert!(r.grad_s_sq.is_none());
    }

    #[test]
    fn barenblatt_gradient_integral_matches_symbolic_value() {
        // s = A (C - a x^2)_+ with A = tau^(-1/3), a = tau^(-2/3) / 12, tau = t / 2.
        // d_x s^2 = -4 A^2 a x (C - a x^2), so
        // int |d_x s^2|^2 = 32 A^4 a^2 (C^2 R^3 / 3 - 2 C a R^5 / 5 + a^2 R^7 / 7), R = sqrt(C / a).
        let sol = ExactSolution::Barenblatt {
            alpha: 2.0,
            mass: 1.0,
            t_offset: 0.0,
        };
        let c = crate::oracle::barenblatt_constant(2.0, 1.0).unwrap();
        let tau: f64 = 0.5;
        let big_a = tau.powf(-1.0 / 3.0);
        let a = tau.powf(-2.0 / 3.0) / 12.0;
        let r = (c / a).sqrt();
        let exact = 32.0
            * big_a.powi(4)
            * a
            * a
            * (c * c * r.powi(3) / 3.0 - 2.0 * c * a * r.powi(5) / 5.0 + a * a * r.powi(7) / 7.0);
        let g = GridSpec::new(-3.0, 3.0, 4096, Boundary::NoFlux).unwrap();
        let st = State::new(1.0, sol.evaluate(1.0, &g).unwrap(), Field::zeros(g)).unwrap();
        let rec = record(&st, &ModelSpec::pure_diffusion(2.0, 0.0));
        assert!(
            ((rec.grad_s_alpha_sq - exact) / exact).abs() < 1e-3,
            "{} vs {}",
            rec.grad_s_alpha_sq,
            exact
        );
    }

    #[test]
    fn pointwise_entropy_bound_holds_on_extreme_values() {
        let g = GridSpec::new(-20.0, 20.0, 400, Boundary::NoFlux).unwrap();
        for scale in [0.0, 1e-12, 1e-3, (-1.0f64).exp(), 1.0, 50.0] {
            let f = Field::from_fn(g, |x| {
                scale * (-(x.abs()) / 2.0).exp() / std::f64::consts::E
            });
            assert!(pointwise_entropy_bound_gap(&f) >= -1e-15);
        }
        // the cellwise minimiser rho = exp(-1 - W) leaves the gap (2/e) e^(-W/2) - e^(-1-W)
        let f = Field::from_fn(g, |x| (-1.0 - x.abs()).exp());
        let expected = g
            .centers()
            .iter()
            .map(|x| (2.0 / std::f64::consts::E) * (-x.abs() / 2.0).exp() - (-1.0 - x.abs()).exp())
            .fold(f64::INFINITY, f64::min);
        assert!((pointwise_entropy_bound_gap(&f) - expected).abs() < 1e-15);
    }

    #[test]
    fn summary_tracks_extrema() {
        let g = periodic(8);
        let m = ModelSpec::pure_diffusion(2.0, 0.0);
        let recs: Vec<_> = [1.0, 3.0, 2.0]
            .iter()
            .map(|&c| {
                record(
                    &State::new(0.0, Field::constant(g, c), Field::zeros(g)).unwrap(),
                    &m,
                )
            })
            .collect();
        let s = summarize(&recs);
        let (name, mass) = &s[1];
        assert_eq!(*name, "mass_u");
        let mass = mass.unwrap();
        assert_eq!((mass.min, mass.max, mass.last), (1.0, 3.0, 2.0));
        assert!(s
            .iter()
            .find(|(n, _)| *n == "fast_diff_grad")
            .unwrap()
            .1
            .is_none());
        assert_eq!(recs[0].row().len(), DiagnosticsRecord::COLUMNS.len());
    }

    #[test]
    fn bump_derivative_matches_difference_quotient() {
        for &z in &[-0.9, -0.5, 0.0, 0.3, 0.77] {
            let h = 1e-6;
            let fd = (bump(z + h) - bump(z - h)) / (2.0 * h);
            assert!((fd - bump_derivative(z)).abs() < 1e-8);
        }
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump_derivative(-1.0), 0.0);
    }

    #[test]
    fn test_function_support_checks() {
        let g = periodic(64);
        assert!(TestFunction::new("a", (0.5, 0.4), (0.5, 0.3))
            .check_support(&g, 0.0, 1.0)
            .is_ok());
        assert!(TestFunction::new("b", (0.5, 0.4), (0.5, 0.5))
            .check_support(&g, 0.0, 1.0)
            .is_err());
        assert!(TestFunction::new("c", (0.5, 0.6), (0.5, 0.3))
            .check_support(&g, 0.0, 1.0)
            .is_err());
        for tf in standard_test_functions(&g, 0.0, 1.0) {
            tf.check_support(&g, 0.0, 1.0).unwrap();
        }
    }

    fn constant_traj(c: f64) -> Trajectory {
        let g = periodic(32);
        let st = State::new(0.0, Field::constant(g, c), Field::constant(g, 0.5 * c)).unwrap();
        let params = SolverParams::new(0.2).with_snapshot_interval(0.01);
        run(&st, &ModelSpec::pure_diffusion(2.0, 0.1), &params, &g).unwrap()
    }

    #[test]
    fn trivial_trajectories_have_zero_residuals() {
        for c in [0.0, 1.3] {
            let traj = constant_traj(c);
            let tf = TestFunction::new("b", (0.1, 0.08), (0.5, 0.3));
            for law in [
                Law::Entropy,
                Law::RatioSquared,
                Law::RatioTheta(2.0),
                Law::WeakFormU,
                Law::WeakFormV,
                Law::EnergyIdentity,
            ] {
                let r = conservation_law_residual(&traj, law, &tf).unwrap();
                assert!(r.value.abs() < 1e-14, "{law:?} {}", r.value);
                assert_eq!(r.refinement_level, 5);
            }
            assert!(
                weak_solution_residual(&traj, &tf, Species::V)
                    .unwrap()
                    .abs()
                    < 1e-14
            );
            let res = entropy_dissipation_check(&traj).unwrap();
            assert!(res.iter().all(|&r| r.abs() < 1e-12));
            assert!(energy_identity_defect(&traj).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn residual_rejects_boundary_touching_test_function() {
        let traj = constant_traj(1.0);
        let tf = TestFunction::new("edge", (0.1, 0.08), (0.1, 0.2));
        assert!(matches!(
            conservation_law_residual(&traj, Law::Entropy, &tf),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn stationary_state_entropy_residual_is_minus_bound() {
        let g = GridSpec::new(-1.0, 1.0, 32, Boundary::NoFlux).unwrap();
        let model = ModelSpec::pure_diffusion(2.0, 0.0);
        let st = State::new(0.0, Field::constant(g, 0.7), Field::constant(g, 0.2)).unwrap();
        let mut mon = EntropyMonitor::new(&model, g).unwrap();
        let mut next = st.clone();
        next.t = 0.01;
        mon.observe(&st, &next, 0.01).unwrap();
        let iv = mon.intervals[0];
        assert_eq!(iv.bound, 0.0);
        assert_eq!(iv.residual, 0.0);
    }

    /// Smooth periodic fields for the identity checks.
    fn smooth_state(n: usize) -> State {
        let g = GridSpec::new(0.0, 2.0 * std::f64::consts::PI, n, Boundary::Periodic).unwrap();
        let u = Field::from_fn(g, |x| 1.0 + 0.5 * x.sin());
        let v = Field::from_fn(g, |x| 0.8 + 0.3 * (2.0 * x).cos());
        State::new(0.0, u, v).unwrap()
    }

    fn identity_model(alpha: f64) -> ModelSpec {
        let mut m = demo_model(0.1);
        m.pressure = PressureLaw::new(alpha);
        m.kernels.k12 = Some(Kernel::gaussian(0.7, 0.4));
        m.kernels.k21 = Some(Kernel::gaussian(-0.3, 0.5));
        m.growth.g1 = GrowthFn::Logistic {
            rate: 0.8,
            cap: 3.0,
        };
        m.growth.g2 = GrowthFn::Logistic {
            rate: -0.4,
            cap: 2.0,
        };
        m
    }

    /// `d_t u` and `d_t v` of the viscous system by centred differences.
    fn rates(state: &State, model: &ModelSpec) -> (Vec<f64>, Vec<f64>) {
        let grid = state.grid();
        let tu = law_terms(state, model, Law::WeakFormU, true).unwrap();
        let tv = law_terms(state, model, Law::WeakFormV, true).unwrap();
        let div = |f: Vec<f64>| gradient(&Field { grid, values: f }).values;
        let du: Vec<f64> = div(tu.flux)
            .iter()
            .zip(&tu.source)
            .map(|(a, b)| a + b)
            .collect();
        let dv: Vec<f64> = div(tv.flux)
            .iter()
            .zip(&tv.source)
            .map(|(a, b)| a + b)
            .collect();
        (du, dv)
    }

    /// Chain rule `d_t eta = eta_u d_t u + eta_v d_t v` against the stated
    /// flux and source of each law.
    fn check_identity(
        law: Law,
        alpha: f64,
        eta_u: impl Fn(f64, f64) -> f64,
        eta_v: impl Fn(f64, f64) -> f64,
    ) {
        let mut errs = Vec::new();
        for n in [512, 1024] {
            let st = smooth_state(n);
            let model = identity_model(alpha);
            let (du, dv) = rates(&st, &model);
            let terms = law_terms(&st, &model, law, true).unwrap();
            let div = gradient(&Field {
                grid: st.grid(),
                values: terms.flux,
            })
            .values;
            let mut err = 0.0_f64;
            let mut scale = 0.0_f64;
            for i in 0..n {
                let (u, v) = (st.u.values[i], st.v.values[i]);
                let lhs = eta_u(u, v) * du[i] + eta_v(u, v) * dv[i];
                let rhs = div[i] + terms.source[i];
                err = err.max((lhs - rhs).abs());
                scale = scale.max(lhs.abs());
            }
            errs.push(err / scale);
        }
        assert!(errs[1] < 1e-4, "{law:?}: relative mismatch {errs:?}");
        assert!(
            errs[0] / errs[1] > 3.0,
            "{law:?}: no second-order convergence {errs:?}"
        );
    }

    #[test]
    fn entropy_identity_holds_pointwise() {
        for alpha in [2.0, 1.5, 1.0] {
            check_identity(
                Law::Entropy,
                alpha,
                |u, _| 1.0 + u.ln(),
                |_, v| 1.0 + v.ln(),
            );
        }
    }

    #[test]
    fn ratio_identities_hold_pointwise() {
        for alpha in [2.0, 1.3] {
            check_identity(
                Law::RatioSquared,
                alpha,
                |u, v| {
                    let s = u + v;
                    2.0 * u / s - u * u / (s * s)
                },
                |u, v| -u * u / ((u + v) * (u + v)),
            );
            for th in [2.0, 0.5] {
                check_identity(
                    Law::RatioTheta(th),
                    alpha,
                    move |u, v| {
                        let s = u + v;
                        (th + 1.0) * (u / s).powf(th) - th * (u / s).powf(th + 1.0)
                    },
                    move |u, v| -th * (u / (u + v)).powf(th + 1.0),
                );
            }
        }
    }

    #[test]
    fn energy_identity_holds_pointwise() {
        for alpha in [2.0, 3.0] {
            check_identity(
                Law::EnergyIdentity,
                alpha,
                |u, v| (u + v).powf(alpha),
                |u, v| (u + v).powf(alpha),
            );
        }
    }

    #[test]
    fn ratio_theta_one_equals_ratio_squared() {
        let st = smooth_state(64);
        let m = identity_model(2.0);
        let a = law_terms(&st, &m, Law::RatioSquared, true).unwrap();
        let b = law_terms(&st, &m, Law::RatioTheta(1.0), true).unwrap();
        for i in 0..64 {
            assert!((a.flux[i] - b.flux[i]).abs() < 1e-14);
            assert!((a.source[i] - b.source[i]).abs() < 1e-13);
            assert!((a.eta[i] - b.eta[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn law_terms_vanish_on_vacuum() {
        let m = identity_model(2.0);
        let st = State::zeros(smooth_state(64).grid());
        for law in [
            Law::Entropy,
            Law::RatioSquared,
            Law::RatioTheta(3.0),
            Law::EnergyIdentity,
        ] {
            let t = law_terms(&st, &m, law, true).unwrap();
            assert!(
                t.eta
                    .iter()
                    .chain(&t.flux)
                    .chain(&t.source)
                    .all(|&x| x == 0.0),
                "{law:?}"
            );
        }
    }
}
