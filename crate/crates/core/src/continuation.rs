//! Vanishing-viscosity ladders, grid refinements and coarse-grained
//! fluctuation statistics against the finest-viscosity reference run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{gradient, Field, GridSpec, State};
use crate::error::{Error, Result};
use crate::model::{Discretization, ModelSpec};
use crate::scenarios::InitialCondition;
use crate::solver::{run, SolverParams, Trajectory};

/// Relative tolerance for matching snapshot times of two runs.
const TIME_MATCH_TOL: f64 = 1e-12;

/// Moments below this are treated as zero when forming ratios.
pub const MOMENT_TOL: f64 = 1e-14;

/// Relative thresholds of the S mask.
pub const S_TOL_REL: f64 = 1e-8;
pub const V_TOL_REL: f64 = 1e-6;

fn default_snapshots() -> usize {
    100
}

fn default_cfl() -> f64 {
    0.4
}

fn default_max_steps() -> usize {
    50_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Strictly decreasing; the last rung is the reference.
    pub eps_ladder: Vec<f64>,
    /// Cell counts for a refinement study of the reference viscosity.
    #[serde(default)]
    pub grid_ladder: Option<Vec<usize>>,
    pub base_model: ModelSpec,
    pub grid: GridSpec,
    pub initial: InitialCondition,
    pub t_end: f64,
    /// `(dt_c, dx_c)`; defaults to `(duration / 20, domain / 50)`.
    #[serde(default)]
    pub coarse_cell: Option<(f64, f64)>,
    /// Number of equally spaced snapshots after the initial one.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

impl SweepSpec {
    pub fn new(
        eps_ladder: Vec<f64>,
        base_model: ModelSpec,
        grid: GridSpec,
        initial: InitialCondition,
        t_end: f64,
    ) -> Self {
        SweepSpec {
            eps_ladder,
            grid_ladder: None,
            base_model,
            grid,
            initial,
            t_end,
            coarse_cell: None,
            snapshots: default_snapshots(),
            cfl: default_cfl(),
            max_steps: default_max_steps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_ladder.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "eps_ladder needs at least 3 rungs, got {}",
                self.eps_ladder.len()
            )));
        }
        if self.eps_ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidInput(
                "eps_ladder entries must be positive and finite".into(),
            ));
        }
        if self.eps_ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput(
                "eps_ladder must be strictly decreasing".into(),
            ));
        }
        self.grid.validate()?;
        self.base_model.validate()?;
        let t0 = self.initial.start_time();
        if !(self.t_end.is_finite() && self.t_end > t0) {
            return Err(Error::InvalidInput(format!(
                "t_end must exceed the start time {t0}, got {}",
                self.t_end
            )));
        }
        if self.snapshots == 0 {
            return Err(Error::InvalidInput("snapshots must be positive".into()));
        }
        if let Some((a, b)) = self.coarse_cell {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidInput(
                    "coarse_cell entries must be positive".into(),
                ));
            }
        }
        if let Some(ns) = &self.grid_ladder {
            let finest = ns.iter().copied().max().unwrap_or(0);
            if ns.is_empty()
                || ns
                    .iter()
                    .any(|&n| n < GridSpec::MIN_CELLS || finest % n != 0)
            {
                return Err(Error::InvalidInput(
                    "grid_ladder entries must be valid cell counts dividing the finest one".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn coarse(&self) -> (f64, f64) {
        self.coarse_cell.unwrap_or((
            (self.t_end - self.initial.start_time()) / 20.0,
            self.grid.len() / 50.0,
        ))
    }

    fn params(&self) -> SolverParams {
        SolverParams::new(self.t_end)
            .with_cfl(self.cfl)
            .with_max_steps(self.max_steps)
            .with_snapshot_interval(
                (self.t_end - self.initial.start_time()) / self.snapshots as f64,
            )
    }

    fn run_rung(&self, eps: f64, grid: GridSpec) -> Result<Trajectory> {
        let model = ModelSpec {
            epsilon: eps,
            ..self.base_model.clone()
        };
        let initial = self.initial.build(&grid)?;
        run(&initial, &model, &self.params(), &grid)
    }
}

/// Uniform space-time blocks used for local averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_t: usize,
    pub x_min: f64,
    pub dx: f64,
    pub n_x: usize,
}

impl CoarseGrid {
    pub fn new(grid: &GridSpec, t_range: (f64, f64), coarse: (f64, f64)) -> Result<Self> {
        let (dt, dx) = coarse;
        if !(dt > 0.0 && dx > 0.0 && dt.is_finite() && dx.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coarse window must be positive, got ({dt}, {dx})"
            )));
        }
        let span = t_range.1 - t_range.0;
        Ok(CoarseGrid {
            t0: t_range.0,
            dt,
            n_t: ((span / dt).round() as usize).max(1),
            x_min: grid.x_min,
            dx,
            n_x: ((grid.len() / dx).round() as usize).max(1),
        })
    }

    pub fn len(&self) -> usize {
        self.n_t * self.n_x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_index(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt * (1.0 + 1e-12)).floor();
        (k.max(0.0) as usize).min(self.n_t - 1)
    }

    pub fn x_index(&self, x: f64) -> usize {
        let k = ((x - self.x_min) / self.dx).floor();
        (k.max(0.0) as usize).min(self.n_x - 1)
    }

    pub fn index(&self, t: f64, x: f64) -> usize {
        self.t_index(t) * self.n_x + self.x_index(x)
    }

    pub fn center(&self, index: usize) -> (f64, f64) {
        let (kt, kx) = (index / self.n_x, index % self.n_x);
        (
            self.t0 + (kt as f64 + 0.5) * self.dt,
            self.x_min + (kx as f64 + 0.5) * self.dx,
        )
    }
}

/// Second moments `(m11, m20, m02)` of paired samples.
pub fn moments_from_samples(l1: &[f64], l2: &[f64]) -> (f64, f64, f64) {
    let n = l1.len().min(l2.len());
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for i in 0..n {
        a += l1[i] * l2[i];
        b += l1[i] * l1[i];
        c += l2[i] * l2[i];
    }
    let k = n as f64;
    (a / k, b / k, c / k)
}

/// `m11 / m20` and `m11^2 / (m20 m02)` where the denominators are resolved.
pub fn slope_and_cs_ratio(m11: f64, m20: f64, m02: f64) -> (Option<f64>, Option<f64>) {
    let slope = (m20 > MOMENT_TOL).then(|| m11 / m20);
    let cs = (m20 > MOMENT_TOL && m02 > MOMENT_TOL).then(|| m11 * m11 / (m20 * m02));
    (slope, cs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub t: f64,
    pub x: f64,
    pub samples: usize,
    pub m11: f64,
    pub m20: f64,
    pub m02: f64,
    pub slope: Option<f64>,
    pub cs_ratio: Option<f64>,
    /// `alpha s d_x (V2 - V1)` averaged over the block, reference data.
    pub f_local: f64,
    /// Mean reference density over the block.
    pub s_mean: f64,
    /// `< (u - u_ref) lambda_2 d_x (V2 - V1)_ref >`, the defect pairing.
    pub m_defect: f64,
}

/// Coarse-grained moments of `lambda_1 = u/s - u_ref/s_ref` and
/// `lambda_2 = d_x s^alpha - d_x s_ref^alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationStats {
    pub coarse: CoarseGrid,
    pub cells: Vec<CellStats>,
}

impl FluctuationStats {
    /// Mean of `|m11|` over blocks holding samples.
    pub fn mean_abs_m11(&self) -> f64 {
        let (sum, k) = self
            .cells
            .iter()
            .filter(|c| c.samples > 0)
            .fold((0.0, 0usize), |(s, k), c| (s + c.m11.abs(), k + 1));
        if k == 0 {
            0.0
        } else {
            sum / k as f64
        }
    }

    pub fn max_cs_ratio(&self) -> Option<f64> {
        self.cells
            .iter()
            .filter_map(|c| c.cs_ratio)
            .fold(None, |m, r| Some(m.map_or(r, |m: f64| m.max(r))))
    }

    pub fn max_m20(&self) -> f64 {
        self.cells.iter().fold(0.0, |m, c| m.max(c.m20))
    }

    pub fn max_m02(&self) -> f64 {
        self.cells.iter().fold(0.0, |m, c| m.max(c.m02))
    }
}

#[inline]
fn frac(a: f64, s: f64) -> f64 {
    if s > 0.0 {
        a / s
    } else {
        0.0
    }
}

/// Per-snapshot cell fields used by the statistics.
struct SnapshotFields {
    u: Vec<f64>,
    v: Vec<f64>,
    s: Vec<f64>,
    grad_s_alpha: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

fn snapshot_fields(state: &State, disc: &Discretization) -> Result<SnapshotFields> {
    let law = &disc.model.pressure;
    let grid = state.grid();
    let s: Vec<f64> = state
        .u
        .values
        .iter()
        .zip(&state.v.values)
        .map(|(&a, &b)| law.total(a, b))
        .collect();
    let sa = Field {
        grid,
        values: s.iter().map(|&x| law.power(x)).collect(),
    };
    let (w1, w2) = disc.cell_velocities(&state.u, &state.v)?;
    Ok(SnapshotFields {
        u: state.u.values.clone(),
        v: state.v.values.clone(),
        s,
        grad_s_alpha: gradient(&sa).values,
        w1: w1.values,
        w2: w2.values,
    })
}

fn check_compatible(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if !a.grid.same_as(&b.grid) {
        return Err(Error::GridMismatch(
            "run and reference live on different grids".into(),
        ));
    }
    if a.snapshots.len() != b.snapshots.len() {
        return Err(Error::GridMismatch(format!(
            "run has {} snapshots, reference {}",
            a.snapshots.len(),
            b.snapshots.len()
        )));
    }
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        if (x.t - y.t).abs() > TIME_MATCH_TOL * x.t.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "snapshot times differ: {} vs {}",
                x.t, y.t
            )));
        }
    }
    Ok(())
}

/// Trapezoid weights over the snapshot times.
fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|k| {
            let left = if k > 0 { times[k] - times[k - 1] } else { 0.0 };
            let right = if k + 1 < n {
                times[k + 1] - times[k]
            } else {
                0.0
            };
            0.5 * (left + right)
        })
        .collect()
}

fn fluctuation_core(
    run: &Trajectory,
    reference: &Trajectory,
    coarse: &CoarseGrid,
    disc: &Discretization,
    ref_fields: &[SnapshotFields],
) -> Result<FluctuationStats> {
    let alpha = disc.model.pressure.alpha;
    let xs = run.grid.centers();
    let nc = coarse.len();
    let mut acc = vec![[0.0f64; 6]; nc];
    let mut count = vec![0usize; nc];
    for (k, snap) in run.snapshots.iter().enumerate() {
        let f = snapshot_fields(snap, disc)?;
        let r = &ref_fields[k];
        let t = reference.snapshots[k].t;
        let row = coarse.t_index(t) * coarse.n_x;
        for i in 0..xs.len() {
            let c = row + coarse.x_index(xs[i]);
            let l1 = frac(f.u[i], f.s[i]) - frac(r.u[i], r.s[i]);
            let l2 = f.grad_s_alpha[i] - r.grad_s_alpha[i];
            let gap = r.w2[i] - r.w1[i];
            let a = &mut acc[c];
            a[0] += l1 * l2;
            a[1] += l1 * l1;
            a[2] += l2 * l2;
            a[3] += alpha * r.s[i] * gap;
            a[4] += r.s[i];
            a[5] += (f.u[i] - r.u[i]) * l2 * gap;
            count[c] += 1;
        }
    }
    let cells = (0..nc)
        .map(|c| {
            let n = count[c].max(1) as f64;
            let a = acc[c];
            let (m11, m20, m02) = (a[0] / n, a[1] / n, a[2] / n);
            let (slope, cs_ratio) = slope_and_cs_ratio(m11, m20, m02);
            let (t, x) = coarse.center(c);
            CellStats {
                t,
                x,
                samples: count[c],
                m11,
                m20,
                m02,
                slope,
                cs_ratio,
                f_local: a[3] / n,
                s_mean: a[4] / n,
                m_defect: a[5] / n,
            }
        })
        .collect();
    Ok(FluctuationStats {
        coarse: *coarse,
        cells,
    })
}

/// Coarse-grained fluctuation moments of `run` relative to `reference`,
/// which must share grid and snapshot times.
pub fn fluctuation_stats(
    run: &Trajectory,
    reference: &Trajectory,
    coarse: (f64, f64),
    model: &ModelSpec,
) -> Result<FluctuationStats> {
    check_compatible(run, reference)?;
    let times = reference.times();
    let cg = CoarseGrid::new(
        &reference.grid,
        (times[0], *times.last().expect("nonempty")),
        coarse,
    )?;
    let disc = Discretization::new(model, reference.grid)?;
    let ref_fields = reference
        .snapshots
        .iter()
        .map(|s| snapshot_fields(s, &disc))
        .collect::<Result<Vec<_>>>()?;
    fluctuation_core(run, reference, &cg, &disc, &ref_fields)
}

/// Blocks of the coarse grid belonging to
/// `S = complement of {s > 0 and d_x V1 = d_x V2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSMask {
    pub coarse: CoarseGrid,
    pub in_s: Vec<bool>,
    pub s_tol: f64,
    pub v_tol: f64,
}

impl SetSMask {
    /// A block is outside S when its mean reference density exceeds `s_tol`
    /// and its mean `|d_x V1 - d_x V2|` stays below `v_tol`.
    pub fn from_reference(
        reference: &Trajectory,
        coarse: &CoarseGrid,
        model: &ModelSpec,
        s_tol: f64,
        v_tol: f64,
    ) -> Result<Self> {
        let disc = Discretization::new(model, reference.grid)?;
        let fields = reference
            .snapshots
            .iter()
            .map(|s| snapshot_fields(s, &disc))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_fields(reference, &fields, coarse, s_tol, v_tol))
    }

    fn from_fields(
        reference: &Trajectory,
        fields: &[SnapshotFields],
        coarse: &CoarseGrid,
        s_tol: f64,
        v_tol: f64,
    ) -> Self {
        let xs = reference.grid.centers();
        let nc = coarse.len();
        let mut s_sum = vec![0.0; nc];
        let mut v_sum = vec![0.0; nc];
        let mut count = vec![0usize; nc];
        for (snap, f) in reference.snapshots.iter().zip(fields) {
            let row = coarse.t_index(snap.t) * coarse.n_x;
            for i in 0..xs.len() {
                let c = row + coarse.x_index(xs[i]);
                s_sum[c] += f.s[i];
                v_sum[c] += (f.w1[i] - f.w2[i]).abs();
                count[c] += 1;
            }
        }
        let in_s = (0..nc)
            .map(|c| {
                let n = count[c].max(1) as f64;
                !(s_sum[c] / n > s_tol && v_sum[c] / n < v_tol)
            })
            .collect();
        SetSMask {
            coarse: *coarse,
            in_s,
            s_tol,
            v_tol,
        }
    }

    /// `s_tol = 1e-8 max s`, `v_tol = 1e-6 max |d_x V|` over the reference run.
    pub fn default_tolerances(reference: &Trajectory, model: &ModelSpec) -> Result<(f64, f64)> {
        let disc = Discretization::new(model, reference.grid)?;
        let mut s_max = 0.0_f64;
        let mut w_max = 0.0_f64;
        for snap in &reference.snapshots {
            let f = snapshot_fields(snap, &disc)?;
            s_max = f.s.iter().fold(s_max, |m, &x| m.max(x));
            w_max = f.w1.iter().chain(&f.w2).fold(w_max, |m, &x| m.max(x.abs()));
        }
        Ok((S_TOL_REL * s_max, V_TOL_REL * w_max))
    }

    pub fn count(&self) -> usize {
        self.in_s.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        self.in_s[self.coarse.index(t, x)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub epsilon: f64,
    pub steps: usize,
    /// Space-time `L^2` distances to the reference rung.
    pub dist_s: f64,
    pub dist_grad_s_alpha: f64,
    /// Restricted to the S mask.
    pub dist_u_on_s: f64,
    pub dist_v_on_s: f64,
    pub mean_abs_m11: f64,
    pub max_cs_ratio: Option<f64>,
    pub stats: FluctuationStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRung {
    pub n_cells: usize,
    pub steps: usize,
    /// `L^2` distance at the final time to the finest grid, after averaging
    /// the finest solution onto this grid.
    pub dist_s_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub eps_ladder: Vec<f64>,
    pub grid: GridSpec,
    pub t_end: f64,
    pub alpha: f64,
    pub mask: SetSMask,
    pub rungs: Vec<RungReport>,
    pub grid_rungs: Vec<GridRung>,
}

impl SweepReport {
    pub fn reference_index(&self) -> usize {
        self.rungs.len() - 1
    }

    /// Gradient distances of the non-reference rungs.
    pub fn gradient_distances(&self) -> Vec<f64> {
        self.rungs[..self.reference_index()]
            .iter()
            .map(|r| r.dist_grad_s_alpha)
            .collect()
    }

    pub fn u_distances_on_s(&self) -> Vec<f64> {
        self.rungs[..self.reference_index()]
            .iter()
            .map(|r| r.dist_u_on_s)
            .collect()
    }
}

/// `true` when every entry is strictly smaller than its predecessor.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn distances(
    run: &[SnapshotFields],
    reference: &[SnapshotFields],
    times: &[f64],
    grid: &GridSpec,
    mask: &SetSMask,
) -> (f64, f64, f64, f64) {
    let w = time_weights(times);
    let dx = grid.dx();
    let xs = grid.centers();
    let mut acc = [0.0f64; 4];
    for k in 0..times.len() {
        let (a, b) = (&run[k], &reference[k]);
        let row = mask.coarse.t_index(times[k]) * mask.coarse.n_x;
        let mut local = [0.0f64; 4];
        for i in 0..xs.len() {
            let ds = a.s[i] - b.s[i];
            let dg = a.grad_s_alpha[i] - b.grad_s_alpha[i];
            local[0] += ds * ds;
            local[1] += dg * dg;
            if mask.in_s[row + mask.coarse.x_index(xs[i])] {
                let du = a.u[i] - b.u[i];
                let dv = a.v[i] - b.v[i];
                local[2] += du * du;
                local[3] += dv * dv;
            }
        }
        for j in 0..4 {
            acc[j] += w[k] * dx * local[j];
        }
    }
    (acc[0].sqrt(), acc[1].sqrt(), acc[2].sqrt(), acc[3].sqrt())
}

/// Cell averages of a fine field onto a grid `factor` times coarser.
fn restrict(values: &[f64], factor: usize) -> Vec<f64> {
    values
        .chunks(factor)
        .map(|c| c.iter().sum::<f64>() / factor as f64)
        .collect()
}

/// Runs every rung of the viscosity ladder (concurrently, collected in
/// ladder order) and compares it with the finest rung.
pub fn eps_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let trajectories = spec
        .eps_ladder
        .par_iter()
        .map(|&eps| spec.run_rung(eps, spec.grid))
        .collect::<Vec<Result<Trajectory>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let reference = trajectories.last().expect("at least 3 rungs");
    let ref_model = &reference.model;
    let disc = Discretization::new(ref_model, spec.grid)?;
    let times = reference.times();
    let coarse = CoarseGrid::new(
        &spec.grid,
        (times[0], *times.last().expect("nonempty")),
        spec.coarse(),
    )?;
    let ref_fields = reference
        .snapshots
        .iter()
        .map(|s| snapshot_fields(s, &disc))
        .collect::<Result<Vec<_>>>()?;
    let (s_tol, v_tol) = SetSMask::default_tolerances(reference, ref_model)?;
    let mask = SetSMask::from_fields(reference, &ref_fields, &coarse, s_tol, v_tol);

    let rungs = trajectories
        .par_iter()
        .map(|traj| -> Result<RungReport> {
            check_compatible(traj, reference)?;
            let fields = traj
                .snapshots
                .iter()
                .map(|s| snapshot_fields(s, &disc))
                .collect::<Result<Vec<_>>>()?;
            let (dist_s, dist_grad, du, dv) =
                distances(&fields, &ref_fields, &times, &spec.grid, &mask);
            let stats = fluctuation_core(traj, reference, &coarse, &disc, &ref_fields)?;
            Ok(RungReport {
                epsilon: traj.model.epsilon,
                steps: traj.steps(),
                dist_s,
                dist_grad_s_alpha: dist_grad,
                dist_u_on_s: du,
                dist_v_on_s: dv,
                mean_abs_m11: stats.mean_abs_m11(),
                max_cs_ratio: stats.max_cs_ratio(),
                stats,
            })
        })
        .collect::<Vec<Result<RungReport>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let grid_rungs = match &spec.grid_ladder {
        None => Vec::new(),
        Some(ns) => grid_refinement(spec, ns)?,
    };

    Ok(SweepReport {
        eps_ladder: spec.eps_ladder.clone(),
        grid: spec.grid,
        t_end: spec.t_end,
        alpha: spec.base_model.pressure.alpha,
        mask,
        rungs,
        grid_rungs,
    })
}

fn grid_refinement(spec: &SweepSpec, ns: &[usize]) -> Result<Vec<GridRung>> {
    let eps = *spec.eps_ladder.last().expect("validated");
    let finest = *ns.iter().max().expect("validated");
    let trajs = ns
        .par_iter()
        .map(|&n| {
            let grid = GridSpec {
                n_cells: n,
                ..spec.grid
            };
            grid.validate()?;
            spec.run_rung(eps, grid)
        })
        .collect::<Vec<Result<Trajectory>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let fine = &trajs[ns.iter().position(|&n| n == finest).expect("present")];
    let fine_s = fine.final_state().total();
    Ok(ns
        .iter()
        .zip(&trajs)
        .map(|(&n, traj)| {
            let s = traj.final_state().total();
            let reference = restrict(&fine_s.values, finest / n);
            let dx = traj.grid.dx();
            let d: f64 = s
                .values
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            GridRung {
                n_cells: n,
                steps: traj.steps(),
                dist_s_final: (dx * d).sqrt(),
            }
        })
        .collect())
}

/// Both sides of the defect identity per coarse block of one rung.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectCell {
    pub t: f64,
    pub x: f64,
    /// `< |d_x s^alpha - d_x s_ref^alpha|^2 >`
    pub left: f64,
    /// `alpha < (u - u_ref)(d_x s^alpha - d_x s_ref^alpha) d_x (V2 - V1)_ref >`
    pub right: f64,
    pub gap: f64,
}

/// Per-rung, per-block comparison of the squared gradient defect with the
/// pairing that identifies its limit.
pub fn defect_measure_check(report: &SweepReport) -> Vec<Vec<DefectCell>> {
    report
        .rungs
        .iter()
        .map(|r| {
            r.stats
                .cells
                .iter()
                .map(|c| {
                    let right = report.alpha * c.m_defect;
                    DefectCell {
                        t: c.t,
                        x: c.x,
                        left: c.m02,
                        right,
                        gap: c.m02 - right,
                    }
                })
                .collect()
        })
        .collect()
}

/// Mean `|gap|` over blocks, per rung.
pub fn mean_defect_gap(cells: &[Vec<DefectCell>]) -> Vec<f64> {
    cells
        .iter()
        .map(|row| {
            if row.is_empty() {
                0.0
            } else {
                row.iter().map(|c| c.gap.abs()).sum::<f64>() / row.len() as f64
            }
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(
            "slope fit needs two or more paired points".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("slope fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Boundary;
    use crate::scenarios::{demo_model, ModelPreset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_spec() -> SweepSpec {
        let grid = GridSpec::new(-4.0, 4.0, 64, Boundary::Periodic).unwrap();
        let mut spec = SweepSpec::new(
            vec![0.1, 0.05, 0.02],
            demo_model(0.0),
            grid,
            InitialCondition::two_bump_mixed(),
            0.2,
        );
        spec.snapshots = 20;
        spec
    }

    #[test]
    fn spec_validation() {
        let mut s = small_spec();
        s.validate().unwrap();
        s.eps_ladder = vec![0.1, 0.1, 0.01];
        assert!(s.validate().is_err());
        s.eps_ladder = vec![0.1, 0.01];
        assert!(s.validate().is_err());
        s.eps_ladder = vec![0.1, 0.01, -0.001];
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.grid_ladder = Some(vec![32, 48, 64]);
        assert!(s.validate().is_err());
        s.grid_ladder = Some(vec![16, 32, 64]);
        s.validate().unwrap();
    }

    #[test]
    fn coarse_grid_indexing() {
        let g = GridSpec::new(0.0, 1.0, 100, Boundary::Periodic).unwrap();
        let c = CoarseGrid::new(&g, (0.0, 1.0), (0.05, 0.02)).unwrap();
        assert_eq!((c.n_t, c.n_x), (20, 50));
        assert_eq!(c.t_index(0.0), 0);
        assert_eq!(c.t_index(1.0), 19);
        assert_eq!(c.t_index(0.05), 1);
        assert_eq!(c.x_index(0.999), 49);
        assert_eq!(c.center(0), (0.025, 0.01));
    }

    #[test]
    fn identical_runs_give_zero_moments() {
        let spec = small_spec();
        let traj = spec.run_rung(0.05, spec.grid).unwrap();
        let st = fluctuation_stats(&traj, &traj, spec.coarse(), &traj.model).unwrap();
        assert!(st
            .cells
            .iter()
            .all(|c| c.m11 == 0.0 && c.m20 == 0.0 && c.m02 == 0.0 && c.m_defect == 0.0));
        assert!(st
            .cells
            .iter()
            .all(|c| c.slope.is_none() && c.cs_ratio.is_none()));
        assert!(st.cells.iter().map(|c| c.samples).sum::<usize>() == traj.snapshots.len() * 64);
    }

    #[test]
    fn identical_rungs_give_zero_distances() {
        let mut spec = small_spec();
        spec.eps_ladder = vec![0.05, 0.05 * (1.0 - 1e-15), 0.05 * (1.0 - 2e-15)];
        let rep = eps_sweep(&spec).unwrap();
        for r in &rep.rungs {
            assert!(r.dist_s < 1e-12 && r.dist_grad_s_alpha < 1e-10 && r.dist_u_on_s < 1e-12);
            assert!(r.mean_abs_m11 < 1e-20);
        }
        for row in defect_measure_check(&rep) {
            assert!(row
                .iter()
                .all(|c| c.left.abs() < 1e-20 && c.right.abs() < 1e-20));
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let spec = small_spec();
        let a = spec.run_rung(0.05, spec.grid).unwrap();
        let b = spec.run_rung(0.05, spec.grid.refined(2)).unwrap();
        assert!(matches!(
            fluctuation_stats(&a, &b, spec.coarse(), &a.model),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn colinear_samples_have_unit_cs_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let l1: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l2: Vec<f64> = l1.iter().map(|x| 2.0 * x).collect();
        let (m11, m20, m02) = moments_from_samples(&l1, &l2);
        let (slope, cs) = slope_and_cs_ratio(m11, m20, m02);
        assert!((slope.unwrap() - 2.0).abs() < 1e-14);
        assert!((cs.unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn independent_samples_are_nearly_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(20240611);
        for _ in 0..20 {
            let l1: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
            let l2: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (m11, m20, m02) = moments_from_samples(&l1, &l2);
            assert!(m11.abs() / (m20 * m02).sqrt() <= 0.05);
        }
    }

    #[test]
    fn mask_grows_when_velocity_tolerance_shrinks() {
        let mut spec = small_spec();
        spec.base_model.velocity.v2 = crate::model::AnalyticProfile::Quadratic { coeff: 0.3 };
        let traj = spec.run_rung(0.05, spec.grid).unwrap();
        let t = traj.times();
        let c = CoarseGrid::new(&spec.grid, (t[0], *t.last().unwrap()), spec.coarse()).unwrap();
        let mut prev: Option<SetSMask> = None;
        for v_tol in [10.0, 3.0, 1.0, 0.3, 0.1, 1e-3] {
            let m = SetSMask::from_reference(&traj, &c, &traj.model, 1e-8, v_tol).unwrap();
            if let Some(p) = &prev {
                assert!(p.in_s.iter().zip(&m.in_s).all(|(a, b)| !a || *b));
            }
            prev = Some(m);
        }
    }

    #[test]
    fn demo_mask_is_everything() {
        let spec = small_spec();
        let rep = eps_sweep(&spec).unwrap();
        assert_eq!(rep.mask.count(), rep.mask.in_s.len());
        assert!(rep
            .rungs
            .iter()
            .all(|r| r.max_cs_ratio.is_none_or(|c| c <= 1.0 + 1e-12)));
        assert_eq!(rep.rungs.last().unwrap().dist_grad_s_alpha, 0.0);
    }

    #[test]
    fn equal_velocities_make_the_defect_pairing_vanish() {
        let mut spec = small_spec();
        spec.base_model.velocity.v2 = spec.base_model.velocity.v1.clone();
        let rep = eps_sweep(&spec).unwrap();
        for row in defect_measure_check(&rep) {
            assert!(row.iter().all(|c| c.right == 0.0));
        }
    }

    #[test]
    fn sweep_is_deterministic_across_pools() {
        let spec = small_spec();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| eps_sweep(&spec)).unwrap();
        let b = many.install(|| eps_sweep(&spec)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_log_slope_recovers_power() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert!(log_log_slope(&x, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn heat_distances_scale_linearly_in_epsilon() {
        let grid = GridSpec::new(-4.0, 4.0, 128, Boundary::Periodic).unwrap();
        let initial = InitialCondition::Gaussian {
            center: 0.0,
            width: 0.5,
            mass: 1.0,
            fraction_u: 0.4,
        };
        let ladder = vec![0.08, 0.04, 0.02, 0.01, 1e-4];
        let mut spec = SweepSpec::new(
            ladder.clone(),
            ModelPreset::Heat.model(0.0),
            grid,
            initial,
            0.2,
        );
        spec.snapshots = 20;
        let rep = eps_sweep(&spec).unwrap();
        let d = rep.gradient_distances();
        assert!(strictly_decreasing(&d), "{d:?}");
        let slope = log_log_slope(&ladder[..4], &d).unwrap();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
        let ds: Vec<f64> = rep.rungs[..4].iter().map(|r| r.dist_s).collect();
        let slope = log_log_slope(&ladder[..4], &ds).unwrap();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    }

    #[test]
    fn grid_ladder_distances_shrink() {
        let mut spec = small_spec();
        spec.grid_ladder = Some(vec![32, 64, 128]);
        let rep = eps_sweep(&spec).unwrap();
        let d: Vec<f64> = rep.grid_rungs.iter().map(|g| g.dist_s_final).collect();
        assert_eq!(d[2], 0.0);
        assert!(d[0] > d[1] && d[1] > 0.0, "{d:?}");
    }
}
