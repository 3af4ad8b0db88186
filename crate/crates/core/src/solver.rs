//! Explicit conservative time integration of the viscous system.

use serde::{Deserialize, Serialize};

use crate::domain::{integrate, Boundary, FaceField, Field, GridSpec, State};
use crate::error::{Error, Result};
use crate::model::{darcy_faces, Discretization, ModelSpec};

/// Relative tolerance used to decide that a step has landed on a target time.
const LANDING_TOL: f64 = 1e-12;

/// Boundary density ratio above which a no-flux run is flagged as leaking.
pub const LEAKAGE_WARN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub cfl: f64,
    pub t_end: f64,
    /// Snapshot every this many steps (ignored when `snapshot_interval` is set).
    pub output_every: usize,
    pub max_steps: usize,
    #[serde(default)]
    pub positivity_floor: f64,
    /// When set, steps are shortened to land on every multiple of this time
    /// and snapshots are taken exactly there.
    #[serde(default)]
    pub snapshot_interval: Option<f64>,
}

impl SolverParams {
    pub fn new(t_end: f64) -> Self {
        SolverParams {
            cfl: 0.4,
            t_end,
            output_every: 1,
            max_steps: 50_000_000,
            positivity_floor: 0.0,
            snapshot_interval: None,
        }
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn with_output_every(mut self, every: usize) -> Self {
        self.output_every = every;
        self
    }

    pub fn with_snapshot_interval(mut self, interval: f64) -> Self {
        self.snapshot_interval = Some(interval);
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    /// `cfl` above 1 is accepted here on purpose, so that an oversized step
    /// surfaces as a stability error rather than a configuration error; the
    /// configuration layer enforces `cfl <= 1` for normal runs.
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl.is_finite() && self.cfl > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cfl must be positive, got {}",
                self.cfl
            )));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::InvalidInput(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.output_every == 0 || self.max_steps == 0 {
            return Err(Error::InvalidInput(
                "output_every and max_steps must be positive".into(),
            ));
        }
        if !(self.positivity_floor.is_finite() && self.positivity_floor >= 0.0) {
            return Err(Error::InvalidInput("positivity_floor must be >= 0".into()));
        }
        if let Some(dt) = self.snapshot_interval {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "snapshot_interval must be positive, got {dt}"
                )));
            }
        }
        Ok(())
    }
}

/// Reusable single-step engine for one model on one grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    disc: Discretization,
    floor: f64,
    clipped_mass: f64,
    static_velocity: Option<(FaceField, FaceField)>,
    scratch: Vec<f64>,
    fu: Vec<f64>,
    fv: Vec<f64>,
}

impl Stepper {
    pub fn new(model: &ModelSpec, grid: GridSpec, positivity_floor: f64) -> Result<Self> {
        let disc = Discretization::new(model, grid)?;
        let static_velocity = if disc.has_kernels() {
            None
        } else {
            let zero = Field::zeros(grid);
            Some(disc.face_velocities(&zero, &zero)?)
        };
        let n = grid.n_cells;
        Ok(Stepper {
            disc,
            floor: positivity_floor,
            clipped_mass: 0.0,
            static_velocity,
            scratch: vec![0.0; 2 * n],
            fu: vec![0.0; n + 1],
            fv: vec![0.0; n + 1],
        })
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    /// Total mass removed by clipping so far.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    fn velocities(&self, state: &State) -> Result<(FaceField, FaceField)> {
        match &self.static_velocity {
            Some(w) => Ok(w.clone()),
            None => self.disc.face_velocities(&state.u, &state.v),
        }
    }

    /// Largest stable step for `state` (not capped by any end time).
    pub fn stable_dt(&self, state: &State, cfl: f64) -> Result<f64> {
        let grid = self.disc.grid;
        let model = &self.disc.model;
        let law = &model.pressure;
        let n = grid.n_cells;
        let s: Vec<f64> = (0..n)
            .map(|i| law.total(state.u.values[i], state.v.values[i]))
            .collect();
        let mut d_max = 0.0_f64;
        for k in 0..=n {
            if let Some((l, r)) = face_cells(&grid, k) {
                d_max = d_max.max(law.secant_diffusivity(s[l], s[r]));
            }
        }
        let (w1, w2) = self.velocities(state)?;
        let w_max = w1.max_abs().max(w2.max_abs());
        let dx = grid.dx();
        let mut dt = (dx * dx / (2.0 * (d_max + model.epsilon))).min(dx / (w_max + 1e-30));
        if !model.growth.is_zero() {
            let g_max = s.iter().fold(0.0_f64, |m, &si| {
                m.max(model.growth.g1.eval(si).abs())
                    .max(model.growth.g2.eval(si).abs())
            });
            if g_max > 0.0 {
                dt = dt.min(1.0 / g_max);
            }
        }
        Ok(cfl * dt)
    }

    /// Right-hand side `(du/dt, dv/dt)` of the semi-discrete system.
    pub fn rates(&mut self, state: &State) -> Result<(Field, Field)> {
        let grid = self.disc.grid;
        let mut du = Field::zeros(grid);
        let mut dv = Field::zeros(grid);
        self.rates_into(state, &mut du.values, &mut dv.values)?;
        Ok((du, dv))
    }

    fn rates_into(&mut self, state: &State, du: &mut [f64], dv: &mut [f64]) -> Result<()> {
        let grid = self.disc.grid;
        let model = &self.disc.model;
        let n = grid.n_cells;
        let dx = grid.dx();
        let u = &state.u.values;
        let v = &state.v.values;
        darcy_faces(
            &grid,
            &model.pressure,
            u,
            v,
            &mut self.scratch,
            &mut self.fu,
            &mut self.fv,
        );
        let owned;
        let (w1, w2) = match &self.static_velocity {
            Some((a, b)) => (&a.values, &b.values),
            None => {
                owned = self.disc.face_velocities(&state.u, &state.v)?;
                (&owned.0.values, &owned.1.values)
            }
        };
        let eps = model.epsilon;
        for k in 0..=n {
            let Some((l, r)) = face_cells(&grid, k) else {
                continue;
            };
            let mut fu = self.fu[k];
            let mut fv = self.fv[k];
            if eps > 0.0 {
                fu += eps * (u[r] - u[l]) / dx;
                fv += eps * (v[r] - v[l]) / dx;
            }
            fu += advective(w1[k], u[l], u[r]);
            fv += advective(w2[k], v[l], v[r]);
            self.fu[k] = fu;
            self.fv[k] = fv;
        }
        if grid.boundary == Boundary::Periodic {
            self.fu[n] = self.fu[0];
            self.fv[n] = self.fv[0];
        }
        let growth = &model.growth;
        let has_growth = !growth.is_zero();
        for i in 0..n {
            du[i] = (self.fu[i + 1] - self.fu[i]) / dx;
            dv[i] = (self.fv[i + 1] - self.fv[i]) / dx;
            if has_growth {
                let s = model.pressure.total(u[i], v[i]);
                du[i] += u[i] * growth.g1.eval(s);
                dv[i] += v[i] * growth.g2.eval(s);
            }
        }
        Ok(())
    }

    /// One forward Euler step from `cur` into `next`.
    pub fn step_into(
        &mut self,
        cur: &State,
        next: &mut State,
        dt: f64,
        step_index: usize,
    ) -> Result<()> {
        let grid = self.disc.grid;
        let n = grid.n_cells;
        let mut du = std::mem::take(&mut next.u.values);
        let mut dv = std::mem::take(&mut next.v.values);
        du.resize(n, 0.0);
        dv.resize(n, 0.0);
        self.rates_into(cur, &mut du, &mut dv)?;
        let t_new = cur.t + dt;
        let dx = grid.dx();
        for (name, old, d) in [("u", &cur.u.values, &mut du), ("v", &cur.v.values, &mut dv)] {
            for i in 0..n {
                let x = old[i] + dt * d[i];
                if !x.is_finite() {
                    return Err(Error::Stability {
                        t: t_new,
                        step: step_index,
                        reason: format!("non-finite {name} in cell {i}"),
                    });
                }
                if x < 0.0 {
                    if x < -self.floor {
                        return Err(Error::Stability {
                            t: t_new,
                            step: step_index,
                            reason: format!("negative {name}[{i}] = {x:.3e}"),
                        });
                    }
                    self.clipped_mass += -x * dx;
                    log::debug!("clipped {name}[{i}] = {x:.3e} at step {step_index}");
                    d[i] = 0.0;
                } else {
                    d[i] = x;
                }
            }
        }
        next.t = t_new;
        next.u.values = du;
        next.v.values = dv;
        next.u.grid = grid;
        next.v.grid = grid;
        Ok(())
    }
}

/// Donor-cell flux for `d_x (u w)`: material moves against `w`.
#[inline]
fn advective(w: f64, ul: f64, ur: f64) -> f64 {
    if w > 0.0 {
        w * ur
    } else if w < 0.0 {
        w * ul
    } else {
        0.0
    }
}

/// Left and right cells of face `k`; `None` for no-flux boundary faces.
#[inline]
pub(crate) fn face_cells(grid: &GridSpec, k: usize) -> Option<(usize, usize)> {
    let n = grid.n_cells;
    if k > 0 && k < n {
        return Some((k - 1, k));
    }
    match grid.boundary {
        Boundary::Periodic => Some((n - 1, 0)),
        Boundary::NoFlux => None,
    }
}

/// `cfl * min(dx^2 / (2 (D_max + eps)), dx / (W_max + 1e-30))`, further
/// limited by `1 / sup|G|` when growth is active.
pub fn stable_dt(state: &State, model: &ModelSpec, grid: &GridSpec, cfl: f64) -> Result<f64> {
    if !state.grid().same_as(grid) {
        return Err(Error::GridMismatch(
            "state does not live on the given grid".into(),
        ));
    }
    Stepper::new(model, *grid, 0.0)?.stable_dt(state, cfl)
}

/// One forward Euler step with a zero positivity floor.
pub fn step(state: &State, model: &ModelSpec, dt: f64) -> Result<State> {
    state.validate()?;
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "dt must be finite and >= 0, got {dt}"
        )));
    }
    let mut stepper = Stepper::new(model, state.grid(), 0.0)?;
    let mut next = State::zeros(state.grid());
    stepper.step_into(state, &mut next, dt, 0)?;
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<State>,
    pub dt_history: Vec<f64>,
    pub model: ModelSpec,
    pub grid: GridSpec,
    pub clipped_mass: f64,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn steps(&self) -> usize {
        self.dt_history.len()
    }

    pub fn final_state(&self) -> &State {
        self.snapshots
            .last()
            .expect("trajectory has at least one snapshot")
    }

    /// `(mass_u, mass_v)` per snapshot.
    pub fn masses(&self) -> Vec<(f64, f64)> {
        self.snapshots
            .iter()
            .map(|s| (integrate(&s.u), integrate(&s.v)))
            .collect()
    }

    /// Largest relative change of either species mass with respect to t=0.
    pub fn max_mass_drift(&self) -> f64 {
        let m = self.masses();
        let (u0, v0) = m[0];
        let rel = |a: f64, b: f64| {
            if b == 0.0 {
                a.abs()
            } else {
                ((a - b) / b).abs()
            }
        };
        m.iter()
            .fold(0.0_f64, |acc, &(u, v)| acc.max(rel(u, u0)).max(rel(v, v0)))
    }
}

pub fn run(
    initial: &State,
    model: &ModelSpec,
    params: &SolverParams,
    grid: &GridSpec,
) -> Result<Trajectory> {
    run_with_observer(initial, model, params, grid, |_, _, _| Ok(()))
}

/// Like [`run`], calling `observer(before, after, dt)` after every step.
pub fn run_with_observer<F>(
    initial: &State,
    model: &ModelSpec,
    params: &SolverParams,
    grid: &GridSpec,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&State, &State, f64) -> Result<()>,
{
    params.validate()?;
    initial.validate()?;
    if !initial.grid().same_as(grid) {
        return Err(Error::GridMismatch(
            "initial state does not live on the run grid".into(),
        ));
    }
    if initial.t >= params.t_end {
        return Err(Error::InvalidInput(format!(
            "initial time {} is not before t_end {}",
            initial.t, params.t_end
        )));
    }
    let mut stepper = Stepper::new(model, *grid, params.positivity_floor)?;
    let mut cur = initial.clone();
    let mut next = initial.clone();
    let mut snapshots = vec![initial.clone()];
    let mut dt_history = Vec::new();
    let t0 = initial.t;
    let interval = params.snapshot_interval;
    let mut next_mark = interval.map(|h| (((t0 / h) + LANDING_TOL).floor() + 1.0) * h);
    let mut steps = 0usize;

    while cur.t < params.t_end {
        if steps >= params.max_steps {
            return Err(Error::MaxStepsExceeded {
                max_steps: params.max_steps,
                t: cur.t,
            });
        }
        let mut dt = stepper.stable_dt(&cur, params.cfl)?;
        let mut target = params.t_end;
        if let Some(mark) = next_mark {
            target = target.min(mark);
        }
        let landing = cur.t + dt >= target - LANDING_TOL * target.abs().max(1.0);
        if landing {
            dt = target - cur.t;
        }
        if !(dt > 0.0) {
            return Err(Error::Stability {
                t: cur.t,
                step: steps,
                reason: format!("time step collapsed to {dt:.3e}"),
            });
        }
        stepper.step_into(&cur, &mut next, dt, steps)?;
        if landing {
            next.t = target;
        }
        steps += 1;
        dt_history.push(dt);
        observer(&cur, &next, dt)?;
        std::mem::swap(&mut cur, &mut next);

        let at_end = cur.t >= params.t_end;
        let take = match (interval, next_mark) {
            (Some(h), Some(mark)) => {
                if landing && cur.t == mark {
                    next_mark = Some(((mark / h).round() + 1.0) * h);
                    true
                } else {
                    false
                }
            }
            _ => steps.is_multiple_of(params.output_every),
        };
        if take || at_end {
            snapshots.push(cur.clone());
        }
    }

    let mut warnings = Vec::new();
    if grid.boundary == Boundary::NoFlux {
        let leak = snapshots
            .iter()
            .map(|s| s.u.boundary_leakage().max(s.v.boundary_leakage()))
            .fold(0.0_f64, f64::max);
        if leak > LEAKAGE_WARN {
            let msg = format!("boundary density reached {leak:.3e} of peak; widen the domain");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    if stepper.clipped_mass() > 0.0 {
        let msg = format!(
            "positivity floor clipped a total mass of {:.3e}",
            stepper.clipped_mass()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Trajectory {
        snapshots,
        dt_history,
        model: model.clone(),
        grid: *grid,
        clipped_mass: stepper.clipped_mass(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{integrate, Boundary};
    use crate::model::{AnalyticProfile, Kernel, KernelSet};
    use crate::oracle::ExactSolution;
    use crate::scenarios::{demo_grid, demo_model, InitialCondition};

    fn grid01(n: usize, b: Boundary) -> GridSpec {
        GridSpec::new(0.0, n as f64 * 0.1, n, b).unwrap()
    }

    #[test]
    fn stable_dt_examples() {
        let g = grid01(20, Boundary::Periodic);
        let vac = ModelSpec::pure_diffusion(2.0, 0.01);
        let dt = stable_dt(&State::zeros(g), &vac, &g, 0.5).unwrap();
        assert!((dt - 0.25).abs() < 1e-15);

        let ones = State::new(0.0, Field::constant(g, 1.0), Field::zeros(g)).unwrap();
        let pme = ModelSpec::pure_diffusion(2.0, 0.0);
        assert!((stable_dt(&ones, &pme, &g, 0.5).unwrap() - 0.0025).abs() < 1e-15);

        let demo = demo_model(0.0);
        assert!((stable_dt(&ones, &demo, &g, 0.5).unwrap() - 0.0025).abs() < 1e-15);
        // pure advection is limited by dx / W
        let mut adv = demo_model(0.0);
        adv.pressure.alpha = 2.0;
        let thin = State::new(0.0, Field::constant(g, 1e-6), Field::zeros(g)).unwrap();
        assert!((stable_dt(&thin, &adv, &g, 0.5).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn constant_state_is_stationary() {
        let g = grid01(16, Boundary::Periodic);
        let s = State::new(0.0, Field::constant(g, 0.7), Field::constant(g, 1.3)).unwrap();
        for alpha in [0.5, 1.0, 2.0, 3.0] {
            let next = step(&s, &ModelSpec::pure_diffusion(alpha, 0.1), 0.001).unwrap();
            assert_eq!(next.u.values, s.u.values);
            assert_eq!(next.v.values, s.v.values);
        }
    }

    #[test]
    fn vacuum_species_stays_empty() {
        let g = demo_grid(128).unwrap();
        let v = Field::from_fn(g, |x| (-(x * x)).exp());
        let s = State::new(0.0, Field::zeros(g), v).unwrap();
        let model = demo_model(0.01);
        let traj = run(
            &s,
            &model,
            &SolverParams::new(0.2).with_output_every(10),
            &g,
        )
        .unwrap();
        for snap in &traj.snapshots {
            assert!(snap.u.values.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn heat_single_step_local_error() {
        // one step from an exact Gaussian, refining dx -> dx/2 and dt -> dt/4
        let eps = 0.05;
        let exact = ExactSolution::GaussianHeat {
            diffusivity: 1.0 + eps,
            mass: 1.0,
            center: 0.0,
            t_offset: 0.0,
        };
        let model = ModelSpec::pure_diffusion(1.0, eps);
        let mut errs = Vec::new();
        for n in [128usize, 256, 512] {
            let g = GridSpec::new(-6.0, 6.0, n, Boundary::NoFlux).unwrap();
            let dt = 0.2 * g.dx() * g.dx();
            let s0 = State::new(0.3, exact.evaluate(0.3, &g).unwrap(), Field::zeros(g)).unwrap();
            let s1 = step(&s0, &model, dt).unwrap();
            let e = exact.evaluate(0.3 + dt, &g).unwrap();
            let err =
                s1.u.values
                    .iter()
                    .zip(&e.values)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 12.0, "{errs:?}");
        assert!(errs[1] / errs[2] > 12.0, "{errs:?}");
    }

    #[test]
    fn zero_initial_data_gives_zero_trajectory() {
        let g = demo_grid(64).unwrap();
        let traj = run(
            &State::zeros(g),
            &demo_model(0.01),
            &SolverParams::new(0.1),
            &g,
        )
        .unwrap();
        assert!(traj.snapshots.len() > 2);
        for s in &traj.snapshots {
            assert!(s.u.values.iter().chain(&s.v.values).all(|&x| x == 0.0));
        }
    }

    #[test]
    fn demo_species_drift_apart() {
        let g = demo_grid(256).unwrap();
        let init = InitialCondition::TwoBumpMixed {
            separation: 0.0,
            width: 0.6,
            height: 1.0,
            mix: 0.5,
        }
        .build(&g)
        .unwrap();
        let traj = run(
            &init,
            &demo_model(0.01),
            &SolverParams::new(0.5).with_output_every(1000),
            &g,
        )
        .unwrap();
        let com = |f: &Field| {
            let m = integrate(f);
            integrate(&Field::from_fn(g, |x| x).zip_map(f, |x, y| x * y)) / m
        };
        let last = traj.final_state();
        assert!(com(&last.u) > com(&init.u) + 0.1);
        assert!(com(&last.v) < com(&init.v) - 0.1);
        assert!(traj.max_mass_drift() < 1e-12);
    }

    #[test]
    fn snapshot_interval_lands_exactly() {
        let g = demo_grid(128).unwrap();
        let init = InitialCondition::two_bump_mixed().build(&g).unwrap();
        let p = SolverParams::new(0.5).with_snapshot_interval(0.1);
        let traj = run(&init, &demo_model(0.01), &p, &g).unwrap();
        let times = traj.times();
        assert_eq!(times.len(), 6);
        for (k, t) in times.iter().enumerate() {
            assert!((t - 0.1 * k as f64).abs() < 1e-12, "{times:?}");
        }
        assert_eq!(*times.last().unwrap(), 0.5);
        let total: f64 = traj.dt_history.iter().sum();
        assert!((total - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oversized_cfl_is_a_stability_error() {
        let g = demo_grid(128).unwrap();
        let init = InitialCondition::two_bump_mixed().build(&g).unwrap();
        let err = run(
            &init,
            &demo_model(0.01),
            &SolverParams::new(0.5).with_cfl(50.0),
            &g,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Stability { .. }), "{err:?}");
    }

    #[test]
    fn max_steps_is_enforced() {
        let g = demo_grid(64).unwrap();
        let init = InitialCondition::two_bump_mixed().build(&g).unwrap();
        let err = run(
            &init,
            &demo_model(0.01),
            &SolverParams::new(1.0).with_max_steps(3),
            &g,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::MaxStepsExceeded {
                max_steps: 3,
                t: err_time(&err)
            }
        );
    }

    fn err_time(e: &Error) -> f64 {
        match e {
            Error::MaxStepsExceeded { t, .. } => *t,
            _ => f64::NAN,
        }
    }

    #[test]
    fn species_swap_is_exact() {
        let g = demo_grid(128).unwrap();
        let mut model = demo_model(0.02);
        model.velocity.v1 = AnalyticProfile::Quadratic { coeff: -0.3 };
        model.kernels = KernelSet {
            k11: Some(Kernel::gaussian(0.5, 0.3)),
            k12: Some(Kernel::gaussian(-0.2, 0.4)),
            k21: None,
            k22: Some(Kernel::gaussian(1.0, 0.2)),
        };
        model.pressure.c_u = 1.5;
        let init = InitialCondition::two_bump_mixed().build(&g).unwrap();
        let p = SolverParams::new(0.2).with_output_every(50);
        let a = run(&init, &model, &p, &g).unwrap();
        let b = run(&init.swapped(), &model.swapped(), &p, &g).unwrap();
        assert_eq!(a.snapshots.len(), b.snapshots.len());
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(x.u.values, y.v.values);
            assert_eq!(x.v.values, y.u.values);
        }
    }

    #[test]
    fn leakage_warning_on_narrow_noflux_domain() {
        let g = GridSpec::new(-1.0, 1.0, 64, Boundary::NoFlux).unwrap();
        let init = InitialCondition::Gaussian {
            center: 0.0,
            width: 0.5,
            mass: 1.0,
            fraction_u: 1.0,
        }
        .build(&g)
        .unwrap();
        let traj = run(
            &init,
            &ModelSpec::pure_diffusion(1.0, 0.0),
            &SolverParams::new(0.05),
            &g,
        )
        .unwrap();
        assert!(traj.warnings.iter().any(|w| w.contains("boundary")));
        assert!(traj.max_mass_drift() < 1e-12);
    }
}
