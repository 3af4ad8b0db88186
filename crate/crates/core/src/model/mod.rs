//! Pressure law, vacuum-safe Darcy flux, velocity aggregates and growth terms.

mod kernel;
mod profile;

pub use kernel::{
    convolve, convolve_direct, convolve_fft, Kernel, KernelShape, SampledKernel, FFT_THRESHOLD,
};
pub use profile::{AnalyticProfile, GrowthFn, Tabulation};

use serde::{Deserialize, Serialize};

use crate::domain::{face_gradient, gradient, Boundary, FaceField, Field, GridSpec, State};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureLaw {
    pub alpha: f64,
    #[serde(default = "one")]
    pub c_u: f64,
    #[serde(default = "one")]
    pub c_v: f64,
}

fn one() -> f64 {
    1.0
}

impl PressureLaw {
    pub fn new(alpha: f64) -> Self {
        PressureLaw {
            alpha,
            c_u: 1.0,
            c_v: 1.0,
        }
    }

    pub fn weighted(alpha: f64, c_u: f64, c_v: f64) -> Self {
        PressureLaw { alpha, c_u, c_v }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.c_u.is_finite() && self.c_u > 0.0 && self.c_v.is_finite() && self.c_v > 0.0) {
            return Err(Error::InvalidInput(format!(
                "pressure weights must be positive, got ({}, {})",
                self.c_u, self.c_v
            )));
        }
        Ok(())
    }

    pub fn is_unit_weight(&self) -> bool {
        self.c_u == 1.0 && self.c_v == 1.0
    }

    /// `s^alpha`, with exact fast paths for the common exponents.
    #[inline]
    pub fn power(&self, s: f64) -> f64 {
        if self.alpha == 2.0 {
            s * s
        } else if self.alpha == 1.0 {
            s
        } else {
            s.powf(self.alpha)
        }
    }

    #[inline]
    pub fn total(&self, u: f64, v: f64) -> f64 {
        self.c_u * u + self.c_v * v
    }

    /// Secant diffusivity `(P(b) - P(a)) / (alpha (b - a))` of the total
    /// density, `s^(alpha-1)` in the limit `a = b`.
    pub fn secant_diffusivity(&self, a: f64, b: f64) -> f64 {
        if a == b {
            if a == 0.0 {
                // two vacuum cells exchange nothing
                return 0.0;
            }
            return a.powf(self.alpha - 1.0);
        }
        (self.power(b) - self.power(a)) / (self.alpha * (b - a))
    }
}

/// `p(s) = s^(alpha-1)/(alpha-1)`, or `log s` when `alpha = 1`.
pub fn pressure_value(s: f64, law: &PressureLaw) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("pressure evaluated at s={s}")));
    }
    let a = law.alpha;
    if a <= 1.0 && s == 0.0 {
        return Err(Error::Domain(format!(
            "pressure with alpha={a} is singular at vacuum"
        )));
    }
    if a == 1.0 {
        Ok(s.ln())
    } else {
        Ok(s.powf(a - 1.0) / (a - 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySpec {
    pub v1: AnalyticProfile,
    pub v2: AnalyticProfile,
}

impl VelocitySpec {
    pub fn zero() -> Self {
        VelocitySpec {
            v1: AnalyticProfile::Zero,
            v2: AnalyticProfile::Zero,
        }
    }
}

/// `k_ij` acts in the velocity of species `i` on species `j`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelSet {
    pub k11: Option<Kernel>,
    pub k12: Option<Kernel>,
    pub k21: Option<Kernel>,
    pub k22: Option<Kernel>,
}

impl KernelSet {
    pub fn is_empty(&self) -> bool {
        self.k11.is_none() && self.k12.is_none() && self.k21.is_none() && self.k22.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthLaw {
    pub g1: GrowthFn,
    pub g2: GrowthFn,
}

impl Default for GrowthLaw {
    fn default() -> Self {
        GrowthLaw {
            g1: GrowthFn::Zero,
            g2: GrowthFn::Zero,
        }
    }
}

impl GrowthLaw {
    pub fn is_zero(&self) -> bool {
        self.g1.is_zero() && self.g2.is_zero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub pressure: PressureLaw,
    pub velocity: VelocitySpec,
    #[serde(default)]
    pub kernels: KernelSet,
    #[serde(default)]
    pub growth: GrowthLaw,
    pub epsilon: f64,
}

impl ModelSpec {
    /// Single pressure law, no advection, no kernels, no growth.
    pub fn pure_diffusion(alpha: f64, epsilon: f64) -> Self {
        ModelSpec {
            pressure: PressureLaw::new(alpha),
            velocity: VelocitySpec::zero(),
            kernels: KernelSet::default(),
            growth: GrowthLaw::default(),
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pressure.validate()?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        for k in [
            &self.kernels.k11,
            &self.kernels.k12,
            &self.kernels.k21,
            &self.kernels.k22,
        ]
        .into_iter()
        .flatten()
        {
            k.validate()?;
        }
        self.growth.g1.validate()?;
        self.growth.g2.validate()?;
        Ok(())
    }

    /// The model with species roles exchanged.
    pub fn swapped(&self) -> ModelSpec {
        ModelSpec {
            pressure: PressureLaw::weighted(
                self.pressure.alpha,
                self.pressure.c_v,
                self.pressure.c_u,
            ),
            velocity: VelocitySpec {
                v1: self.velocity.v2.clone(),
                v2: self.velocity.v1.clone(),
            },
            kernels: KernelSet {
                k11: self.kernels.k22.clone(),
                k12: self.kernels.k21.clone(),
                k21: self.kernels.k12.clone(),
                k22: self.kernels.k11.clone(),
            },
            growth: GrowthLaw {
                g1: self.growth.g2.clone(),
                g2: self.growth.g1.clone(),
            },
            epsilon: self.epsilon,
        }
    }
}

/// Per-species interface fluxes `q = (1/alpha) (u/s) d_x s^alpha`.
///
/// The pressure gradient at a face is the two-point difference of cell
/// values of `s^alpha`. The fraction `u/s` is taken from the upwind cell of
/// that gradient, so `q_u + q_v` reproduces the total flux exactly while each
/// species stays nonnegative under the explicit update. Faces with a zero
/// pressure difference (in particular vacuum on both sides) carry no flux.
pub fn darcy_flux(state: &State, law: &PressureLaw) -> Result<(FaceField, FaceField)> {
    state.validate()?;
    law.validate()?;
    let grid = state.grid();
    let mut qu = FaceField::zeros(grid);
    let mut qv = FaceField::zeros(grid);
    let mut scratch = vec![0.0; 2 * grid.n_cells];
    darcy_faces(
        &grid,
        law,
        &state.u.values,
        &state.v.values,
        &mut scratch,
        &mut qu.values,
        &mut qv.values,
    );
    Ok((qu, qv))
}

/// Slice kernel behind [`darcy_flux`]; `scratch` needs `2 n` entries.
pub(crate) fn darcy_faces(
    grid: &GridSpec,
    law: &PressureLaw,
    u: &[f64],
    v: &[f64],
    scratch: &mut [f64],
    qu: &mut [f64],
    qv: &mut [f64],
) {
    let n = grid.n_cells;
    let (st, pw) = scratch.split_at_mut(n);
    for i in 0..n {
        st[i] = law.total(u[i], v[i]);
        pw[i] = law.power(st[i]);
    }
    let scale = 1.0 / (law.alpha * grid.dx());
    let face = |l: usize, r: usize| -> (f64, f64) {
        let g = (pw[r] - pw[l]) * scale;
        let up = if g > 0.0 {
            r
        } else if g < 0.0 {
            l
        } else {
            return (0.0, 0.0);
        };
        let s = st[up];
        if s > 0.0 {
            (u[up] / s * g, v[up] / s * g)
        } else {
            (0.0, 0.0)
        }
    };
    for k in 1..n {
        let (a, b) = face(k - 1, k);
        qu[k] = a;
        qv[k] = b;
    }
    match grid.boundary {
        Boundary::Periodic => {
            let (a, b) = face(n - 1, 0);
            qu[0] = a;
            qv[0] = b;
            qu[n] = a;
            qv[n] = b;
        }
        Boundary::NoFlux => {
            qu[0] = 0.0;
            qv[0] = 0.0;
            qu[n] = 0.0;
            qv[n] = 0.0;
        }
    }
}

/// A [`ModelSpec`] with every grid-dependent ingredient precomputed.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub model: ModelSpec,
    pub grid: GridSpec,
    v1_face: FaceField,
    v2_face: FaceField,
    v1_cell: Field,
    v2_cell: Field,
    v1_second: Field,
    v2_second: Field,
    k11: Option<SampledKernel>,
    k12: Option<SampledKernel>,
    k21: Option<SampledKernel>,
    k22: Option<SampledKernel>,
}

impl Discretization {
    pub fn new(model: &ModelSpec, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        model.validate()?;
        let sample = |k: &Option<Kernel>| -> Result<Option<SampledKernel>> {
            match k {
                None => Ok(None),
                Some(k) => {
                    let s = k.sample(&grid)?;
                    Ok(if s.is_zero() { None } else { Some(s) })
                }
            }
        };
        let d = Discretization {
            model: model.clone(),
            grid,
            v1_face: model.velocity.v1.face_derivative(grid),
            v2_face: model.velocity.v2.face_derivative(grid),
            v1_cell: model.velocity.v1.cell_derivative(grid),
            v2_cell: model.velocity.v2.cell_derivative(grid),
            v1_second: model.velocity.v1.cell_second_derivative(grid),
            v2_second: model.velocity.v2.cell_second_derivative(grid),
            k11: sample(&model.kernels.k11)?,
            k12: sample(&model.kernels.k12)?,
            k21: sample(&model.kernels.k21)?,
            k22: sample(&model.kernels.k22)?,
        };
        for (name, f) in [
            ("V1'", &d.v1_cell),
            ("V2'", &d.v2_cell),
            ("V1''", &d.v1_second),
            ("V2''", &d.v2_second),
        ] {
            if !f.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} is not bounded on the grid"
                )));
            }
        }
        Ok(d)
    }

    pub fn has_kernels(&self) -> bool {
        self.k11.is_some() || self.k12.is_some() || self.k21.is_some() || self.k22.is_some()
    }

    /// The convolution parts `(K11*u + K12*v, K21*u + K22*v)`.
    pub fn interaction_potentials(&self, u: &Field, v: &Field) -> Result<(Field, Field)> {
        let conv = |k: &Option<SampledKernel>, f: &Field| -> Result<Option<Field>> {
            k.as_ref().map(|k| convolve(f, k)).transpose()
        };
        let sum = |a: Option<Field>, b: Option<Field>| match (a, b) {
            (None, None) => Field::zeros(u.grid),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (Some(a), Some(b)) => a.zip_map(&b, |x, y| x + y),
        };
        let c1 = sum(conv(&self.k11, u)?, conv(&self.k12, v)?);
        let c2 = sum(conv(&self.k21, u)?, conv(&self.k22, v)?);
        Ok((c1, c2))
    }

    /// `d_x V^i` at the faces; no-flux boundary faces are 0.
    pub fn face_velocities(&self, u: &Field, v: &Field) -> Result<(FaceField, FaceField)> {
        let mut w1 = self.v1_face.clone();
        let mut w2 = self.v2_face.clone();
        if self.has_kernels() {
            let (c1, c2) = self.interaction_potentials(u, v)?;
            let g1 = face_gradient(&c1);
            let g2 = face_gradient(&c2);
            w1.values
                .iter_mut()
                .zip(&g1.values)
                .for_each(|(w, g)| *w += g);
            w2.values
                .iter_mut()
                .zip(&g2.values)
                .for_each(|(w, g)| *w += g);
        }
        Ok((w1, w2))
    }

    /// `d_x V^i` at the cell centres.
    pub fn cell_velocities(&self, u: &Field, v: &Field) -> Result<(Field, Field)> {
        if !self.has_kernels() {
            return Ok((self.v1_cell.clone(), self.v2_cell.clone()));
        }
        let (c1, c2) = self.interaction_potentials(u, v)?;
        let w1 = self.v1_cell.zip_map(&gradient(&c1), |a, b| a + b);
        let w2 = self.v2_cell.zip_map(&gradient(&c2), |a, b| a + b);
        Ok((w1, w2))
    }

    /// `d_x^2 V^i` at the cell centres.
    pub fn cell_second_derivatives(&self, u: &Field, v: &Field) -> Result<(Field, Field)> {
        if !self.has_kernels() {
            return Ok((self.v1_second.clone(), self.v2_second.clone()));
        }
        let (c1, c2) = self.interaction_potentials(u, v)?;
        let w1 = self
            .v1_second
            .zip_map(&gradient(&gradient(&c1)), |a, b| a + b);
        let w2 = self
            .v2_second
            .zip_map(&gradient(&gradient(&c2)), |a, b| a + b);
        Ok((w1, w2))
    }

    /// Full potentials `V^i` at the cell centres.
    pub fn cell_potentials(&self, u: &Field, v: &Field) -> Result<(Field, Field)> {
        let p1 = self.model.velocity.v1.cell_values(self.grid);
        let p2 = self.model.velocity.v2.cell_values(self.grid);
        if !self.has_kernels() {
            return Ok((p1, p2));
        }
        let (c1, c2) = self.interaction_potentials(u, v)?;
        Ok((p1.zip_map(&c1, |a, b| a + b), p2.zip_map(&c2, |a, b| a + b)))
    }
}

/// `(d_x V^1, d_x V^2)` at the cell centres for the given state.
pub fn velocity_gradients(state: &State, model: &ModelSpec) -> Result<(Field, Field)> {
    let d = Discretization::new(model, state.grid())?;
    let (w1, w2) = d.cell_velocities(&state.u, &state.v)?;
    if !w1.is_finite() || !w2.is_finite() {
        return Err(Error::InvalidInput(
            "velocity gradient is not bounded".into(),
        ));
    }
    Ok((w1, w2))
}

/// The equivalent unit-weight model for the unknowns `(c_u u, c_v v)`.
pub fn weighted_reduction(model: &ModelSpec) -> Result<ModelSpec> {
    let PressureLaw { alpha, c_u, c_v } = model.pressure;
    if !(c_u > 0.0 && c_v > 0.0 && c_u.is_finite() && c_v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "pressure weights must be positive, got ({c_u}, {c_v})"
        )));
    }
    if model.pressure.is_unit_weight() {
        return Ok(model.clone());
    }
    let scale = |k: &Option<Kernel>, c: f64| k.as_ref().map(|k| k.scaled(1.0 / c));
    Ok(ModelSpec {
        pressure: PressureLaw::new(alpha),
        velocity: model.velocity.clone(),
        kernels: KernelSet {
            k11: scale(&model.kernels.k11, c_u),
            k12: scale(&model.kernels.k12, c_v),
            k21: scale(&model.kernels.k21, c_u),
            k22: scale(&model.kernels.k22, c_v),
        },
        growth: model.growth.clone(),
        epsilon: model.epsilon,
    })
}

/// `(c_u u, c_v v)`: the unknowns of the reduced model.
pub fn to_reduced_state(state: &State, law: &PressureLaw) -> Result<State> {
    State::new(state.t, state.u.scaled(law.c_u), state.v.scaled(law.c_v))
}

/// Inverse of [`to_reduced_state`].
pub fn from_reduced_state(state: &State, law: &PressureLaw) -> Result<State> {
    State::new(
        state.t,
        state.u.scaled(1.0 / law.c_u),
        state.v.scaled(1.0 / law.c_v),
    )
}
