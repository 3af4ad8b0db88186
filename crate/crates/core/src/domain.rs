//! Uniform 1D mesh, cell-average fields and the discrete calculus shared by
//! every other module.
//!
//! Cells are indexed `0..n`. Cell `i` has centre `x_min + (i + 1/2) dx`, left
//! face `i` and right face `i + 1`, so a [`FaceField`] carries `n + 1` values.
//! On a periodic grid face `0` and face `n` are the same face and always hold
//! the same value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    NoFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub boundary: Boundary,
}

impl GridSpec {
    pub const MIN_CELLS: usize = 4;

    pub fn new(x_min: f64, x_max: f64, n_cells: usize, boundary: Boundary) -> Result<Self> {
        let grid = GridSpec {
            x_min,
            x_max,
            n_cells,
            boundary,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite()) {
            return Err(Error::InvalidInput("grid bounds must be finite".into()));
        }
        if self.x_max <= self.x_min {
            return Err(Error::InvalidInput(format!(
                "x_max ({}) must exceed x_min ({})",
                self.x_max, self.x_min
            )));
        }
        if self.n_cells < Self::MIN_CELLS {
            return Err(Error::InvalidInput(format!(
                "n_cells must be at least {}, got {}",
                Self::MIN_CELLS,
                self.n_cells
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    #[inline]
    pub fn len(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn cell_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    #[inline]
    pub fn face_position(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.cell_center(i)).collect()
    }

    /// Same grid with `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Self {
        GridSpec {
            n_cells: self.n_cells * factor,
            ..*self
        }
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Cell-average values of a scalar quantity on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells {
            return Err(Error::InvalidInput(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.n_cells
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Field::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Field {
            grid,
            values: vec![c; grid.n_cells],
        }
    }

    /// Midpoint samples of `f`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_cells).map(|i| f(grid.cell_center(i))).collect();
        Field { grid, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination; both fields must live on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert!(self.grid.same_as(&other.grid));
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Ratio of the larger edge-cell magnitude to the peak magnitude; 0 for a
    /// zero field.
    pub fn boundary_leakage(&self) -> f64 {
        let peak = self.max_abs();
        if peak == 0.0 {
            return 0.0;
        }
        let n = self.values.len();
        self.values[0].abs().max(self.values[n - 1].abs()) / peak
    }
}

/// Values attached to the `n + 1` cell faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: GridSpec) -> Self {
        FaceField {
            grid,
            values: vec![0.0; grid.n_cells + 1],
        }
    }

    /// Discrete divergence `(F[i+1] - F[i]) / dx` as a cell field.
    pub fn divergence(&self) -> Field {
        let dx = self.grid.dx();
        let values = self.values.windows(2).map(|w| (w[1] - w[0]) / dx).collect();
        Field {
            grid: self.grid,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Density pair at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
}

impl State {
    pub fn new(t: f64, u: Field, v: Field) -> Result<Self> {
        if !u.grid.same_as(&v.grid) {
            return Err(Error::GridMismatch(
                "u and v live on different grids".into(),
            ));
        }
        let state = State { t, u, v };
        state.validate()?;
        Ok(state)
    }

    pub fn zeros(grid: GridSpec) -> Self {
        State {
            t: 0.0,
            u: Field::zeros(grid),
            v: Field::zeros(grid),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.u.grid
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("u", &self.u), ("v", &self.v)] {
            if let Some((i, x)) = f
                .values
                .iter()
                .enumerate()
                .find(|(_, x)| !x.is_finite() || **x < 0.0)
            {
                return Err(Error::InvalidInput(format!(
                    "{name}[{i}] = {x} is not a finite nonnegative density"
                )));
            }
        }
        Ok(())
    }

    /// Total density `s = u + v`.
    pub fn total(&self) -> Field {
        self.u.zip_map(&self.v, |a, b| a + b)
    }

    /// Weighted total `c_u u + c_v v`.
    pub fn weighted_total(&self, c_u: f64, c_v: f64) -> Field {
        self.u.zip_map(&self.v, |a, b| c_u * a + c_v * b)
    }

    /// The state with the two species exchanged.
    pub fn swapped(&self) -> State {
        State {
            t: self.t,
            u: self.v.clone(),
            v: self.u.clone(),
        }
    }
}

/// `dx * sum(f)`, accumulated left to right.
pub fn integrate(f: &Field) -> f64 {
    f.grid.dx() * f.values.iter().sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentWeight {
    AbsX,
    AbsXHalf,
}

impl MomentWeight {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            MomentWeight::AbsX => x.abs(),
            MomentWeight::AbsXHalf => x.abs().sqrt(),
        }
    }
}

pub fn moment(f: &Field, weight: MomentWeight) -> f64 {
    let g = f.grid;
    let sum: f64 = f
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v * weight.eval(g.cell_center(i)))
        .sum();
    g.dx() * sum
}

/// Discrete `L^p` norm; pass `f64::INFINITY` for the max norm.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidInput(format!(
            "L^p norm requires p >= 1, got {p}"
        )));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let dx = f.grid.dx();
    if p == 1.0 {
        return Ok(dx * f.values.iter().map(|v| v.abs()).sum::<f64>());
    }
    if p == 2.0 {
        return Ok((dx * f.values.iter().map(|v| v * v).sum::<f64>()).sqrt());
    }
    Ok((dx * f.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p))
}

/// Centred difference in the interior. Periodic grids wrap around; no-flux
/// grids use one-sided differences in the two edge cells.
pub fn gradient(f: &Field) -> Field {
    let g = f.grid;
    let n = g.n_cells;
    let dx = g.dx();
    let v = &f.values;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
    }
    match g.boundary {
        Boundary::Periodic => {
            out[0] = (v[1] - v[n - 1]) / (2.0 * dx);
            out[n - 1] = (v[0] - v[n - 2]) / (2.0 * dx);
        }
        Boundary::NoFlux => {
            out[0] = (v[1] - v[0]) / dx;
            out[n - 1] = (v[n - 1] - v[n - 2]) / dx;
        }
    }
    Field {
        grid: g,
        values: out,
    }
}

/// Two-point differences `(f[i] - f[i-1]) / dx` at the faces. Boundary faces
/// of a no-flux grid get 0; periodic grids wrap.
pub fn face_gradient(f: &Field) -> FaceField {
    let g = f.grid;
    let n = g.n_cells;
    let dx = g.dx();
    let v = &f.values;
    let mut out = vec![0.0; n + 1];
    for k in 1..n {
        out[k] = (v[k] - v[k - 1]) / dx;
    }
    if g.boundary == Boundary::Periodic {
        out[0] = (v[0] - v[n - 1]) / dx;
        out[n] = out[0];
    }
    FaceField {
        grid: g,
        values: out,
    }
}
