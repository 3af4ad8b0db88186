use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::profile::Tabulation;
use crate::domain::{Boundary, Field, GridSpec};
use crate::error::{Error, Result};

/// Grid size from which [`convolve`] switches to the FFT path.
pub const FFT_THRESHOLD: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelShape {
    /// Unit-mass Gaussian truncated at `cutoff` (default `4 * sigma`).
    Gaussian { sigma: f64, cutoff: Option<f64> },
    /// Tabulated against `x`, zero outside the table.
    Tabulated { table: Tabulation },
}

/// An even interaction kernel `K(x) = amplitude * shape(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub amplitude: f64,
    pub shape: KernelShape,
}

impl Kernel {
    pub fn gaussian(amplitude: f64, sigma: f64) -> Self {
        Kernel {
            amplitude,
            shape: KernelShape::Gaussian {
                sigma,
                cutoff: None,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidInput(
                "kernel amplitude must be finite".into(),
            ));
        }
        match &self.shape {
            KernelShape::Gaussian { sigma, cutoff } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "kernel sigma must be positive, got {sigma}"
                    )));
                }
                if let Some(c) = cutoff {
                    if !(c.is_finite() && *c >= 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "kernel cutoff must be nonnegative, got {c}"
                        )));
                    }
                }
            }
            KernelShape::Tabulated { .. } => {}
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Kernel {
        Kernel {
            amplitude: self.amplitude * c,
            shape: self.shape.clone(),
        }
    }

    pub fn support_radius(&self) -> f64 {
        match &self.shape {
            KernelShape::Gaussian { sigma, cutoff } => cutoff.unwrap_or(4.0 * sigma),
            KernelShape::Tabulated { table } => {
                let (lo, hi) = table.x_range();
                lo.abs().max(hi.abs())
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let shape = match &self.shape {
            KernelShape::Gaussian { sigma, cutoff } => {
                if x.abs() > cutoff.unwrap_or(4.0 * sigma) {
                    0.0
                } else {
                    (-x * x / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
                }
            }
            KernelShape::Tabulated { table } => table.eval_or(x, 0.0),
        };
        self.amplitude * shape
    }

    /// Samples `K(m dx)` for `|m| <= h`, `h = floor(radius / dx)`.
    pub fn sample(&self, grid: &GridSpec) -> Result<SampledKernel> {
        self.validate()?;
        let dx = grid.dx();
        let h = (self.support_radius() / dx * (1.0 + 1e-12)).floor() as usize;
        if 2 * h + 1 > grid.n_cells {
            return Err(Error::InvalidInput(format!(
                "kernel stencil of {} cells is wider than the {}-cell domain",
                2 * h + 1,
                grid.n_cells
            )));
        }
        let values = (0..=2 * h)
            .map(|j| self.eval((j as f64 - h as f64) * dx))
            .collect();
        SampledKernel::new(values, dx)
    }
}

/// Kernel values on an odd stencil `values[h + m] = K(m dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel {
    pub values: Vec<f64>,
    pub dx: f64,
}

impl SampledKernel {
    pub fn new(values: Vec<f64>, dx: f64) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(
                "sampled kernel needs an odd-length stencil".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "sampled kernel has non-finite entries".into(),
            ));
        }
        if !(dx > 0.0) {
            return Err(Error::InvalidInput(
                "sampled kernel spacing must be positive".into(),
            ));
        }
        Ok(SampledKernel { values, dx })
    }

    pub fn half_width(&self) -> usize {
        self.values.len() / 2
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

fn check_compatible(density: &Field, kernel: &SampledKernel) -> Result<()> {
    let grid = &density.grid;
    let dx = grid.dx();
    if ((kernel.dx - dx) / dx).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "kernel sampled at dx={} applied on grid with dx={dx}",
            kernel.dx
        )));
    }
    if kernel.values.len() > grid.n_cells {
        return Err(Error::InvalidInput(format!(
            "kernel stencil of {} cells is wider than the {}-cell domain",
            kernel.values.len(),
            grid.n_cells
        )));
    }
    Ok(())
}

/// `out_i = dx * sum_j K(x_i - x_j) f_j`, wrapping on periodic grids and
/// zero-padding on no-flux grids.
pub fn convolve(density: &Field, kernel: &SampledKernel) -> Result<Field> {
    check_compatible(density, kernel)?;
    if kernel.is_zero() {
        return Ok(Field::zeros(density.grid));
    }
    if density.grid.n_cells >= FFT_THRESHOLD {
        convolve_fft(density, kernel)
    } else {
        convolve_direct(density, kernel)
    }
}

pub fn convolve_direct(density: &Field, kernel: &SampledKernel) -> Result<Field> {
    check_compatible(density, kernel)?;
    let grid = density.grid;
    let n = grid.n_cells as isize;
    let h = kernel.half_width() as isize;
    let dx = grid.dx();
    let f = &density.values;
    let mut out = vec![0.0; n as usize];
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let mut acc = 0.0;
        for m in -h..=h {
            let mut j = i - m;
            match grid.boundary {
                Boundary::Periodic => j = j.rem_euclid(n),
                Boundary::NoFlux => {
                    if j < 0 || j >= n {
                        continue;
                    }
                }
            }
            acc += kernel.values[(m + h) as usize] * f[j as usize];
        }
        *o = dx * acc;
    }
    Field::new(grid, out)
}

pub fn convolve_fft(density: &Field, kernel: &SampledKernel) -> Result<Field> {
    check_compatible(density, kernel)?;
    let grid = density.grid;
    let n = grid.n_cells;
    let h = kernel.half_width();
    let dx = grid.dx();
    let len = match grid.boundary {
        Boundary::Periodic => n,
        Boundary::NoFlux => (n + 2 * h).next_power_of_two(),
    };
    let mut a: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); len];
    let mut b = a.clone();
    for (i, &v) in density.values.iter().enumerate() {
        a[i].re = v;
    }
    match grid.boundary {
        Boundary::Periodic => {
            // kernel index m lives at position m mod n
            for (j, &k) in kernel.values.iter().enumerate() {
                let m = j as isize - h as isize;
                b[m.rem_euclid(n as isize) as usize].re += k;
            }
        }
        Boundary::NoFlux => {
            for (j, &k) in kernel.values.iter().enumerate() {
                b[j].re = k;
            }
        }
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    inv.process(&mut a);
    let scale = dx / len as f64;
    let offset = match grid.boundary {
        Boundary::Periodic => 0,
        Boundary::NoFlux => h,
    };
    let out = (0..n).map(|i| a[i + offset].re * scale).collect();
    Field::new(grid, out)
}
