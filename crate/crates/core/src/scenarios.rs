//! Named model and initial-data presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Boundary, Field, GridSpec, State};
use crate::error::{Error, Result};
use crate::model::{
    AnalyticProfile, GrowthFn, GrowthLaw, KernelSet, ModelSpec, PressureLaw, VelocitySpec,
};
use crate::oracle::ExactSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelPreset {
    /// `alpha = 2`, `V1 = -x`, `V2 = x`: species pushed in opposite directions.
    Demo,
    /// `alpha = 1` without advection; the total density solves a heat equation.
    Heat,
    /// `alpha = 2` without advection.
    PorousMedium,
    /// `alpha = 2`, `V1 = V2 = x^2 / 2`.
    Confined,
    /// Demo system with logistic growth in both species.
    Growth,
}

impl ModelPreset {
    pub const ALL: [ModelPreset; 5] = [
        ModelPreset::Demo,
        ModelPreset::Heat,
        ModelPreset::PorousMedium,
        ModelPreset::Confined,
        ModelPreset::Growth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelPreset::Demo => "demo",
            ModelPreset::Heat => "heat",
            ModelPreset::PorousMedium => "porous-medium",
            ModelPreset::Confined => "confined",
            ModelPreset::Growth => "growth",
        }
    }

    pub fn from_name(name: &str) -> Option<ModelPreset> {
        ModelPreset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn model(self, epsilon: f64) -> ModelSpec {
        let base = |alpha: f64, v1: AnalyticProfile, v2: AnalyticProfile| ModelSpec {
            pressure: PressureLaw::new(alpha),
            velocity: VelocitySpec { v1, v2 },
            kernels: KernelSet::default(),
            growth: GrowthLaw::default(),
            epsilon,
        };
        match self {
            ModelPreset::Demo => demo_model(epsilon),
            ModelPreset::Heat => base(1.0, AnalyticProfile::Zero, AnalyticProfile::Zero),
            ModelPreset::PorousMedium => base(2.0, AnalyticProfile::Zero, AnalyticProfile::Zero),
            ModelPreset::Confined => base(
                2.0,
                AnalyticProfile::Quadratic { coeff: 0.5 },
                AnalyticProfile::Quadratic { coeff: 0.5 },
            ),
            ModelPreset::Growth => ModelSpec {
                growth: GrowthLaw {
                    g1: GrowthFn::Logistic {
                        rate: 1.0,
                        cap: 2.0,
                    },
                    g2: GrowthFn::Logistic {
                        rate: 0.5,
                        cap: 2.0,
                    },
                },
                ..demo_model(epsilon)
            },
        }
    }
}

pub fn demo_model(epsilon: f64) -> ModelSpec {
    ModelSpec {
        pressure: PressureLaw::new(2.0),
        velocity: VelocitySpec {
            v1: AnalyticProfile::Linear { slope: -1.0 },
            v2: AnalyticProfile::Linear { slope: 1.0 },
        },
        kernels: KernelSet::default(),
        growth: GrowthLaw::default(),
        epsilon,
    }
}

/// Periodic `[-4, 4]` grid used by the demo studies.
pub fn demo_grid(n_cells: usize) -> Result<GridSpec> {
    GridSpec::new(-4.0, 4.0, n_cells, Boundary::Periodic)
}

fn default_fraction() -> f64 {
    1.0
}

/// Initial data. Single-profile presets put `fraction_u` of the profile into
/// `u` and the rest into `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    Zero,
    Constant {
        u: f64,
        v: f64,
    },
    Box {
        center: f64,
        half_width: f64,
        height: f64,
        #[serde(default = "default_fraction")]
        fraction_u: f64,
    },
    Gaussian {
        center: f64,
        width: f64,
        mass: f64,
        #[serde(default = "default_fraction")]
        fraction_u: f64,
    },
    Barenblatt {
        alpha: f64,
        mass: f64,
        t: f64,
        #[serde(default = "default_fraction")]
        fraction_u: f64,
    },
    /// Two Gaussian bumps at `-separation/2` and `+separation/2`; `u` takes
    /// `mix` of the left bump and `1 - mix` of the right one, `v` the reverse.
    TwoBumpMixed {
        separation: f64,
        width: f64,
        height: f64,
        mix: f64,
    },
}

impl InitialCondition {
    /// The demo initial datum.
    pub fn two_bump_mixed() -> Self {
        InitialCondition::TwoBumpMixed {
            separation: 2.0,
            width: 0.5,
            height: 1.0,
            mix: 0.7,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialCondition::Zero => "zero",
            InitialCondition::Constant { .. } => "constant",
            InitialCondition::Box { .. } => "box",
            InitialCondition::Gaussian { .. } => "gaussian",
            InitialCondition::Barenblatt { .. } => "barenblatt",
            InitialCondition::TwoBumpMixed { .. } => "two-bump-mixed",
        }
    }

    /// Start time of the datum (nonzero only for the Barenblatt preset).
    pub fn start_time(&self) -> f64 {
        match self {
            InitialCondition::Barenblatt { t, .. } => *t,
            _ => 0.0,
        }
    }

    pub fn build(&self, grid: &GridSpec) -> Result<State> {
        let split = |f: Field, frac: f64| -> Result<State> {
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::InvalidInput(format!(
                    "fraction_u must lie in [0, 1], got {frac}"
                )));
            }
            let u = if frac == 1.0 {
                f.clone()
            } else {
                f.scaled(frac)
            };
            let v = if frac == 1.0 {
                Field::zeros(*grid)
            } else {
                f.scaled(1.0 - frac)
            };
            State::new(self.start_time(), u, v)
        };
        match *self {
            InitialCondition::Zero => Ok(State::zeros(*grid)),
            InitialCondition::Constant { u, v } => {
                State::new(0.0, Field::constant(*grid, u), Field::constant(*grid, v))
            }
            InitialCondition::Box {
                center,
                half_width,
                height,
                fraction_u,
            } => {
                if !(half_width > 0.0 && height >= 0.0) {
                    return Err(Error::InvalidInput(
                        "box needs half_width > 0 and height >= 0".into(),
                    ));
                }
                let f = Field::from_fn(*grid, |x| {
                    if (x - center).abs() < half_width {
                        height
                    } else {
                        0.0
                    }
                });
                split(f, fraction_u)
            }
            InitialCondition::Gaussian {
                center,
                width,
                mass,
                fraction_u,
            } => {
                if !(width > 0.0 && mass >= 0.0) {
                    return Err(Error::InvalidInput(
                        "gaussian needs width > 0 and mass >= 0".into(),
                    ));
                }
                let a = mass / ((2.0 * std::f64::consts::PI).sqrt() * width);
                let f = Field::from_fn(*grid, |x| {
                    a * (-(x - center).powi(2) / (2.0 * width * width)).exp()
                });
                split(f, fraction_u)
            }
            InitialCondition::Barenblatt {
                alpha,
                mass,
                t,
                fraction_u,
            } => {
                let exact = ExactSolution::Barenblatt {
                    alpha,
                    mass,
                    t_offset: 0.0,
                };
                split(exact.evaluate(t, grid)?, fraction_u)
            }
            InitialCondition::TwoBumpMixed {
                separation,
                width,
                height,
                mix,
            } => {
                if !(width > 0.0 && height >= 0.0 && (0.0..=1.0).contains(&mix)) {
                    return Err(Error::InvalidInput(
                        "two-bump-mixed needs width > 0, height >= 0, mix in [0,1]".into(),
                    ));
                }
                let bump = |c: f64| {
                    Field::from_fn(*grid, |x| {
                        height * (-(x - c).powi(2) / (2.0 * width * width)).exp()
                    })
                };
                let b1 = bump(-0.5 * separation);
                let b2 = bump(0.5 * separation);
                let u = b1.zip_map(&b2, |a, b| mix * a + (1.0 - mix) * b);
                let v = b1.zip_map(&b2, |a, b| (1.0 - mix) * a + mix * b);
                State::new(0.0, u, v)
            }
        }
    }
}

/// Reads initial data from CSV with header `x,u,v`, one row per cell.
pub fn state_from_csv(path: impl AsRef<Path>, grid: &GridSpec) -> Result<State> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if headers != ["x", "u", "v"] {
        return Err(Error::InvalidInput(format!(
            "initial-data CSV must have header x,u,v, found {}",
            headers.join(",")
        )));
    }
    let mut u = Vec::with_capacity(grid.n_cells);
    let mut v = Vec::with_capacity(grid.n_cells);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| {
            rec[j].parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("row {}: cannot parse '{}'", row + 2, &rec[j]))
            })
        };
        let x = parse(0)?;
        if row < grid.n_cells && (x - grid.cell_center(row)).abs() > 1e-9 * grid.len().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "row {} has x={x} but cell centre is {}",
                row + 2,
                grid.cell_center(row)
            )));
        }
        u.push(parse(1)?);
        v.push(parse(2)?);
    }
    if u.len() != grid.n_cells {
        return Err(Error::GridMismatch(format!(
            "CSV has {} rows for {} cells",
            u.len(),
            grid.n_cells
        )));
    }
    State::new(0.0, Field::new(*grid, u)?, Field::new(*grid, v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::integrate;
    use std::io::Write;

    #[test]
    fn demo_preset_coefficients() {
        let m = ModelPreset::Demo.model(0.01);
        assert_eq!(m.pressure.alpha, 2.0);
        assert_eq!(m.velocity.v1, AnalyticProfile::Linear { slope: -1.0 });
        assert_eq!(m.velocity.v2, AnalyticProfile::Linear { slope: 1.0 });
        assert!(m.kernels.is_empty());
        for p in ModelPreset::ALL {
            assert_eq!(ModelPreset::from_name(p.name()), Some(p));
            p.model(0.0).validate().unwrap();
        }
        assert!(!ModelPreset::Growth.model(0.0).growth.is_zero());
    }

    #[test]
    fn initial_presets_build() {
        let g = demo_grid(256).unwrap();
        let s = InitialCondition::two_bump_mixed().build(&g).unwrap();
        assert!((integrate(&s.u) - integrate(&s.v)).abs() < 1e-12);
        let gauss = InitialCondition::Gaussian {
            center: 0.0,
            width: 0.3,
            mass: 2.0,
            fraction_u: 0.25,
        };
        let s = gauss.build(&g).unwrap();
        assert!((integrate(&s.u) - 0.5).abs() < 1e-10);
        assert!((integrate(&s.v) - 1.5).abs() < 1e-10);
        let b = InitialCondition::Barenblatt {
            alpha: 2.0,
            mass: 1.0,
            t: 0.5,
            fraction_u: 1.0,
        };
        let s = b.build(&g).unwrap();
        assert_eq!(s.t, 0.5);
        assert!(s.v.values.iter().all(|&x| x == 0.0));
        let bad = InitialCondition::Box {
            center: 0.0,
            half_width: 1.0,
            height: 1.0,
            fraction_u: 1.5,
        };
        assert!(bad.build(&g).is_err());
    }

    #[test]
    fn csv_initial_data_round_trip() {
        let g = GridSpec::new(0.0, 1.0, 4, Boundary::NoFlux).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,u,v").unwrap();
        for i in 0..4 {
            writeln!(f, "{},{},{}", g.cell_center(i), i, 0.5).unwrap();
        }
        let s = state_from_csv(f.path(), &g).unwrap();
        assert_eq!(s.u.values, vec![0.0, 1.0, 2.0, 3.0]);
        let mut short = tempfile::NamedTempFile::new().unwrap();
        writeln!(short, "x,u,v\n0.125,1,1").unwrap();
        assert!(state_from_csv(short.path(), &g).is_err());
    }
}
