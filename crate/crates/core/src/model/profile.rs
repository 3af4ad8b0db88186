use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{face_gradient, gradient, FaceField, Field, GridSpec};
use crate::error::{Error, Result};

/// A piecewise-linear table `x -> value`, as loaded from a two-column CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulation {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl Tabulation {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "tabulation has {} abscissae but {} values",
                xs.len(),
                values.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidInput(
                "tabulation needs at least two rows".into(),
            ));
        }
        if xs.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "tabulation contains non-finite entries".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "tabulation abscissae must be strictly increasing".into(),
            ));
        }
        Ok(Tabulation { xs, values })
    }

    /// Reads a CSV file with a header row and two numeric columns `x, value`.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file =
            std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "tabulation CSV must have exactly two columns, header has {}",
                headers.len()
            )));
        }
        if headers.iter().any(|h| h.parse::<f64>().is_ok()) {
            return Err(Error::InvalidInput(
                "tabulation CSV requires a header row".into(),
            ));
        }
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::InvalidInput(format!(
                    "row {}: expected two columns",
                    row + 2
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("row {}: cannot parse '{s}'", row + 2))
                })
            };
            xs.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        Tabulation::new(xs, values)
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Linear interpolation; `outside` is returned beyond the table range.
    pub fn eval_or(&self, x: f64, outside: f64) -> f64 {
        let (lo, hi) = self.x_range();
        if x < lo || x > hi {
            return outside;
        }
        self.interp(x)
    }

    /// Linear interpolation, holding the end values beyond the table range.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range();
        self.interp(x.clamp(lo, hi))
    }

    fn interp(&self, x: f64) -> f64 {
        let j = self
            .xs
            .partition_point(|&t| t <= x)
            .clamp(1, self.xs.len() - 1);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let (y0, y1) = (self.values[j - 1], self.values[j]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// External potential `V(x)` whose derivative drives the advection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticProfile {
    Zero,
    /// `V(x) = slope * x`
    Linear {
        slope: f64,
    },
    /// `V(x) = coeff * x^2`
    Quadratic {
        coeff: f64,
    },
    Tabulated {
        table: Tabulation,
    },
}

impl AnalyticProfile {
    pub fn is_zero(&self) -> bool {
        match self {
            AnalyticProfile::Zero => true,
            AnalyticProfile::Linear { slope } => *slope == 0.0,
            AnalyticProfile::Quadratic { coeff } => *coeff == 0.0,
            AnalyticProfile::Tabulated { table } => table.values.iter().all(|&v| v == 0.0),
        }
    }

    pub fn scaled(&self, c: f64) -> AnalyticProfile {
        match self {
            AnalyticProfile::Zero => AnalyticProfile::Zero,
            AnalyticProfile::Linear { slope } => AnalyticProfile::Linear { slope: c * slope },
            AnalyticProfile::Quadratic { coeff } => AnalyticProfile::Quadratic { coeff: c * coeff },
            AnalyticProfile::Tabulated { table } => AnalyticProfile::Tabulated {
                table: Tabulation {
                    xs: table.xs.clone(),
                    values: table.values.iter().map(|v| c * v).collect(),
                },
            },
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            AnalyticProfile::Zero => 0.0,
            AnalyticProfile::Linear { slope } => slope * x,
            AnalyticProfile::Quadratic { coeff } => coeff * x * x,
            AnalyticProfile::Tabulated { table } => table.eval_clamped(x),
        }
    }

    pub fn cell_values(&self, grid: GridSpec) -> Field {
        Field::from_fn(grid, |x| self.value(x))
    }

    /// `V'` at the cell centres: closed form where available, otherwise the
    /// domain gradient of the sampled profile.
    pub fn cell_derivative(&self, grid: GridSpec) -> Field {
        match self {
            AnalyticProfile::Zero => Field::zeros(grid),
            AnalyticProfile::Linear { slope } => Field::constant(grid, *slope),
            AnalyticProfile::Quadratic { coeff } => Field::from_fn(grid, |x| 2.0 * coeff * x),
            AnalyticProfile::Tabulated { .. } => gradient(&self.cell_values(grid)),
        }
    }

    /// `V'` at the faces. Boundary faces of a no-flux grid are set to 0 since
    /// nothing crosses them.
    pub fn face_derivative(&self, grid: GridSpec) -> FaceField {
        let n = grid.n_cells;
        let mut out = FaceField::zeros(grid);
        match self {
            AnalyticProfile::Zero => {}
            AnalyticProfile::Linear { slope } => out.values.iter_mut().for_each(|w| *w = *slope),
            AnalyticProfile::Quadratic { coeff } => {
                for (k, w) in out.values.iter_mut().enumerate() {
                    *w = 2.0 * coeff * grid.face_position(k);
                }
            }
            AnalyticProfile::Tabulated { .. } => return face_gradient(&self.cell_values(grid)),
        }
        if grid.boundary == crate::domain::Boundary::Periodic {
            out.values[n] = out.values[0];
        } else {
            out.values[0] = 0.0;
            out.values[n] = 0.0;
        }
        out
    }

    pub fn cell_second_derivative(&self, grid: GridSpec) -> Field {
        match self {
            AnalyticProfile::Zero | AnalyticProfile::Linear { .. } => Field::zeros(grid),
            AnalyticProfile::Quadratic { coeff } => Field::constant(grid, 2.0 * coeff),
            AnalyticProfile::Tabulated { .. } => gradient(&gradient(&self.cell_values(grid))),
        }
    }
}

/// Scalar growth rate `G(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GrowthFn {
    Zero,
    /// `G(s) = rate * (1 - s / cap)`
    Logistic {
        rate: f64,
        cap: f64,
    },
    /// `G` tabulated against `s`, held constant beyond the table.
    Tabulated {
        table: Tabulation,
    },
}

impl GrowthFn {
    pub fn is_zero(&self) -> bool {
        match self {
            GrowthFn::Zero => true,
            GrowthFn::Logistic { rate, .. } => *rate == 0.0,
            GrowthFn::Tabulated { table } => table.values.iter().all(|&v| v == 0.0),
        }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            GrowthFn::Zero => 0.0,
            GrowthFn::Logistic { rate, cap } => rate * (1.0 - s / cap),
            GrowthFn::Tabulated { table } => table.eval_clamped(s),
        }
    }

    /// `sup |G|` over `[0, s_max]`. Both closed forms are monotone in `s`, so
    /// the endpoints suffice for the logistic law.
    pub fn sup_abs(&self, s_max: f64) -> f64 {
        match self {
            GrowthFn::Zero => 0.0,
            GrowthFn::Logistic { .. } => self.eval(0.0).abs().max(self.eval(s_max).abs()),
            GrowthFn::Tabulated { table } => {
                let inside = table
                    .xs
                    .iter()
                    .zip(&table.values)
                    .filter(|(&x, _)| x <= s_max)
                    .fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
                inside.max(self.eval(0.0).abs()).max(self.eval(s_max).abs())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GrowthFn::Logistic { rate, cap } => {
                if !rate.is_finite() || !cap.is_finite() || *cap <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "logistic growth needs finite rate and positive cap, got rate={rate}, cap={cap}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Boundary;

    #[test]
    fn tabulation_interpolates_and_extrapolates() {
        let t = Tabulation::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(t.eval_or(0.5, -1.0), 1.0);
        assert_eq!(t.eval_or(2.0, -1.0), 1.0);
        assert_eq!(t.eval_or(3.0, -1.0), 0.0);
        assert_eq!(t.eval_or(3.5, -1.0), -1.0);
        assert_eq!(t.eval_clamped(-4.0), 0.0);
        assert_eq!(t.eval_clamped(1.0), 2.0);
    }

    #[test]
    fn tabulation_rejects_unsorted_and_short_tables() {
        assert!(Tabulation::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Tabulation::new(vec![0.0], vec![1.0]).is_err());
        assert!(Tabulation::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(Tabulation::new(vec![0.0, 1.0], vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn tabulation_csv_requires_header() {
        let ok = "x,value\n-1,0\n0,1\n1,0\n";
        let t = Tabulation::from_csv_reader(ok.as_bytes()).unwrap();
        assert_eq!(t.xs, vec![-1.0, 0.0, 1.0]);
        let headerless = "-1,0\n0,1\n1,0\n";
        assert!(Tabulation::from_csv_reader(headerless.as_bytes()).is_err());
        let three = "x,value,z\n0,1,2\n1,2,3\n";
        assert!(Tabulation::from_csv_reader(three.as_bytes()).is_err());
        let junk = "x,value\n0,abc\n1,2\n";
        assert!(Tabulation::from_csv_reader(junk.as_bytes()).is_err());
    }

    #[test]
    fn profile_derivatives() {
        let g = GridSpec::new(-1.0, 1.0, 20, Boundary::NoFlux).unwrap();
        let lin = AnalyticProfile::Linear { slope: -1.0 };
        assert!(lin.cell_derivative(g).values.iter().all(|&w| w == -1.0));
        let fd = lin.face_derivative(g);
        assert_eq!(fd.values[0], 0.0);
        assert_eq!(fd.values[5], -1.0);
        let quad = AnalyticProfile::Quadratic { coeff: 0.5 };
        let d = quad.cell_derivative(g);
        assert!((d.values[3] - g.cell_center(3)).abs() < 1e-15);
        assert!(quad
            .cell_second_derivative(g)
            .values
            .iter()
            .all(|&w| w == 1.0));
        // tabulated x^2/2 reproduces the quadratic derivative away from the edges
        let xs: Vec<f64> = (0..=400).map(|i| -2.0 + 0.01 * i as f64).collect();
        let vs = xs.iter().map(|x| 0.5 * x * x).collect();
        let tab = AnalyticProfile::Tabulated {
            table: Tabulation::new(xs, vs).unwrap(),
        };
        let dt = tab.cell_derivative(g);
        for i in 1..19 {
            assert!((dt.values[i] - d.values[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn periodic_faces_match() {
        let g = GridSpec::new(0.0, 1.0, 8, Boundary::Periodic).unwrap();
        let fd = AnalyticProfile::Linear { slope: 2.0 }.face_derivative(g);
        assert_eq!(fd.values[0], 2.0);
        assert_eq!(fd.values[8], 2.0);
    }

    #[test]
    fn growth_laws() {
        let g = GrowthFn::Logistic {
            rate: 2.0,
            cap: 4.0,
        };
        assert_eq!(g.eval(0.0), 2.0);
        assert_eq!(g.eval(4.0), 0.0);
        assert_eq!(g.sup_abs(10.0), 3.0);
        assert!(GrowthFn::Logistic {
            rate: 1.0,
            cap: 0.0
        }
        .validate()
        .is_err());
        assert_eq!(GrowthFn::Zero.sup_abs(5.0), 0.0);
    }
}
