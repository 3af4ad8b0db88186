//! Run configuration: JSON ingestion, schema and semantic validation,
//! resolution of tabulated inputs and the canonical config hash.

use std::path::{Path, PathBuf};

use crossdiff::continuation::SweepSpec;
use crossdiff::diagnostics::Law;
use crossdiff::domain::{GridSpec, State};
use crossdiff::model::{GrowthLaw, KernelSet, ModelSpec, PressureLaw, Tabulation, VelocitySpec};
use crossdiff::oracle::ExactSolution;
use crossdiff::scenarios::{state_from_csv, InitialCondition, ModelPreset};
use crossdiff::solver::SolverParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsvLayout {
    /// One file, one row per `(t, x)`.
    #[default]
    Long,
    /// One file per snapshot.
    PerSnapshot,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityConfig {
    pub v1: Option<crossdiff::model::AnalyticProfile>,
    pub v2: Option<crossdiff::model::AnalyticProfile>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConfig {
    pub g1: Option<crossdiff::model::GrowthFn>,
    pub g2: Option<crossdiff::model::GrowthFn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Option<ModelPreset>,
    #[serde(default)]
    pub epsilon: f64,
    pub pressure: Option<PressureLaw>,
    pub velocity: Option<VelocityConfig>,
    pub kernels: Option<KernelSet>,
    pub growth: Option<GrowthConfig>,
}

impl ModelConfig {
    /// The preset (if any) with every explicitly given section laid over it.
    pub fn build(&self) -> ModelSpec {
        let mut model = match self.preset {
            Some(p) => p.model(self.epsilon),
            None => ModelSpec::pure_diffusion(self.pressure.map_or(1.0, |p| p.alpha), self.epsilon),
        };
        if let Some(p) = self.pressure {
            model.pressure = p;
        }
        if let Some(v) = &self.velocity {
            let VelocitySpec { v1, v2 } = model.velocity;
            model.velocity = VelocitySpec {
                v1: v.v1.clone().unwrap_or(v1),
                v2: v.v2.clone().unwrap_or(v2),
            };
        }
        if let Some(k) = &self.kernels {
            model.kernels = k.clone();
        }
        if let Some(g) = &self.growth {
            let GrowthLaw { g1, g2 } = model.growth;
            model.growth = GrowthLaw {
                g1: g.g1.clone().unwrap_or(g1),
                g2: g.g2.clone().unwrap_or(g2),
            };
        }
        model
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CsvInitial {
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialConfig {
    Csv(CsvInitial),
    Preset(InitialCondition),
}

impl InitialConfig {
    pub fn start_time(&self) -> f64 {
        match self {
            InitialConfig::Csv(_) => 0.0,
            InitialConfig::Preset(ic) => ic.start_time(),
        }
    }

    pub fn build(&self, grid: &GridSpec) -> crossdiff::Result<State> {
        match self {
            InitialConfig::Csv(CsvInitial::Csv { path }) => state_from_csv(path, grid),
            InitialConfig::Preset(ic) => ic.build(grid),
        }
    }
}

fn default_cfl() -> f64 {
    0.4
}

fn default_one() -> usize {
    1
}

fn default_max_steps() -> usize {
    50_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Permits `cfl > 1`, e.g. to provoke a stability failure on purpose.
    #[serde(default)]
    pub allow_unstable_cfl: bool,
    #[serde(default = "default_one")]
    pub output_every: usize,
    pub snapshot_interval: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub positivity_floor: f64,
}

impl SolverConfig {
    pub fn params(&self) -> SolverParams {
        SolverParams {
            cfl: self.cfl,
            t_end: self.t_end,
            output_every: self.output_every,
            max_steps: self.max_steps,
            positivity_floor: self.positivity_floor,
            snapshot_interval: self.snapshot_interval,
        }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Svg]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default)]
    pub csv_layout: CsvLayout,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            formats: default_formats(),
            csv_layout: CsvLayout::Long,
        }
    }
}

fn default_snapshots() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps_ladder: Vec<f64>,
    pub grid_ladder: Option<Vec<usize>>,
    pub coarse_cell: Option<(f64, f64)>,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
}

fn default_laws() -> Vec<String> {
    [
        "entropy",
        "ratio-squared",
        "ratio-theta",
        "energy-identity",
        "weak-form-u",
        "weak-form-v",
    ]
    .map(String::from)
    .to_vec()
}

fn default_theta() -> f64 {
    2.0
}

fn default_slack() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default = "default_laws")]
    pub laws: Vec<String>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Entropy residuals above `entropy_slack * dt` count as violations.
    #[serde(default = "default_slack")]
    pub entropy_slack: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            laws: default_laws(),
            theta: default_theta(),
            entropy_slack: default_slack(),
        }
    }
}

impl DiagnoseConfig {
    /// `(law, include viscous terms)` for every configured law.
    pub fn laws(&self) -> Vec<(Law, bool)> {
        self.laws
            .iter()
            .map(|name| match name.as_str() {
                "entropy" => (Law::Entropy, true),
                "ratio-squared" => (Law::RatioSquared, true),
                "ratio-theta" => (Law::RatioTheta(self.theta), true),
                "weak-form-u" => (Law::WeakFormU, false),
                "weak-form-v" => (Law::WeakFormV, false),
                "energy-identity" => (Law::EnergyIdentity, true),
                other => unreachable!("law {other} passed schema validation"),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    pub oracle: Option<ExactSolution>,
}

impl RunConfig {
    pub fn model(&self) -> ModelSpec {
        self.model.build()
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let Some(sweep) = &self.sweep else {
            return Err(CliError::Schema(vec![
                "sweep: section required for the sweep command".into(),
            ]));
        };
        let InitialConfig::Preset(initial) = &self.initial else {
            return Err(CliError::Schema(vec![
                "initial.kind: sweeps need a preset initial datum, not csv".into(),
            ]));
        };
        Ok(SweepSpec {
            eps_ladder: sweep.eps_ladder.clone(),
            grid_ladder: sweep.grid_ladder.clone(),
            base_model: self.model(),
            grid: self.grid,
            initial: initial.clone(),
            t_end: self.solver.t_end,
            coarse_cell: sweep.coarse_cell,
            snapshots: sweep.snapshots,
            cfl: self.solver.cfl,
            max_steps: self.solver.max_steps,
        })
    }

    /// SHA-256 of the canonical serialisation of the resolved configuration.
    /// Formatting, key order and spelled-out defaults do not change it; a CSV
    /// initial datum enters through the digest of its contents, not its path.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut canonical = self.clone();
        if let InitialConfig::Csv(CsvInitial::Csv { path }) = &self.initial {
            let bytes = std::fs::read(path).map_err(|e| CliError::ConfigIo {
                path: path.clone(),
                source: e,
            })?;
            let digest = hex::encode(Sha256::digest(&bytes));
            canonical.initial = InitialConfig::Csv(CsvInitial::Csv {
                path: PathBuf::from(format!("sha256:{digest}")),
            });
        }
        let text = serde_json::to_string(&canonical).expect("config serialises");
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

fn resolve_path(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Replaces `{"kind": "tabulated", "csv": path}` by the loaded table at
/// every place a tabulation may appear.
fn resolve_tables(value: &mut Value, path: &str, base: &Path, errors: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            if map.get("kind").and_then(Value::as_str) == Some("tabulated") {
                match (map.remove("csv"), map.contains_key("table")) {
                    (Some(_), true) => {
                        errors.push(format!("{path}: give either csv or table, not both"))
                    }
                    (None, false) => {
                        errors.push(format!("{path}: tabulated entries need csv or table"))
                    }
                    (Some(Value::String(file)), false) => {
                        match Tabulation::from_csv_path(resolve_path(base, &file)) {
                            Ok(t) => {
                                map.insert(
                                    "table".into(),
                                    serde_json::to_value(t).expect("table serialises"),
                                );
                            }
                            Err(e) => errors.push(format!("{path}.csv: {e}")),
                        }
                    }
                    (Some(_), false) => {}
                    (None, true) => {
                        let table = map.get("table").cloned().unwrap_or(Value::Null);
                        if let Ok(t) = serde_json::from_value::<Tabulation>(table) {
                            if let Err(e) = Tabulation::new(t.xs, t.values) {
                                errors.push(format!("{path}.table: {e}"));
                            }
                        }
                    }
                }
                return;
            }
            for (k, v) in map.iter_mut() {
                resolve_tables(v, &format!("{path}.{k}"), base, errors);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter_mut().enumerate() {
                resolve_tables(v, &format!("{path}[{i}]"), base, errors);
            }
        }
        _ => {}
    }
}

fn semantic_errors(cfg: &RunConfig) -> Vec<String> {
    let mut e = Vec::new();
    let mut push = |path: &str, r: crossdiff::Result<()>| {
        if let Err(err) = r {
            e.push(format!("{path}: {err}"));
        }
    };
    push("grid", cfg.grid.validate());
    if cfg.model.preset.is_none() && cfg.model.pressure.is_none() {
        push(
            "model.pressure",
            Err(crossdiff::Error::InvalidInput(
                "required when no preset is given".into(),
            )),
        );
    }
    push("model", cfg.model().validate());
    if let InitialConfig::Preset(InitialCondition::Barenblatt { alpha, .. }) = &cfg.initial {
        if *alpha <= 1.0 {
            push(
                "initial.alpha",
                Err(crossdiff::Error::InvalidInput(format!(
                    "Barenblatt data need alpha > 1, got {alpha}"
                ))),
            );
        }
    }
    if let InitialConfig::Csv(CsvInitial::Csv { path }) = &cfg.initial {
        if !path.is_file() {
            push(
                "initial.path",
                Err(crossdiff::Error::Io(format!(
                    "{} is not a readable file",
                    path.display()
                ))),
            );
        }
    }
    let s = &cfg.solver;
    if s.cfl > 1.0 && !s.allow_unstable_cfl {
        push(
            "solver.cfl",
            Err(crossdiff::Error::InvalidInput(format!(
                "must be <= 1, got {} (set allow_unstable_cfl to override)",
                s.cfl
            ))),
        );
    }
    let t0 = cfg.initial.start_time();
    if s.t_end <= t0 {
        push(
            "solver.t_end",
            Err(crossdiff::Error::InvalidInput(format!(
                "must exceed the start time {t0}"
            ))),
        );
    }
    if let Some(sw) = &cfg.sweep {
        if sw.eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
            push(
                "sweep.eps_ladder",
                Err(crossdiff::Error::InvalidInput(
                    "must be strictly decreasing".into(),
                )),
            );
        }
        if let Some(ns) = &sw.grid_ladder {
            let finest = ns.iter().copied().max().unwrap_or(1);
            if ns.iter().any(|&n| finest % n != 0) {
                push(
                    "sweep.grid_ladder",
                    Err(crossdiff::Error::InvalidInput(
                        "every entry must divide the largest one".into(),
                    )),
                );
            }
        }
    }
    if let Some(o) = &cfg.oracle {
        push("oracle", o.validate());
    }
    e
}

/// Validates `value` completely and returns the typed configuration or the
/// full list of violations. Relative file names resolve against `base`.
pub fn config_from_value(mut value: Value, base: &Path) -> Result<RunConfig, CliError> {
    let mut errors = Vec::new();
    schema::check(&value, &schema::CONFIG, "", &mut errors);
    if !errors.is_empty() {
        return Err(CliError::Schema(errors));
    }
    resolve_tables(&mut value, "", base, &mut errors);
    if let Some(Value::String(p)) = value.pointer("/initial/path").cloned() {
        value["initial"]["path"] =
            Value::String(resolve_path(base, &p).to_string_lossy().into_owned());
    }
    if !errors.is_empty() {
        return Err(CliError::Schema(
            errors
                .into_iter()
                .map(|m| m.trim_start_matches('.').to_string())
                .collect(),
        ));
    }
    let cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::Schema(vec![e.to_string()]))?;
    let errors = semantic_errors(&cfg);
    if !errors.is_empty() {
        return Err(CliError::Schema(errors));
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigIo {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(CliError::ConfigSyntax)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    config_from_value(value, &base)
}
