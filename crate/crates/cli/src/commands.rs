//! Subcommand implementations and the manifest that accompanies every
//! invocation.

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crossdiff::continuation::{defect_measure_check, eps_sweep, strictly_decreasing, SweepReport};
use crossdiff::diagnostics::{
    record_trajectory, standard_test_functions, summarize, BalanceResidual, DiagnosticsRecord,
    EntropyInterval, EntropyMonitor, ResidualAccumulator,
};
use crossdiff::model::ModelSpec;
use crossdiff::oracle::{error_report, ErrorRow, ExactSolution};
use crossdiff::scenarios::InitialCondition;
use crossdiff::solver::{run, run_with_observer, Trajectory};
use log::info;
use serde::Serialize;

use crate::config::{parse_config, CsvLayout, Format, InitialConfig, RunConfig};
use crate::error::{CliError, EXIT_FAILURE, EXIT_OK};
use crate::output::{fmt_num, fmt_opt, CsvTable, OutDir};
use crate::svg::{heatmap, line_plot, Axes, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Run,
    Sweep,
    Diagnose,
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Diagnose => "diagnose",
            Command::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: PathBuf,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Overrides `outputs.formats` of the config.
    pub formats: Option<Vec<Format>>,
}

#[derive(Debug, Serialize)]
struct ManifestError {
    kind: &'static str,
    message: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'static str,
    config_path: String,
    config_hash: Option<String>,
    threads: usize,
    started_unix_seconds: u64,
    wall_clock_seconds: f64,
    status: &'static str,
    exit_code: i32,
    error: Option<ManifestError>,
    outputs: Vec<String>,
}

struct Context<'a> {
    cfg: &'a RunConfig,
    formats: Vec<Format>,
    out: &'a mut OutDir,
}

impl Context<'_> {
    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Runs one subcommand and returns its exit code. A manifest is written to
/// the output directory whatever the outcome.
pub fn execute(inv: &Invocation) -> i32 {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut out = match OutDir::create(&inv.out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(inv.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_FAILURE;
        }
    };
    let mut hash = None;
    let result = pool.install(|| -> Result<(), CliError> {
        let cfg = parse_config(&inv.config)?;
        hash = Some(cfg.hash()?);
        let formats = inv
            .formats
            .clone()
            .unwrap_or_else(|| cfg.outputs.formats.clone());
        info!(
            "{} with config {} ({} threads)",
            inv.command.name(),
            inv.config.display(),
            rayon::current_num_threads()
        );
        let mut ctx = Context {
            cfg: &cfg,
            formats,
            out: &mut out,
        };
        match inv.command {
            Command::Run => cmd_run(&mut ctx),
            Command::Sweep => cmd_sweep(&mut ctx),
            Command::Diagnose => cmd_diagnose(&mut ctx),
            Command::OracleCheck => cmd_oracle_check(&mut ctx),
        }
    });
    let exit_code = match &result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    let manifest = Manifest {
        tool: "crossdiff",
        version: env!("CARGO_PKG_VERSION"),
        core_version: crossdiff::VERSION,
        command: inv.command.name(),
        config_path: inv.config.display().to_string(),
        config_hash: hash,
        threads: pool.current_num_threads(),
        started_unix_seconds: started_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        status: if result.is_ok() { "ok" } else { "error" },
        exit_code,
        error: result.err().map(|e| ManifestError {
            kind: e.kind(),
            message: e.to_string(),
        }),
        outputs: out.written().to_vec(),
    };
    if let Err(e) = out.write_json("manifest.json", &manifest) {
        eprintln!("error: {e}");
        return if exit_code == EXIT_OK {
            EXIT_FAILURE
        } else {
            exit_code
        };
    }
    exit_code
}

fn simulate(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let initial = cfg.initial.build(&cfg.grid)?;
    Ok(run(
        &initial,
        &cfg.model(),
        &cfg.solver.params(),
        &cfg.grid,
    )?)
}

fn trajectory_rows(table: &mut CsvTable, state: &crossdiff::domain::State) {
    let xs = state.grid().centers();
    for i in 0..xs.len() {
        let (u, v) = (state.u.values[i], state.v.values[i]);
        table.row([
            fmt_num(state.t),
            fmt_num(xs[i]),
            fmt_num(u),
            fmt_num(v),
            fmt_num(u + v),
        ]);
    }
}

const TRAJECTORY_HEADER: [&str; 5] = ["t", "x", "u", "v", "s"];

fn write_trajectory(ctx: &mut Context, traj: &Trajectory) -> Result<(), CliError> {
    match ctx.cfg.outputs.csv_layout {
        CsvLayout::Long => {
            let mut table = CsvTable::new(&TRAJECTORY_HEADER);
            for s in &traj.snapshots {
                trajectory_rows(&mut table, s);
            }
            ctx.out.write("trajectory.csv", &table.into_bytes())
        }
        CsvLayout::PerSnapshot => {
            for (k, s) in traj.snapshots.iter().enumerate() {
                let mut table = CsvTable::new(&TRAJECTORY_HEADER);
                trajectory_rows(&mut table, s);
                ctx.out.write(
                    &format!("snapshots/snapshot_{k:05}.csv"),
                    &table.into_bytes(),
                )?;
            }
            Ok(())
        }
    }
}

fn diagnostics_table(records: &[DiagnosticsRecord]) -> Vec<u8> {
    let mut table = CsvTable::new(&DiagnosticsRecord::COLUMNS);
    for r in records {
        table.row(r.row().into_iter().map(fmt_opt));
    }
    table.into_bytes()
}

#[derive(Debug, Serialize)]
struct ColumnSummary {
    name: &'static str,
    min: Option<f64>,
    max: Option<f64>,
    last: Option<f64>,
}

fn column_summaries(records: &[DiagnosticsRecord]) -> Vec<ColumnSummary> {
    summarize(records)
        .into_iter()
        .map(|(name, s)| ColumnSummary {
            name,
            min: s.map(|s| s.min),
            max: s.map(|s| s.max),
            last: s.map(|s| s.last),
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    model: &'a ModelSpec,
    steps: usize,
    snapshots: usize,
    t_final: f64,
    max_mass_drift: f64,
    clipped_mass: f64,
    warnings: &'a [String],
    diagnostics: Vec<ColumnSummary>,
}

fn profile_svg(
    title: &str,
    state: &crossdiff::domain::State,
    extra: Option<(&str, &[f64])>,
) -> String {
    let xs = state.grid().centers();
    let s: Vec<f64> = state
        .u
        .values
        .iter()
        .zip(&state.v.values)
        .map(|(a, b)| a + b)
        .collect();
    let mut series = vec![
        Series {
            label: "u",
            x: &xs,
            y: &state.u.values,
        },
        Series {
            label: "v",
            x: &xs,
            y: &state.v.values,
        },
        Series {
            label: "s",
            x: &xs,
            y: &s,
        },
    ];
    if let Some((label, y)) = extra {
        series.push(Series { label, x: &xs, y });
    }
    line_plot(title, "x", "density", &series, Axes::default())
}

fn cmd_run(ctx: &mut Context) -> Result<(), CliError> {
    let traj = simulate(ctx.cfg)?;
    let records = record_trajectory(&traj);
    if ctx.wants(Format::Csv) {
        write_trajectory(ctx, &traj)?;
        ctx.out
            .write("diagnostics.csv", &diagnostics_table(&records))?;
    }
    if ctx.wants(Format::Json) {
        let summary = RunSummary {
            model: &traj.model,
            steps: traj.steps(),
            snapshots: traj.snapshots.len(),
            t_final: traj.final_state().t,
            max_mass_drift: traj.max_mass_drift(),
            clipped_mass: traj.clipped_mass,
            warnings: &traj.warnings,
            diagnostics: column_summaries(&records),
        };
        ctx.out.write_json("summary.json", &summary)?;
    }
    if ctx.wants(Format::Svg) {
        let last = traj.final_state();
        let svg = profile_svg(&format!("densities at t = {:.4}", last.t), last, None);
        ctx.out.write("profile.svg", svg.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EntropySummary {
    intervals: usize,
    slack_per_dt: f64,
    max_residual: f64,
    max_residual_per_dt: f64,
    violations: usize,
}

#[derive(Debug, Serialize)]
struct ResidualRow {
    law: String,
    test_function: String,
    refinement_level: u32,
    value: f64,
}

impl From<&BalanceResidual> for ResidualRow {
    fn from(r: &BalanceResidual) -> Self {
        ResidualRow {
            law: r.law.name(),
            test_function: r.test_function_id.clone(),
            refinement_level: r.refinement_level,
            value: r.value,
        }
    }
}

#[derive(Debug, Serialize)]
struct DiagnoseSummary<'a> {
    model: &'a ModelSpec,
    steps: usize,
    max_mass_drift: f64,
    entropy: EntropySummary,
    residuals: Vec<ResidualRow>,
    diagnostics: Vec<ColumnSummary>,
}

fn cmd_diagnose(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let model = cfg.model();
    let grid = cfg.grid;
    let initial = cfg.initial.build(&grid)?;
    let params = cfg.solver.params();
    let t_range = (initial.t, params.t_end);
    let tests = standard_test_functions(&grid, t_range.0, t_range.1);
    let probes = cfg
        .diagnose
        .laws()
        .into_iter()
        .flat_map(|(law, eps)| tests.iter().map(move |tf| (law, tf.clone(), eps)))
        .collect();
    let mut monitor = EntropyMonitor::new(&model, grid)?;
    let mut acc = ResidualAccumulator::new(&model, grid, t_range, probes)?;
    let traj = run_with_observer(&initial, &model, &params, &grid, |a, b, dt| {
        monitor.observe(a, b, dt)?;
        acc.observe(a, b, dt)
    })?;
    let residuals = acc.finish();
    let intervals = monitor.intervals;
    let slack = cfg.diagnose.entropy_slack;
    let per_dt = |i: &EntropyInterval| i.residual / (i.t1 - i.t0);
    let entropy = EntropySummary {
        intervals: intervals.len(),
        slack_per_dt: slack,
        max_residual: intervals
            .iter()
            .map(|i| i.residual)
            .fold(f64::NEG_INFINITY, f64::max),
        max_residual_per_dt: intervals
            .iter()
            .map(per_dt)
            .fold(f64::NEG_INFINITY, f64::max),
        violations: intervals
            .iter()
            .filter(|i| i.residual > slack * (i.t1 - i.t0))
            .count(),
    };
    let records = record_trajectory(&traj);
    if ctx.wants(Format::Csv) {
        ctx.out
            .write("diagnostics.csv", &diagnostics_table(&records))?;
        let mut t = CsvTable::new(&["t0", "t1", "rate", "dissipation", "bound", "residual"]);
        for i in &intervals {
            t.row([i.t0, i.t1, i.rate, i.dissipation, i.bound, i.residual].map(fmt_num));
        }
        ctx.out.write("entropy.csv", &t.into_bytes())?;
        let mut t = CsvTable::new(&["law", "test_function", "refinement_level", "value"]);
        for r in &residuals {
            t.row([
                r.law.name(),
                r.test_function_id.clone(),
                r.refinement_level.to_string(),
                fmt_num(r.value),
            ]);
        }
        ctx.out.write("residuals.csv", &t.into_bytes())?;
    }
    if ctx.wants(Format::Json) {
        let summary = DiagnoseSummary {
            model: &model,
            steps: traj.steps(),
            max_mass_drift: traj.max_mass_drift(),
            entropy,
            residuals: residuals.iter().map(ResidualRow::from).collect(),
            diagnostics: column_summaries(&records),
        };
        ctx.out.write_json("summary.json", &summary)?;
    }
    if ctx.wants(Format::Svg) {
        let t: Vec<f64> = intervals.iter().map(|i| i.t0).collect();
        let r: Vec<f64> = intervals.iter().map(per_dt).collect();
        let svg = line_plot(
            "entropy inequality residual / dt",
            "t",
            "residual / dt",
            &[Series {
                label: "residual/dt",
                x: &t,
                y: &r,
            }],
            Axes::default(),
        );
        ctx.out.write("entropy.svg", svg.as_bytes())?;
    }
    Ok(())
}

/// Exact solution matching the configured setup, when one is known.
fn infer_oracle(cfg: &RunConfig, model: &ModelSpec) -> Option<ExactSolution> {
    let advection_free = model.velocity.v1.is_zero()
        && model.velocity.v2.is_zero()
        && model.kernels.is_empty()
        && model.growth.is_zero()
        && model.pressure.is_unit_weight();
    if !advection_free {
        return None;
    }
    match &cfg.initial {
        InitialConfig::Preset(InitialCondition::Gaussian {
            center,
            width,
            mass,
            fraction_u,
        }) if model.pressure.alpha == 1.0 && *fraction_u == 1.0 => {
            let d = 1.0 + model.epsilon;
            Some(ExactSolution::GaussianHeat {
                diffusivity: d,
                mass: *mass,
                center: *center,
                t_offset: width * width / (2.0 * d),
            })
        }
        InitialConfig::Preset(InitialCondition::Barenblatt {
            alpha,
            mass,
            fraction_u,
            ..
        }) if *alpha == model.pressure.alpha && *fraction_u == 1.0 => {
            Some(ExactSolution::Barenblatt {
                alpha: *alpha,
                mass: *mass,
                t_offset: 0.0,
            })
        }
        _ => None,
    }
}

#[derive(Debug, Serialize)]
struct OracleSummary<'a> {
    oracle: &'a ExactSolution,
    steps: usize,
    final_errors: ErrorRow,
    relative_l1_final: f64,
}

fn cmd_oracle_check(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let model = cfg.model();
    let oracle = match cfg.oracle.clone().or_else(|| infer_oracle(cfg, &model)) {
        Some(o) => o,
        None => {
            return Err(CliError::Schema(vec![
                "oracle: section required, no exact solution is known for this setup".into(),
            ]))
        }
    };
    let traj = simulate(cfg)?;
    let rows = error_report(&traj, &oracle)?;
    let last = *rows.last().expect("at least one snapshot");
    let mass = oracle.mass();
    let summary = OracleSummary {
        oracle: &oracle,
        steps: traj.steps(),
        final_errors: last,
        relative_l1_final: if mass > 0.0 { last.l1 / mass } else { last.l1 },
    };
    if ctx.wants(Format::Csv) {
        let mut t = CsvTable::new(&["t", "l1", "l2", "linf"]);
        for r in &rows {
            t.row([r.t, r.l1, r.l2, r.linf].map(fmt_num));
        }
        ctx.out.write("oracle_errors.csv", &t.into_bytes())?;
    }
    if ctx.wants(Format::Json) {
        ctx.out.write_json("summary.json", &summary)?;
    }
    if ctx.wants(Format::Svg) {
        let state = traj.final_state();
        let exact = oracle.evaluate(state.t, &cfg.grid)?;
        let svg = profile_svg(
            &format!("numerical vs exact at t = {:.4}", state.t),
            state,
            Some(("exact", &exact.values)),
        );
        ctx.out.write("oracle.svg", svg.as_bytes())?;
    }
    info!(
        "oracle-check relative L1 error {:.3e}",
        summary.relative_l1_final
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct LadderRow {
    epsilon: f64,
    steps: usize,
    dist_s: f64,
    dist_grad_s_alpha: f64,
    dist_u_on_s: f64,
    dist_v_on_s: f64,
    mean_abs_m11: f64,
    max_cs_ratio: Option<f64>,
    mean_abs_defect_gap: f64,
}

#[derive(Debug, Serialize)]
struct SweepChecks {
    gradient_distances_strictly_decreasing: bool,
    u_distances_on_s_strictly_decreasing: bool,
    /// Mean `|m11|` of the coarsest rung over that of the second-finest.
    m11_contraction_factor: Option<f64>,
    max_cs_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SweepJson<'a> {
    eps_ladder: &'a [f64],
    grid: crossdiff::domain::GridSpec,
    t_end: f64,
    alpha: f64,
    coarse: crossdiff::continuation::CoarseGrid,
    mask_cells_in_s: usize,
    mask_cells: usize,
    rungs: Vec<LadderRow>,
    grid_rungs: &'a [crossdiff::continuation::GridRung],
    checks: SweepChecks,
}

fn sweep_json(report: &SweepReport) -> SweepJson<'_> {
    let defects = defect_measure_check(report);
    let gaps = crossdiff::continuation::mean_defect_gap(&defects);
    let rungs: Vec<LadderRow> = report
        .rungs
        .iter()
        .zip(&gaps)
        .map(|(r, &gap)| LadderRow {
            epsilon: r.epsilon,
            steps: r.steps,
            dist_s: r.dist_s,
            dist_grad_s_alpha: r.dist_grad_s_alpha,
            dist_u_on_s: r.dist_u_on_s,
            dist_v_on_s: r.dist_v_on_s,
            mean_abs_m11: r.mean_abs_m11,
            max_cs_ratio: r.max_cs_ratio,
            mean_abs_defect_gap: gap,
        })
        .collect();
    let k = report.rungs.len();
    let factor = (k >= 3 && report.rungs[k - 2].mean_abs_m11 > 0.0)
        .then(|| report.rungs[0].mean_abs_m11 / report.rungs[k - 2].mean_abs_m11);
    let max_cs = report
        .rungs
        .iter()
        .filter_map(|r| r.max_cs_ratio)
        .fold(None, |m: Option<f64>, c| Some(m.map_or(c, |m| m.max(c))));
    SweepJson {
        eps_ladder: &report.eps_ladder,
        grid: report.grid,
        t_end: report.t_end,
        alpha: report.alpha,
        coarse: report.mask.coarse,
        mask_cells_in_s: report.mask.count(),
        mask_cells: report.mask.in_s.len(),
        rungs,
        grid_rungs: &report.grid_rungs,
        checks: SweepChecks {
            gradient_distances_strictly_decreasing: strictly_decreasing(
                &report.gradient_distances(),
            ),
            u_distances_on_s_strictly_decreasing: strictly_decreasing(&report.u_distances_on_s()),
            m11_contraction_factor: factor,
            max_cs_ratio: max_cs,
        },
    }
}

fn cmd_sweep(ctx: &mut Context) -> Result<(), CliError> {
    let spec = ctx.cfg.sweep_spec()?;
    let report = eps_sweep(&spec)?;
    let summary = sweep_json(&report);
    if ctx.wants(Format::Json) {
        ctx.out.write_json("sweep_report.json", &summary)?;
    }
    if ctx.wants(Format::Csv) {
        let mut t = CsvTable::new(&[
            "epsilon",
            "steps",
            "dist_s",
            "dist_grad_s_alpha",
            "dist_u_on_s",
            "dist_v_on_s",
            "mean_abs_m11",
            "max_cs_ratio",
            "mean_abs_defect_gap",
        ]);
        for r in &summary.rungs {
            t.row([
                fmt_num(r.epsilon),
                r.steps.to_string(),
                fmt_num(r.dist_s),
                fmt_num(r.dist_grad_s_alpha),
                fmt_num(r.dist_u_on_s),
                fmt_num(r.dist_v_on_s),
                fmt_num(r.mean_abs_m11),
                fmt_opt(r.max_cs_ratio),
                fmt_num(r.mean_abs_defect_gap),
            ]);
        }
        ctx.out.write("ladder.csv", &t.into_bytes())?;

        let defects = defect_measure_check(&report);
        let mut t = CsvTable::new(&[
            "epsilon",
            "t",
            "x",
            "samples",
            "m11",
            "m20",
            "m02",
            "slope",
            "cs_ratio",
            "f_local",
            "s_mean",
            "m_defect",
            "in_s",
            "defect_left",
            "defect_right",
            "defect_gap",
        ]);
        for (r, row) in report.rungs.iter().zip(&defects) {
            for (k, (c, d)) in r.stats.cells.iter().zip(row).enumerate() {
                t.row([
                    fmt_num(r.epsilon),
                    fmt_num(c.t),
                    fmt_num(c.x),
                    c.samples.to_string(),
                    fmt_num(c.m11),
                    fmt_num(c.m20),
                    fmt_num(c.m02),
                    fmt_opt(c.slope),
                    fmt_opt(c.cs_ratio),
                    fmt_num(c.f_local),
                    fmt_num(c.s_mean),
                    fmt_num(c.m_defect),
                    report.mask.in_s[k].to_string(),
                    fmt_num(d.left),
                    fmt_num(d.right),
                    fmt_num(d.gap),
                ]);
            }
        }
        ctx.out.write("fluctuation_cells.csv", &t.into_bytes())?;
    }
    if ctx.wants(Format::Svg) {
        let k = report.reference_index();
        let eps: Vec<f64> = report.rungs[..k].iter().map(|r| r.epsilon).collect();
        let ds: Vec<f64> = report.rungs[..k].iter().map(|r| r.dist_s).collect();
        let dg = report.gradient_distances();
        let du = report.u_distances_on_s();
        let svg = line_plot(
            "distance to the reference rung",
            "epsilon",
            "space-time L2 distance",
            &[
                Series {
                    label: "s",
                    x: &eps,
                    y: &ds,
                },
                Series {
                    label: "d_x s^alpha",
                    x: &eps,
                    y: &dg,
                },
                Series {
                    label: "u on S",
                    x: &eps,
                    y: &du,
                },
            ],
            Axes {
                log_x: true,
                log_y: true,
            },
        );
        ctx.out.write("distances.svg", svg.as_bytes())?;
        let coarse = &report.rungs[0].stats;
        let cs: Vec<Option<f64>> = coarse.cells.iter().map(|c| c.cs_ratio).collect();
        let svg = heatmap(
            &format!(
                "cs_ratio per coarse cell, epsilon = {}",
                report.rungs[0].epsilon
            ),
            "x",
            "t",
            coarse.coarse.n_t,
            coarse.coarse.n_x,
            &cs,
        );
        ctx.out.write("cs_ratio.svg", svg.as_bytes())?;
    }
    Ok(())
}
