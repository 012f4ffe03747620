//! Command implementations: forward runs, inversion runs, sweeps, and the
//! built-in example reproductions. Each command writes its CSV artifacts
//! atomically into the configured output directory.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use aer::asymptotics::{
    check_assumptions, integrate_front, regular_functions, AssumptionReport,
    AsymptoticSolution, FrontPath, PhysicalSetup,
};
use aer::bounds::{BoundsError, Delta1Mode};
use aer::fvm::{
    default_initial_condition, snapshot_lattice, solve_forward, FieldSeries, SpatialGrid,
};
use aer::inversion::{
    add_noise, relative_l2, run_aer, AerOptions, ErrorReport, GradientMode, InversionError,
    Observations, SourceEstimate,
};
use aer::io::{
    error_report_to_csv, error_scalars_to_csv, field_series_to_csv, fmt_f64,
    observations_to_csv, parse_observations, write_atomic, IoError,
};
use aer::source::SourceFunction;

use crate::config::{ExperimentConfig, LayerModeConfig};
use crate::plots::{heatmap, line_plot, Series};

/// Error taxonomy mirroring the process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: bad invocation or configuration.
    Usage(String),
    /// Exit 2: the admissibility assumptions fail for this setup.
    Assumptions(String),
    /// Exit 3: a solver failed.
    Solver(String),
    /// Exit 4: the admissible set is empty or excludes the estimate.
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Assumptions(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Assumptions(m)
            | CliError::Solver(m)
            | CliError::Infeasible(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Solver(format!("artifact i/o failed: {e}"))
    }
}

impl From<InversionError> for CliError {
    fn from(e: InversionError) -> Self {
        match &e {
            InversionError::Bounds(BoundsError::InfeasibleSet(_))
            | InversionError::Bounds(BoundsError::InfeasibleEstimate { .. }) => {
                CliError::Infeasible(format!("{e}"))
            }
            _ => CliError::Solver(format!("{e}")),
        }
    }
}

/// Everything derived from the configuration that commands share.
pub struct Model {
    pub setup: PhysicalSetup,
    pub src: std::sync::Arc<SourceFunction>,
    pub front: FrontPath,
    pub solution: AsymptoticSolution,
}

fn assumption_text(report: &AssumptionReport) -> String {
    let mut lines = Vec::new();
    let named = [
        ("Assumption 1 (boundary signs and jump)", report.boundary_signs),
        ("Assumption 2 (source energy bounds)", report.source_energy),
        ("Assumption 3 (front containment)", report.front_contained),
    ];
    for (name, pass) in named {
        lines.push(format!("{name}: {}", if pass { "pass" } else { "FAIL" }));
    }
    lines.push(format!("note: {}", report.initial_layer_note));
    for m in &report.messages {
        lines.push(format!("detail: {m}"));
    }
    lines.join("\n")
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<Model, CliError> {
    cfg.validate().map_err(CliError::Usage)?;
    let setup = cfg.setup.to_setup();
    let src = cfg
        .build_source()
        .map_err(|e| CliError::Usage(format!("source rejected: {e}")))?;

    let report = check_assumptions(&setup, src.clone());
    if !report.all_pass() {
        return Err(CliError::Assumptions(assumption_text(&report)));
    }

    let reg = regular_functions(&setup, src.clone())
        .map_err(|e| CliError::Solver(format!("{e}")))?;
    let front = integrate_front(&setup, &reg, 1e-4)
        .map_err(|e| CliError::Solver(format!("{e}")))?;
    let solution = AsymptoticSolution::new(setup, reg, front.clone());
    Ok(Model { setup, src, front, solution })
}

pub fn cmd_check(cfg: &ExperimentConfig) -> Result<String, CliError> {
    cfg.validate().map_err(CliError::Usage)?;
    let setup = cfg.setup.to_setup();
    let src = cfg
        .build_source()
        .map_err(|e| CliError::Usage(format!("source rejected: {e}")))?;
    let report = check_assumptions(&setup, src);
    let text = assumption_text(&report);
    if report.all_pass() {
        Ok(text)
    } else {
        Err(CliError::Assumptions(text))
    }
}

fn u0_series(model: &Model, grid: &SpatialGrid, times: &[f64]) -> Result<FieldSeries, CliError> {
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let mut row = Vec::with_capacity(grid.centers.len());
        for &x in &grid.centers {
            row.push(
                model
                    .solution
                    .evaluate_u0(x, t)
                    .map_err(|e| CliError::Solver(format!("{e}")))?,
            );
        }
        values.push(row);
    }
    Ok(FieldSeries {
        grid: grid.clone(),
        times: times.to_vec(),
        values,
        setup: model.setup,
    })
}

/// Relative discrete L2 distance between two series on the same lattice.
fn series_rel_error(a: &FieldSeries, b: &FieldSeries, time_indices: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &j in time_indices {
        for i in 0..b.grid.centers.len() {
            let d = a.values[j][i] - b.values[j][i];
            num += d * d;
            den += b.values[j][i] * b.values[j][i];
        }
    }
    (num / den).sqrt()
}

pub struct ForwardSummary {
    pub rel_error_space_time: f64,
    pub rel_error_t0: f64,
    pub runtime_s: f64,
}

pub fn cmd_forward(cfg: &ExperimentConfig) -> Result<ForwardSummary, CliError> {
    let start = Instant::now();
    let model = build_model(cfg)?;
    let grid = SpatialGrid::uniform(cfg.grid.n_cells);
    let times = snapshot_lattice(model.setup.t_final, 201, &[cfg.t0]);

    let u0 = u0_series(&model, &grid, &times)?;
    let u_init = default_initial_condition(&model.setup, &grid);
    let fvm = solve_forward(&model.setup, &model.src, &u_init, &grid, None, &times)
        .map_err(|e| CliError::Solver(format!("{e}")))?;

    let all: Vec<usize> = (0..times.len()).collect();
    let rel_total = series_rel_error(&u0, &fvm, &all);
    let t0_idx = times
        .iter()
        .position(|&t| (t - cfg.t0).abs() < 1e-12)
        .expect("t0 is on the snapshot lattice");
    let rel_t0 = series_rel_error(&u0, &fvm, &[t0_idx]);

    let dir = &cfg.outputs.directory;
    write_atomic(&dir.join("u0.csv"), &field_series_to_csv(&u0))?;
    write_atomic(&dir.join("fvm.csv"), &field_series_to_csv(&fvm))?;

    let mut report = String::from("t,x0,v0,dx,rel_error\n");
    for (j, &t) in times.iter().enumerate() {
        let x0 = model.front.x0_at(t).unwrap_or(f64::NAN);
        let v0 = model.front.v0_at(t).unwrap_or(f64::NAN);
        let dx = model
            .solution
            .layer_width(t)
            .map(|lw| lw.dx)
            .unwrap_or(f64::NAN);
        let rel = series_rel_error(&u0, &fvm, &[j]);
        report.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(t),
            fmt_f64(x0),
            fmt_f64(v0),
            fmt_f64(dx),
            fmt_f64(rel)
        ));
    }
    write_atomic(&dir.join("forward_report.csv"), &report)?;

    if cfg.outputs.plots {
        write_atomic(
            &dir.join("fvm_heatmap.svg"),
            &heatmap("finite-volume field u(x,t)", &grid.centers, &times, &fvm.values),
        )?;
        write_atomic(
            &dir.join("slice_t0.svg"),
            &line_plot(
                &format!("u(x, t0 = {})", cfg.t0),
                &[
                    Series { label: "asymptotic", xs: &grid.centers, ys: &u0.values[t0_idx] },
                    Series { label: "finite volume", xs: &grid.centers, ys: &fvm.values[t0_idx] },
                ],
            ),
        )?;
    }

    Ok(ForwardSummary {
        rel_error_space_time: rel_total,
        rel_error_t0: rel_t0,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Noisy one-slice observations from the asymptotic solution, with the
/// configured gap intervals masked out.
pub fn make_observations(cfg: &ExperimentConfig, model: &Model) -> Result<Observations, CliError> {
    let n = cfg.grid.n_obs;
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let mut u = Vec::with_capacity(xs.len());
    let mut w = Vec::with_capacity(xs.len());
    for &x in &xs {
        u.push(
            model
                .solution
                .evaluate_u0(x, cfg.t0)
                .map_err(|e| CliError::Solver(format!("{e}")))?,
        );
        if cfg.gradient_observed() {
            w.push(
                model
                    .solution
                    .evaluate_u0_dx(x, cfg.t0)
                    .map_err(|e| CliError::Solver(format!("{e}")))?,
            );
        }
    }
    let w_opt = if cfg.gradient_observed() { Some(&w[..]) } else { None };
    let mut obs = add_noise(cfg.t0, &xs, &u, w_opt, cfg.delta, cfg.seed);
    for (i, &x) in obs.xs.iter().enumerate() {
        if cfg.gaps.iter().any(|g| x >= g[0] && x <= g[1]) {
            obs.mask[i] = false;
        }
    }
    Ok(obs)
}

pub fn aer_options(cfg: &ExperimentConfig) -> AerOptions {
    AerOptions {
        class: cfg.constraint_class.to_class(),
        gradient: GradientMode::BackwardDifference,
        c1: cfg.c1(),
        c_lo: None,
        c_hi: None,
        delta1_mode: Delta1Mode::Relaxed,
        dense_factor: 10,
    }
}

pub struct InvertSummary {
    pub rel_error: f64,
    pub delta1: f64,
    pub delta1_bar: f64,
    pub runtime_s: f64,
}

fn run_pipeline(
    cfg: &ExperimentConfig,
    model: &Model,
    obs: &Observations,
) -> Result<(SourceEstimate, ErrorReport), CliError> {
    let front = match cfg.layer_mode {
        LayerModeConfig::Oracle => Some(&model.front),
        LayerModeConfig::Data => None,
    };
    Ok(run_aer(&model.setup, obs, front, &aer_options(cfg))?)
}

fn write_inversion_artifacts(
    dir: &Path,
    obs: &Observations,
    estimate: &SourceEstimate,
    report: &ErrorReport,
    plots: bool,
    f_true: &[f64],
) -> Result<(), CliError> {
    write_atomic(&dir.join("obs.csv"), &observations_to_csv(obs))?;

    let mut f_delta = String::from("x,f_delta\n");
    for (x, v) in estimate.xs.iter().zip(&estimate.values) {
        f_delta.push_str(&format!("{},{}\n", fmt_f64(*x), fmt_f64(*v)));
    }
    write_atomic(&dir.join("f_delta.csv"), &f_delta)?;

    write_atomic(&dir.join("error_report.csv"), &error_report_to_csv(report, estimate))?;
    write_atomic(&dir.join("error_scalars.csv"), &error_scalars_to_csv(report))?;

    if plots {
        let lows: Vec<f64> = report.xs_dense.iter().map(|&x| report.envelope.eval_low(x)).collect();
        let ups: Vec<f64> = report.xs_dense.iter().map(|&x| report.envelope.eval_up(x)).collect();
        write_atomic(
            &dir.join("reconstruction.svg"),
            &line_plot(
                "source reconstruction with pointwise envelope",
                &[
                    Series { label: "estimate", xs: &estimate.xs, ys: &estimate.values },
                    Series { label: "lower envelope", xs: &report.xs_dense, ys: &lows },
                    Series { label: "upper envelope", xs: &report.xs_dense, ys: &ups },
                    Series { label: "true source", xs: &estimate.xs, ys: f_true },
                ],
            ),
        )?;
    }
    Ok(())
}

pub fn cmd_invert(cfg: &ExperimentConfig) -> Result<InvertSummary, CliError> {
    let start = Instant::now();
    let model = build_model(cfg)?;
    let obs = make_observations(cfg, &model)?;
    let (estimate, report) = run_pipeline(cfg, &model, &obs)?;

    let dir = &cfg.outputs.directory;
    // Forward field artifact for downstream tooling; reuse if present.
    if !dir.join("u0.csv").exists() {
        let grid = SpatialGrid::uniform(cfg.grid.n_cells);
        let times = snapshot_lattice(model.setup.t_final, 41, &[cfg.t0]);
        let u0 = u0_series(&model, &grid, &times)?;
        write_atomic(&dir.join("u0.csv"), &field_series_to_csv(&u0))?;
    }
    let f_true = cfg.true_source_at(&estimate.xs);
    write_inversion_artifacts(dir, &obs, &estimate, &report, cfg.outputs.plots, &f_true)?;

    Ok(InvertSummary {
        rel_error: relative_l2(&estimate.values, &f_true),
        delta1: report.delta1,
        delta1_bar: report.delta1_bar,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Re-runs estimation and error bounds on previously written observations.
pub fn cmd_errors(cfg: &ExperimentConfig) -> Result<InvertSummary, CliError> {
    let start = Instant::now();
    let model = build_model(cfg)?;
    let dir = &cfg.outputs.directory;
    let obs_path = dir.join("obs.csv");
    let text = std::fs::read_to_string(&obs_path).map_err(|e| {
        CliError::Usage(format!(
            "cannot read {} (run `aer invert` first): {e}",
            obs_path.display()
        ))
    })?;
    let obs = parse_observations(&text, cfg.t0, cfg.delta, cfg.seed)?;
    let (estimate, report) = run_pipeline(cfg, &model, &obs)?;
    let f_true = cfg.true_source_at(&estimate.xs);
    write_inversion_artifacts(dir, &obs, &estimate, &report, cfg.outputs.plots, &f_true)?;
    Ok(InvertSummary {
        rel_error: relative_l2(&estimate.values, &f_true),
        delta1: report.delta1,
        delta1_bar: report.delta1_bar,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub mu: f64,
    pub delta: f64,
    pub seed: u64,
    pub rel_error: Option<f64>,
    pub delta1: Option<f64>,
    pub runtime_s: f64,
    pub status: String,
}

pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Fitted log-log slope of median rel_error against delta.
    pub slope: Option<f64>,
    pub successes: usize,
}

pub enum SweepAxis {
    Mu(Vec<f64>),
    Delta(Vec<f64>),
}

fn worker_count(n_runs: usize) -> usize {
    let default = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var("AER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(default);
    cap.min(n_runs).max(1)
}

/// One inversion run entirely in memory; used by the sweep workers.
fn sweep_run(cfg: &ExperimentConfig) -> Result<(f64, f64), CliError> {
    let model = build_model(cfg)?;
    let obs = make_observations(cfg, &model)?;
    let (estimate, report) = run_pipeline(cfg, &model, &obs)?;
    let f_true = cfg.true_source_at(&estimate.xs);
    Ok((relative_l2(&estimate.values, &f_true), report.delta1))
}

pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    seeds: u64,
) -> Result<SweepSummary, CliError> {
    cfg.validate().map_err(CliError::Usage)?;
    if seeds == 0 {
        return Err(CliError::Usage("seed count must be positive".into()));
    }
    let mut specs: Vec<ExperimentConfig> = Vec::new();
    match &axis {
        SweepAxis::Mu(mus) => {
            if mus.is_empty() {
                return Err(CliError::Usage("empty mu sweep list".into()));
            }
            for &mu in mus {
                for s in 0..seeds {
                    let mut c = cfg.clone();
                    c.setup.mu = mu;
                    c.seed = cfg.seed + s;
                    specs.push(c);
                }
            }
        }
        SweepAxis::Delta(deltas) => {
            if deltas.is_empty() {
                return Err(CliError::Usage("empty delta sweep list".into()));
            }
            for &d in deltas {
                for s in 0..seeds {
                    let mut c = cfg.clone();
                    c.delta = d;
                    c.seed = cfg.seed + s;
                    specs.push(c);
                }
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, SweepRow)>> = Mutex::new(Vec::with_capacity(specs.len()));
    let workers = worker_count(specs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let spec = &specs[i];
                let t = Instant::now();
                let row = match sweep_run(spec) {
                    Ok((rel, d1)) => SweepRow {
                        mu: spec.setup.mu,
                        delta: spec.delta,
                        seed: spec.seed,
                        rel_error: Some(rel),
                        delta1: Some(d1),
                        runtime_s: t.elapsed().as_secs_f64(),
                        status: "ok".into(),
                    },
                    Err(e) => SweepRow {
                        mu: spec.setup.mu,
                        delta: spec.delta,
                        seed: spec.seed,
                        rel_error: None,
                        delta1: None,
                        runtime_s: t.elapsed().as_secs_f64(),
                        status: format!("error: {}", e.message().replace([',', '\n'], "; ")),
                    },
                };
                results.lock().unwrap().push((i, row));
            });
        }
    });
    let mut indexed = results.into_inner().unwrap();
    indexed.sort_by_key(|(i, _)| *i);
    let rows: Vec<SweepRow> = indexed.into_iter().map(|(_, r)| r).collect();
    let successes = rows.iter().filter(|r| r.rel_error.is_some()).count();
    if successes == 0 {
        return Err(CliError::Solver("every sweep run failed".into()));
    }

    let slope = match &axis {
        SweepAxis::Delta(deltas) if deltas.len() >= 2 => {
            fit_delta_slope(deltas, &rows)
        }
        _ => None,
    };

    let mut csv = String::from("mu,delta,seed,rel_error,delta1,err_over_mu_ln_mu,runtime_s,slope,status\n");
    for r in &rows {
        let scaled = r.rel_error.map(|e| e / (r.mu * r.mu.ln().abs()));
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.mu),
            fmt_f64(r.delta),
            r.seed,
            r.rel_error.map(fmt_f64).unwrap_or_default(),
            r.delta1.map(fmt_f64).unwrap_or_default(),
            scaled.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.runtime_s),
            slope.map(fmt_f64).unwrap_or_default(),
            r.status
        ));
    }
    write_atomic(&cfg.outputs.directory.join("sweep.csv"), &csv)?;

    Ok(SweepSummary { rows, slope, successes })
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(values[values.len() / 2])
}

/// Least-squares slope of log(median rel_error) against log(delta).
fn fit_delta_slope(deltas: &[f64], rows: &[SweepRow]) -> Option<f64> {
    let mut points = Vec::new();
    for &d in deltas {
        let mut errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.delta == d)
            .filter_map(|r| r.rel_error)
            .collect();
        if let Some(m) = median(&mut errs) {
            if m > 0.0 && d > 0.0 {
                points.push((d.ln(), m.ln()));
            }
        }
    }
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

pub struct ReproduceSummary {
    pub forward: ForwardSummary,
    pub invert: InvertSummary,
}

pub fn cmd_reproduce(cfg: &ExperimentConfig) -> Result<ReproduceSummary, CliError> {
    let forward = cmd_forward(cfg)?;
    let invert = cmd_invert(cfg)?;
    Ok(ReproduceSummary { forward, invert })
}

/// Output directory override helper used by the flag plumbing.
pub fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    delta: Option<f64>,
    out: Option<PathBuf>,
    plots: bool,
) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = delta {
        cfg.delta = d;
    }
    if let Some(o) = out {
        cfg.outputs.directory = o;
    }
    if plots {
        cfg.outputs.plots = true;
    }
}
