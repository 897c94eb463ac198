//! Command-line interface: `simulate`, `bounds`, `frontier` and `compat`.
//!
//! Settings are resolved as defaults, then the `--config` file (a flat JSON
//! config or a previous run manifest), then flags. The seed falls back to
//! `FUSION_BOUNDS_SEED` and then 0. Failures print a JSON error object on
//! stderr and a one-line summary on stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{bias_corrected_bounds, bootstrap_replicates, unit_audit, with_bootstrap_variance};
use crate::compat::{arm_seed, compat_test, compat_test_both_modes, overlap_values, CompatMode, CompatResult};
use crate::error::{Error, Result};
use crate::frontier::compute_frontier;
use crate::io::{self, RunConfig, RunManifest, StageClock};
use crate::model::{shift_outcomes, BoundEstimate, Dataset, Region, SensitivityPair, VarianceMethod};
use crate::nuisance::cross_fit;
use crate::simulate::simulate_dataset;

#[derive(Debug, Parser)]
#[command(name = "fusion-bounds", version, about = "Sensitivity bounds for treatment effects from fused experimental and observational data")]
struct Cli {
    /// Worker threads for grid cells and bootstrap replicates.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file or run manifest; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset.
    Simulate(SimulateArgs),
    /// Bias-corrected bounds at a single (rho, gamma).
    Bounds(BoundsArgs),
    /// Breakdown frontier over a (rho, gamma) grid.
    Frontier(FrontierArgs),
    /// Compatibility test at a single (rho, gamma).
    Compat(CompatArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VarianceArg {
    Eif,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CompatModeArg {
    Corrected,
    Paper,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Simulation scenario (base, larger-tau, smaller-tau, larger-u, smaller-u).
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Dataset CSV with a header row.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Conjunction of column comparisons, e.g. "x1 > 1 && s = 0".
    #[arg(long)]
    subgroup: Option<String>,
    /// Translate outcomes so the smallest equals MARGIN.
    #[arg(long, value_name = "MARGIN", num_args = 0..=1, default_missing_value = "1")]
    shift_outcomes: Option<f64>,
    #[arg(long)]
    s_column: Option<String>,
    #[arg(long)]
    t_column: Option<String>,
    #[arg(long)]
    y_column: Option<String>,
    /// Comma-separated covariate columns (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct EstArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k_folds: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long, value_enum)]
    compat_mode: Option<CompatModeArg>,
    #[arg(long)]
    clip_epsilon: Option<f64>,
    /// Known P(T=1 | S=1) used instead of an estimated experimental propensity.
    #[arg(long)]
    known_exp_propensity: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Output CSV path.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the latent U and C columns to `<output>.internals.csv`.
    #[arg(long)]
    with_internals: bool,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    est: EstArgs,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    variance: Option<VarianceArg>,
    #[arg(long)]
    bootstrap_b: Option<usize>,
    /// Directory for bounds.json, manifest.json and optional dumps.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write per-unit bound components and influence terms to audit.json.
    #[arg(long)]
    audit: bool,
    /// Write fitted nuisances to nuisances.csv.
    #[arg(long)]
    dump_nuisances: bool,
}

#[derive(Debug, Args)]
struct FrontierArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    est: EstArgs,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    rho_max: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long)]
    r_compat: Option<usize>,
    #[arg(long, value_enum)]
    variance: Option<VarianceArg>,
    #[arg(long)]
    bootstrap_b: Option<usize>,
    /// Output directory for grid.csv, grid.json and manifest.json.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompatArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    est: EstArgs,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, visible_alias = "r")]
    r_compat: Option<usize>,
    /// Report both p-value formulas on the same resamples.
    #[arg(long)]
    both_modes: bool,
    /// Print the full result and manifest as JSON instead of a summary.
    #[arg(long)]
    json: bool,
    /// Directory for compat.json and manifest.json.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SimArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.scenario.is_some() {
            cfg.scenario = self.scenario.clone();
        }
        set(&mut cfg.n, self.n);
        if self.beta.is_some() {
            cfg.beta = self.beta;
        }
        if self.tau.is_some() {
            cfg.tau = self.tau;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
    }
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        self.sim.apply(cfg);
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        if self.subgroup.is_some() {
            cfg.subgroup = self.subgroup.clone();
        }
        if self.shift_outcomes.is_some() {
            cfg.shift_outcomes = self.shift_outcomes;
        }
        set(&mut cfg.s_column, self.s_column.clone());
        set(&mut cfg.t_column, self.t_column.clone());
        set(&mut cfg.y_column, self.y_column.clone());
        if self.covariates.is_some() {
            cfg.covariates = self.covariates.clone();
        }
    }
}

impl EstArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.alpha, self.alpha);
        set(&mut cfg.k, self.k_folds);
        set(&mut cfg.confidence, self.confidence);
        set(
            &mut cfg.compat_mode,
            self.compat_mode.map(|m| match m {
                CompatModeArg::Corrected => CompatMode::CorrectedLeftTail,
                CompatModeArg::Paper => CompatMode::PaperLiteral,
            }),
        );
        set(&mut cfg.clip_epsilon, self.clip_epsilon);
        if self.known_exp_propensity.is_some() {
            cfg.known_exp_propensity = self.known_exp_propensity;
        }
    }
}

fn variance(v: Option<VarianceArg>) -> Option<VarianceMethod> {
    v.map(|v| match v {
        VarianceArg::Eif => VarianceMethod::EifSampleVariance,
        VarianceArg::Bootstrap => VarianceMethod::Bootstrap,
    })
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_error("UsageError", &e.to_string(), 2);
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            report_error(e.code(), &e.to_string(), e.exit_code());
            e.exit_code()
        }
    }
}

fn report_error(code: &str, message: &str, exit_code: i32) {
    let body = serde_json::json!({
        "error": { "code": code, "message": message.trim(), "exit_code": exit_code }
    });
    eprintln!("{body}");
    println!("error [{code}]: {}", message.lines().next().unwrap_or("").trim());
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let command = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Bounds(_) => "bounds",
        Command::Frontier(_) => "frontier",
        Command::Compat(_) => "compat",
    };
    let mut extra = Extra::default();
    match cli.command {
        Command::Simulate(a) => {
            a.sim.apply(&mut cfg);
            if a.output.is_some() {
                cfg.output = a.output;
            }
            extra.with_internals = a.with_internals;
        }
        Command::Bounds(a) => {
            a.data.apply(&mut cfg);
            a.est.apply(&mut cfg);
            set(&mut cfg.rho, a.rho);
            set(&mut cfg.gamma, a.gamma);
            set(&mut cfg.variance_method, variance(a.variance));
            set(&mut cfg.bootstrap_b, a.bootstrap_b);
            if a.output.is_some() {
                cfg.output = a.output;
            }
            extra.audit = a.audit;
            extra.dump_nuisances = a.dump_nuisances;
        }
        Command::Frontier(a) => {
            a.data.apply(&mut cfg);
            a.est.apply(&mut cfg);
            set(&mut cfg.grid_n, a.grid_n);
            set(&mut cfg.rho_max, a.rho_max);
            set(&mut cfg.gamma_max, a.gamma_max);
            set(&mut cfg.r_compat, a.r_compat);
            set(&mut cfg.variance_method, variance(a.variance));
            set(&mut cfg.bootstrap_b, a.bootstrap_b);
            if a.output.is_some() {
                cfg.output = a.output;
            }
        }
        Command::Compat(a) => {
            a.data.apply(&mut cfg);
            a.est.apply(&mut cfg);
            set(&mut cfg.rho, a.rho);
            set(&mut cfg.gamma, a.gamma);
            set(&mut cfg.r_compat, a.r_compat);
            if a.output.is_some() {
                cfg.output = a.output;
            }
            extra.both_modes = a.both_modes;
            extra.json = a.json;
        }
    }
    cfg.resolve_seed()?;

    let job = || -> Result<()> {
        match command {
            "simulate" => cmd_simulate(&cfg, &extra, cli.threads),
            "bounds" => cmd_bounds(&cfg, &extra, cli.threads),
            "frontier" => cmd_frontier(&cfg, cli.threads),
            _ => cmd_compat(&cfg, &extra, cli.threads),
        }
    };
    match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

#[derive(Debug, Default)]
struct Extra {
    with_internals: bool,
    audit: bool,
    dump_nuisances: bool,
    both_modes: bool,
    json: bool,
}

fn new_manifest(command: &str, cfg: &RunConfig, threads: Option<usize>) -> RunManifest {
    let mut m = RunManifest::new(command, cfg);
    m.threads = threads;
    m.seeds.insert("run".into(), cfg.seed());
    m
}

fn finish_manifest(mut m: RunManifest, clock: &StageClock, path: &Path) -> Result<RunManifest> {
    m.stage_timings = clock.stages.clone();
    m.wall_clock_seconds = clock.total();
    m.outputs.push(path.to_path_buf());
    io::write_file(path, &m.to_json()?)?;
    Ok(m)
}

/// Loads the input CSV or simulates the configured scenario.
fn load_data(cfg: &RunConfig, manifest: &mut RunManifest) -> Result<Dataset> {
    cfg.check_data_source()?;
    let dataset = match &cfg.input {
        Some(path) => io::read_dataset(path, &cfg.column_mapping(), cfg.outcome_policy())?,
        None => {
            let sim = cfg.sim_config()?;
            manifest.seeds.insert("simulate".into(), sim.seed);
            let ds = simulate_dataset(&sim)?.dataset;
            match cfg.shift_outcomes {
                Some(margin) => shift_outcomes(ds, margin)?.0,
                None => ds,
            }
        }
    };
    manifest.dataset_fingerprint = Some(dataset.fingerprint());
    Ok(dataset)
}

/// Applies the subgroup filter, returning the restricted dataset.
fn restrict(cfg: &RunConfig, dataset: Dataset) -> Result<Dataset> {
    match cfg.subgroup_filter()? {
        Some(f) => {
            let idx = f.indices(&dataset)?;
            if idx.is_empty() {
                return Err(Error::EmptySubgroup);
            }
            dataset.select(&idx)
        }
        None => Ok(dataset),
    }
}

fn cmd_simulate(cfg: &RunConfig, extra: &Extra, threads: Option<usize>) -> Result<()> {
    let mut clock = StageClock::default();
    let mut manifest = new_manifest("simulate", cfg, threads);
    let sim_cfg = cfg.sim_config()?;
    manifest.seeds.insert("simulate".into(), sim_cfg.seed);
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| Error::InvalidArgument("simulate needs --output".into()))?;
    let sim = simulate_dataset(&sim_cfg)?;
    clock.lap("simulate");
    io::write_dataset(&sim.dataset, &out)?;
    manifest.outputs.push(out.clone());
    manifest.dataset_fingerprint = Some(sim.dataset.fingerprint());
    if extra.with_internals {
        let internals = sim.internals.as_ref().ok_or(Error::InternalsUnavailable)?;
        let p = sibling(&out, "internals.csv");
        io::write_file(&p, &io::internals_to_csv(internals)?)?;
        manifest.outputs.push(p);
    }
    clock.lap("write");
    finish_manifest(manifest, &clock, &sibling(&out, "manifest.json"))?;
    println!(
        "simulated {} units (scenario {}, beta {}, tau {}, seed {}, redraws {}) -> {}",
        sim.dataset.n(),
        cfg.scenario()?.name(),
        sim_cfg.beta,
        sim_cfg.tau,
        sim_cfg.seed,
        sim.redraws,
        out.display()
    );
    Ok(())
}

/// `dir/d.csv` -> `dir/d.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Serialize)]
struct BoundsOutput<'a> {
    rho: f64,
    gamma: f64,
    alpha: f64,
    n_units: usize,
    subgroup: Option<&'a str>,
    estimate: &'a BoundEstimate,
    manifest: &'a RunManifest,
}

fn cmd_bounds(cfg: &RunConfig, extra: &Extra, threads: Option<usize>) -> Result<()> {
    let mut clock = StageClock::default();
    let mut manifest = new_manifest("bounds", cfg, threads);
    let pair = SensitivityPair::new(cfg.rho, cfg.gamma, cfg.alpha)?;
    let dataset = restrict(cfg, load_data(cfg, &mut manifest)?)?;
    clock.lap("load");
    let fcfg = cfg.frontier_config();
    let cf = fcfg.cross_fit_config();
    manifest.seeds.insert("cross_fit".into(), cf.seed);
    let nuisances = cross_fit(&dataset, &cf)?;
    manifest.nuisance_fingerprint = Some(nuisances.fingerprint());
    clock.lap("cross-fit");
    let mut estimate = bias_corrected_bounds(&dataset, &nuisances, &pair, cfg.confidence, None)?;
    if cfg.variance_method == VarianceMethod::Bootstrap {
        manifest.seeds.insert("bootstrap".into(), cfg.seed());
        let reps = bootstrap_replicates(&dataset, &cf, cfg.bootstrap_b, cfg.seed(), |d, nuis| {
            let e = bias_corrected_bounds(d, nuis, &pair, cfg.confidence, None)?;
            Ok((e.theta_lb_bc, e.theta_ub_bc))
        })?;
        estimate = with_bootstrap_variance(&estimate, &reps);
    }
    clock.lap("bounds");

    if let Some(dir) = &cfg.output {
        if extra.audit {
            let p = dir.join("audit.json");
            io::write_file(&p, &serde_json::to_string_pretty(&unit_audit(&dataset, &nuisances, &pair, None)?)?)?;
            manifest.outputs.push(p);
        }
        if extra.dump_nuisances {
            let p = dir.join("nuisances.csv");
            io::write_file(&p, &io::nuisances_to_csv(&nuisances)?)?;
            manifest.outputs.push(p);
        }
        let p = dir.join("bounds.json");
        io::write_file(&p, &serde_json::to_string_pretty(&estimate)?)?;
        manifest.outputs.push(p);
        clock.lap("write");
        manifest = finish_manifest(manifest, &clock, &dir.join("manifest.json"))?;
    } else {
        if extra.audit || extra.dump_nuisances {
            return Err(Error::InvalidArgument("--audit and --dump-nuisances need --output".into()));
        }
        manifest.stage_timings = clock.stages.clone();
        manifest.wall_clock_seconds = clock.total();
    }
    let out = BoundsOutput {
        rho: cfg.rho,
        gamma: cfg.gamma,
        alpha: cfg.alpha,
        n_units: dataset.n(),
        subgroup: cfg.subgroup.as_deref(),
        estimate: &estimate,
        manifest: &manifest,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_frontier(cfg: &RunConfig, threads: Option<usize>) -> Result<()> {
    let mut clock = StageClock::default();
    let mut manifest = new_manifest("frontier", cfg, threads);
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("frontier-out"));
    let dataset = restrict(cfg, load_data(cfg, &mut manifest)?)?;
    clock.lap("load");
    let fcfg = cfg.frontier_config();
    manifest.seeds.insert("cross_fit".into(), fcfg.cross_fit_config().seed);
    manifest.seeds.insert("compat".into(), fcfg.seed);
    if fcfg.variance_method == VarianceMethod::Bootstrap {
        manifest.seeds.insert("bootstrap".into(), fcfg.seed);
    }
    let grid = compute_frontier(&dataset, &fcfg, None)?;
    manifest.nuisance_fingerprint = Some(grid.nuisance_fingerprint.clone());
    clock.lap("frontier");
    for (name, text) in [("grid.csv", grid.to_csv()?), ("grid.json", grid.to_json()?)] {
        let p = dir.join(name);
        io::write_file(&p, &text)?;
        manifest.outputs.push(p);
    }
    clock.lap("write");
    finish_manifest(manifest, &clock, &dir.join("manifest.json"))?;

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "frontier: {}x{} grid, rho in [0, {}], gamma in [0, {}], {} units -> {}",
        fcfg.grid_n,
        fcfg.grid_n,
        fcfg.rho_max,
        fcfg.gamma_max,
        grid.n_units,
        dir.display()
    )?;
    writeln!(stdout, "{:<14}{:>6}", "region", "cells")?;
    for region in Region::ALL {
        writeln!(stdout, "{:<14}{:>6}", region.as_str(), grid.count(region))?;
    }
    writeln!(stdout, "{:<14}{:>6}", "total", grid.cells.len())?;
    Ok(())
}

#[derive(Serialize)]
struct CompatOutput<'a> {
    rho: f64,
    gamma: f64,
    n_units: usize,
    compatible: bool,
    arms: Vec<CompatResult>,
    manifest: &'a RunManifest,
}

fn cmd_compat(cfg: &RunConfig, extra: &Extra, threads: Option<usize>) -> Result<()> {
    let mut clock = StageClock::default();
    let mut manifest = new_manifest("compat", cfg, threads);
    let pair = SensitivityPair::new(cfg.rho, cfg.gamma, cfg.alpha)?;
    if cfg.r_compat < crate::compat::MIN_RESAMPLES {
        return Err(Error::RTooSmall { r: cfg.r_compat });
    }
    let dataset = restrict(cfg, load_data(cfg, &mut manifest)?)?;
    clock.lap("load");
    let cf = cfg.frontier_config().cross_fit_config();
    manifest.seeds.insert("cross_fit".into(), cf.seed);
    manifest.seeds.insert("compat".into(), cfg.seed());
    let nuisances = cross_fit(&dataset, &cf)?;
    manifest.nuisance_fingerprint = Some(nuisances.fingerprint());
    clock.lap("cross-fit");
    let mut arms = Vec::new();
    for t in 0..2u8 {
        let sample = overlap_values(&nuisances, &pair, t, None)?;
        let seed = arm_seed(cfg.seed(), t);
        if extra.both_modes {
            arms.extend(compat_test_both_modes(&sample, cfg.r_compat, seed, cfg.confidence)?);
        } else {
            arms.push(compat_test(&sample, cfg.r_compat, seed, cfg.compat_mode, cfg.confidence)?);
        }
    }
    clock.lap("compat");
    let decisive: Vec<&CompatResult> = arms.iter().filter(|r| r.formula_mode == cfg.compat_mode).collect();
    let compatible = decisive.iter().all(|r| r.compatible);
    if let Some(dir) = &cfg.output {
        let p = dir.join("compat.json");
        io::write_file(&p, &serde_json::to_string_pretty(&arms)?)?;
        manifest.outputs.push(p);
        manifest = finish_manifest(manifest, &clock, &dir.join("manifest.json"))?;
    } else {
        manifest.stage_timings = clock.stages.clone();
        manifest.wall_clock_seconds = clock.total();
    }
    let out = CompatOutput {
        rho: cfg.rho,
        gamma: cfg.gamma,
        n_units: dataset.n(),
        compatible,
        arms,
        manifest: &manifest,
    };
    let mut stdout = std::io::stdout().lock();
    if extra.json {
        writeln!(stdout, "{}", serde_json::to_string_pretty(&out)?)?;
        return Ok(());
    }
    for r in &out.arms {
        writeln!(
            stdout,
            "t={} mode={} p={:.4} threshold={:.4} -> {}",
            r.t,
            r.formula_mode.as_str(),
            r.p_value,
            r.decision_threshold,
            if r.compatible { "compatible" } else { "incompatible" }
        )?;
    }
    writeln!(
        stdout,
        "decision ({}): {}",
        cfg.compat_mode.as_str(),
        if compatible { "compatible" } else { "incompatible" }
    )?;
    Ok(())
}
