//! The `stwave` command line: deterministic runs, ensembles, parameter
//! sweeps and replay of stored trajectories. Every subcommand writes CSV
//! files into `--out-dir` and is deterministic given the config and seed.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Kind, RunConfig};
use crate::ensemble::{
    resolve_speed, run_realizations, summarize, sweep, weak_error_lab_frame, EnsembleConfig, EnsembleSummary,
    RealizationResult, RunKind,
};
use crate::error::{Error, Result};
use crate::model::{theoretical_speed, Interpretation, ModelSpec};
use crate::table::{self, Row, RunInfo};
use crate::trajectory::{summarize_trajectories, Trajectory};

pub const THREADS_ENV: &str = "STWAVE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stwave", version, about = "Stochastic travelling waves of the Nagumo equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; defaults are used for missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Overrides the number of realizations.
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// PDE and frozen PDAE runs, with the theoretical speed.
    Deterministic(Common),
    /// SPDE and/or SPDAE ensembles, histograms and mean profiles.
    Ensemble(Common),
    /// One ensemble per (alpha, mu^2, xi, interpretation).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated mu^2 values; overrides `sweep_mu2`.
        #[arg(long, value_delimiter = ',')]
        mu2: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        xi: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alpha: Option<Vec<f64>>,
        /// `ito`, `stratonovich` or both, comma-separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_interpretation)]
        interpretations: Option<Vec<Interpretation>>,
    },
    /// Recompute the estimators of stored trajectories.
    Replay {
        /// Trajectory files; files of the same run kind are summarized together.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Start of the averaging window (default: as stored).
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn parse_interpretation(s: &str) -> std::result::Result<Interpretation, String> {
    match s {
        "ito" => Ok(Interpretation::Ito),
        "stratonovich" => Ok(Interpretation::Stratonovich),
        _ => Err(format!("expected ito or stratonovich, got {s:?}")),
    }
}

impl Common {
    pub fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.realizations {
            cfg.realizations = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Run a parsed command line; returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Deterministic(c) => with_threads(c.threads, || cmd_deterministic(&c.load()?, &c.out_dir)),
        Command::Ensemble(c) => with_threads(c.threads, || cmd_ensemble(&c.load()?, &c.out_dir)),
        Command::Sweep {
            common,
            mu2,
            xi,
            alpha,
            interpretations,
        } => with_threads(common.threads, || {
            let mut cfg = common.load()?;
            cfg.sweep_mu2 = mu2.unwrap_or(cfg.sweep_mu2);
            cfg.sweep_xi = xi.unwrap_or(cfg.sweep_xi);
            cfg.sweep_alpha = alpha.unwrap_or(cfg.sweep_alpha);
            cfg.sweep_interpretations = interpretations.unwrap_or(cfg.sweep_interpretations);
            cmd_sweep(&cfg, &common.out_dir)
        }),
        Command::Replay { files, t0, out_dir } => cmd_replay(&files, t0, &out_dir),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }
}

fn info(run_id: &str, model: ModelSpec, xi: f64, seed: u64) -> RunInfo {
    RunInfo {
        run_id: run_id.to_string(),
        model,
        xi,
        seed,
    }
}

pub fn cmd_deterministic(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Output::new(out_dir)?;
    let mut det = cfg.clone();
    det.realizations = 1;
    det.mu = 0.0;
    det.nu = 0.0;
    let mut rows = Vec::new();
    let theory = theoretical_speed(cfg.alpha, cfg.k0)?;
    let model = det.model();
    rows.push(info("theory", model, cfg.xi, cfg.seed).row("speed", Some(theory.value), None));
    for kind in [RunKind::Pde, RunKind::Pdae] {
        let ec = det.ensemble(kind.clone())?;
        let results = run_realizations(&ec)?;
        let s = summarize(&ec, &results)?;
        rows.extend(table::summary_rows(&info(kind.name(), model, cfg.xi, cfg.seed), &s));
        table::write_profile(out.file(&format!("profile_{}.csv", kind.name()))?, &ec.grid, &results[0].final_profile)?;
    }
    table::write_rows(out.file("deterministic.csv")?, &rows)?;
    Ok(out.written)
}

/// Runs, stores and tabulates one ensemble. An ensemble with no completed
/// realization is tabulated as failed and has no summary.
fn run_and_store(
    cfg: &RunConfig,
    ec: &EnsembleConfig,
    out: &mut Output,
    rows: &mut Vec<Row>,
) -> Result<(Vec<RealizationResult>, Option<EnsembleSummary>)> {
    let name = ec.kind.name();
    let results = run_realizations(ec)?;
    if cfg.trajectories {
        for r in &results {
            Trajectory::from_result(ec, r)?.write(out.file(&format!("trajectories/{name}_{:05}.stw", r.index))?)?;
        }
    }
    match summarize(ec, &results) {
        Ok(s) => {
            write_summary(cfg, &s, name, out, rows)?;
            Ok((results, Some(s)))
        }
        Err(Error::AllRealizationsFailed {
            realizations,
            blown_up,
            extinct,
        }) => {
            let info = info(name, cfg.model(), cfg.xi, cfg.seed);
            rows.extend(table::all_failed_rows(&info, realizations, blown_up, extinct));
            Ok((results, None))
        }
        Err(e) => Err(e),
    }
}

fn write_summary(cfg: &RunConfig, s: &EnsembleSummary, name: &str, out: &mut Output, rows: &mut Vec<Row>) -> Result<()> {
    rows.extend(table::summary_rows(&info(name, cfg.model(), cfg.xi, cfg.seed), s));
    if let Some(h) = &s.lambda_histogram {
        table::write_histogram(out.file(&format!("lambda_histogram_{name}.csv"))?, h)?;
    }
    table::write_profile(out.file(&format!("mean_profile_{name}.csv"))?, &s.grid, &s.mean_profile)?;
    let times: Vec<f64> = (1..=s.mean_lambda.len()).map(|n| n as f64 * cfg.dt).collect();
    table::write_series(out.file(&format!("mean_lambda_{name}.csv"))?, &times, &s.mean_lambda, "lambda")?;
    Ok(())
}

pub fn cmd_ensemble(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Output::new(out_dir)?;
    let mut rows = Vec::new();
    match cfg.kind {
        Kind::Pde => drop(run_and_store(cfg, &cfg.ensemble(RunKind::Pde)?, &mut out, &mut rows)?),
        Kind::Pdae => drop(run_and_store(cfg, &cfg.ensemble(RunKind::Pdae)?, &mut out, &mut rows)?),
        Kind::Spde => drop(run_and_store(cfg, &cfg.ensemble(RunKind::Spde)?, &mut out, &mut rows)?),
        Kind::Spdae => drop(run_and_store(cfg, &cfg.ensemble(RunKind::Spdae)?, &mut out, &mut rows)?),
        Kind::Both => {
            let free_cfg = cfg.ensemble(RunKind::Spde)?;
            let (free, _) = run_and_store(cfg, &free_cfg, &mut out, &mut rows)?;
            let (_, frozen) = run_and_store(cfg, &cfg.ensemble(RunKind::Spdae)?, &mut out, &mut rows)?;
            let info = info("spde-vs-spdae", cfg.model(), cfg.xi, cfg.seed);
            match frozen.map(|f| weak_error_lab_frame(&free_cfg, &free, &f)) {
                Some(Ok(err)) => rows.push(info.row("weak_error", Some(err), None)),
                Some(Err(Error::AllRealizationsFailed { .. })) | None => {
                    rows.push(table::failure_row(&info, "no completed realizations to compare"))
                }
                Some(Err(e)) => return Err(e),
            }
        }
        Kind::FixedSpeed => {
            let (prior, _) = run_and_store(cfg, &cfg.ensemble(RunKind::Spdae)?, &mut out, &mut rows)?;
            let speed = resolve_speed(&cfg.speed_source(), &prior, true)?;
            run_and_store(cfg, &cfg.ensemble(RunKind::FixedSpeed(speed))?, &mut out, &mut rows)?;
        }
    }
    table::write_rows(out.file("results.csv")?, &rows)?;
    Ok(out.written)
}

pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let base = cfg.ensemble(RunKind::Spde)?;
    let cells = sweep(&base, &cfg.sweep_mu2, &cfg.sweep_xi, &cfg.sweep_alpha, &cfg.sweep_interpretations)?;
    let mut out = Output::new(out_dir)?;
    let rows = table::sweep_rows("sweep", cfg.nu, cfg.seed, &cells);
    table::write_rows(out.file("sweep.csv")?, &rows)?;
    Ok(out.written)
}

/// Files of one run kind are summarized together, in the order the kinds
/// first appear on the command line.
pub fn cmd_replay(files: &[PathBuf], t0: Option<f64>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: Vec<(&'static str, Vec<Trajectory>)> = Vec::new();
    for f in files {
        let t = Trajectory::read(std::io::BufReader::new(File::open(f)?))
            .map_err(|e| annotate(e, f))?;
        let name = t.header.kind.name();
        match groups.iter_mut().find(|(k, _)| *k == name) {
            Some((_, v)) => v.push(t),
            None => groups.push((name, vec![t])),
        }
    }
    let mut out = Output::new(out_dir)?;
    let mut rows = Vec::new();
    for (name, trajs) in &groups {
        let h = &trajs[0].header;
        let s = summarize_trajectories(trajs, t0)?;
        rows.extend(table::summary_rows(&info(name, h.model, h.xi, h.seed), &s));
    }
    table::write_rows(out.file("replay.csv")?, &rows)?;
    Ok(out.written)
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
        e => e,
    }
}
