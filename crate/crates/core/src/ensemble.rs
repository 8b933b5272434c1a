//! Monte-Carlo ensembles of realizations and their summaries.
//!
//! Realizations run in parallel on the current rayon pool. Each draws its
//! noise from its own counter-based stream, and results are reduced in
//! realization order, so summaries do not depend on the number of workers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{interpolate_clamped, Grid};
use crate::metrics::{
    interval_average, level_crossing, linear_fit, speed_linfit, speed_secant, template_shift,
    template_speed_series, LevelSet, LevelSetTrack, ShiftTemplate,
};
use crate::model::{Interpretation, ModelSpec, ProfileSpec};
use crate::noise::{rng_stream, NoiseModel, NoiseSampler, Truncation};
use crate::stepper::{Advection, Scheme, SolverState, Status, Stepper, StepperOptions};

#[derive(Debug, Clone, PartialEq)]
pub enum SpeedSource {
    /// Each realization moves at its own time-averaged speed from the prior run.
    PerRealizationLambda,
    /// Every realization follows the ensemble-mean instantaneous speed `E lambda(t)`.
    EnsembleMeanLambda,
    /// Every realization moves at the ensemble mean of the time-averaged speed.
    EnsembleMeanLambdaAverage,
    Constant(f64),
}

/// Frame speed of a fixed-speed run, already resolved to numbers.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameSpeed {
    Constant(f64),
    /// Indexed by realization.
    PerRealization(Vec<f64>),
    /// Indexed by step, `speeds[n]` acts over `[t_n, t_{n+1}]`.
    Series(Vec<f64>),
}

impl FrameSpeed {
    fn at(&self, realization: usize, step: usize) -> f64 {
        match self {
            FrameSpeed::Constant(c) => *c,
            FrameSpeed::PerRealization(v) => v[realization],
            FrameSpeed::Series(v) => v[step],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunKind {
    Pde,
    Pdae,
    Spde,
    Spdae,
    FixedSpeed(FrameSpeed),
}

impl RunKind {
    pub fn name(&self) -> &'static str {
        match self {
            RunKind::Pde => "pde",
            RunKind::Pdae => "pdae",
            RunKind::Spde => "spde",
            RunKind::Spdae => "spdae",
            RunKind::FixedSpeed(_) => "fixed-speed",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, RunKind::Pde | RunKind::Pdae)
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self, RunKind::Pdae | RunKind::Spdae)
    }
}

/// Number of noise modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModes {
    /// `J = L / (2 xi)`, capped at the grid: the band-limited noise then has
    /// the pointwise variance `C(0) = 1 / (2 xi)` of the covariance kernel.
    Matched,
    /// `J = M - 1`, the highest mode the grid resolves.
    Grid,
    Auto,
    Fixed(usize),
}

/// Coefficient `c0` of the drift correction `c0 g'(u) g(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionSource {
    /// Half the pointwise variance of the sampled noise.
    Spectral,
    /// The kernel value `C(0) = 1 / (2 xi)`.
    Kernel,
}

/// Where `c(T)` of each free realization is moved before averaging profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlignReference {
    TemplateCenter,
    At(f64),
    None,
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub realizations: usize,
    pub seed: u64,
    pub kind: RunKind,
    pub model: ModelSpec,
    pub grid: Grid,
    pub xi: f64,
    pub noise_modes: NoiseModes,
    pub dt: f64,
    pub t_final: f64,
    pub t0: f64,
    /// Keep the full profile every `snapshot_stride` steps (0 keeps none).
    pub snapshot_stride: usize,
    pub template: ProfileSpec,
    pub initial: ProfileSpec,
    pub delta: f64,
    pub scheme: Scheme,
    pub advection: Advection,
    pub correction: CorrectionSource,
    pub align: AlignReference,
    pub blowup_threshold: f64,
}

impl EnsembleConfig {
    pub fn steps(&self) -> Result<usize> {
        let n = self.t_final / self.dt;
        let rounded = n.round();
        if !(rounded >= 1.0) || (n - rounded).abs() > 1e-8 * n.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "T = {} is not a positive multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.realizations == 0 {
            return Err(Error::InvalidParameter("need at least one realization".into()));
        }
        if !(self.t0 >= 0.0 && self.t0 < self.t_final) {
            return Err(Error::InvalidParameter(format!(
                "t0 = {} must lie in [0, T = {})",
                self.t0, self.t_final
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidParameter(format!("delta = {} not in (0, 1/2)", self.delta)));
        }
        if self.kind.is_stochastic() && !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidParameter(format!("xi must be positive, got {}", self.xi)));
        }
        let steps = self.steps()?;
        match &self.kind {
            RunKind::FixedSpeed(FrameSpeed::PerRealization(v)) if v.len() != self.realizations => {
                Err(Error::InvalidParameter("one frame speed per realization needed".into()))
            }
            RunKind::FixedSpeed(FrameSpeed::Series(v)) if v.len() < steps => {
                Err(Error::InvalidParameter("one frame speed per step needed".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let truncation = match self.noise_modes {
            NoiseModes::Matched => Truncation::Fixed(matched_modes(&self.grid, self.xi)),
            NoiseModes::Grid => Truncation::Fixed(self.grid.points() - 1),
            NoiseModes::Auto => Truncation::Auto,
            NoiseModes::Fixed(j) => Truncation::Fixed(j),
        };
        NoiseModel::new(self.grid.length(), self.xi, truncation)
    }
}

/// `J = round(L / (2 xi))`, at most `M - 1`.
pub fn matched_modes(grid: &Grid, xi: f64) -> usize {
    let j = (grid.length() / (2.0 * xi)).round();
    (j.max(0.0) as usize).min(grid.points() - 1)
}

/// Per-step record of one realization. Missing values are NaN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RealizationSeries {
    pub times: Vec<f64>,
    /// Frame speed over the step ending at `times[n]` (0 at `n = 0`).
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Template shift within the frame.
    pub shift: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub width: Vec<f64>,
}

impl RealizationSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn track(&self, which: LevelSet, delta: f64) -> LevelSetTrack {
        let z = match which {
            LevelSet::A => &self.a,
            LevelSet::B => &self.b,
            LevelSet::C => &self.c,
        };
        let mut track = LevelSetTrack::new(which.level(delta), which.convention());
        for (t, x) in self.times.iter().zip(z) {
            track.push(*t, x.is_finite().then_some(*x));
        }
        track
    }
}

/// Quantities estimated from one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    LambdaA,
    LambdaB,
    LambdaC,
    LambdaFitA,
    LambdaFitB,
    LambdaFitC,
    LambdaMin,
    LambdaGamma,
    /// Temporal variance of the instantaneous speed over `[t0, T]`.
    LambdaVar,
    /// Time-averaged width over `[t0, T]`.
    Width,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::LambdaA,
        Metric::LambdaB,
        Metric::LambdaC,
        Metric::LambdaFitA,
        Metric::LambdaFitB,
        Metric::LambdaFitC,
        Metric::LambdaMin,
        Metric::LambdaGamma,
        Metric::LambdaVar,
        Metric::Width,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::LambdaA => "lambda_a",
            Metric::LambdaB => "lambda_b",
            Metric::LambdaC => "lambda_c",
            Metric::LambdaFitA => "lambda_fit_a",
            Metric::LambdaFitB => "lambda_fit_b",
            Metric::LambdaFitC => "lambda_fit_c",
            Metric::LambdaMin => "lambda_min",
            Metric::LambdaGamma => "lambda_gamma",
            Metric::LambdaVar => "lambda_var",
            Metric::Width => "width",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Per-metric values, `None` where the estimator could not be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimates([Option<f64>; 10]);

impl Estimates {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.0[m as usize]
    }

    fn set(&mut self, m: Metric, v: Option<f64>) {
        self.0[m as usize] = v.filter(|v| v.is_finite());
    }
}

/// Recompute every estimator from a stored series.
pub fn estimate(series: &RealizationSeries, frozen: bool, t0: f64, delta: f64) -> Estimates {
    let mut e = Estimates::default();
    let tracks = LevelSet::ALL.map(|w| series.track(w, delta));
    for (i, track) in tracks.iter().enumerate() {
        let (secant, fit) = [
            (Metric::LambdaA, Metric::LambdaFitA),
            (Metric::LambdaB, Metric::LambdaFitB),
            (Metric::LambdaC, Metric::LambdaFitC),
        ][i];
        e.set(secant, speed_secant(track, t0).ok().map(|s| s.value));
        e.set(fit, speed_linfit(track, t0).ok().map(|s| s.value));
    }
    if series.len() >= 2 {
        if frozen {
            if let Ok(avg) = interval_average(&series.times, &series.lambda[1..], t0) {
                e.set(Metric::LambdaMin, Some(avg.value));
                e.set(Metric::LambdaVar, avg.lambda_variance);
            }
            let i0 = first_at(&series.times, t0);
            e.set(
                Metric::LambdaGamma,
                linear_fit(&series.times[i0..], &series.gamma[i0..]).map(|f| f.0),
            );
        } else {
            let position: Vec<f64> = series.gamma.iter().zip(&series.shift).map(|(g, y)| g + y).collect();
            let i0 = first_at(&series.times, t0);
            if position[i0..].iter().all(|p| p.is_finite()) {
                if let Ok(s) = template_speed_series(&series.times, &position, t0) {
                    e.set(Metric::LambdaMin, Some(s.lambda_min.value));
                    e.set(Metric::LambdaVar, s.lambda_min.lambda_variance);
                    e.set(Metric::LambdaGamma, Some(s.lambda_gamma.value));
                }
            }
        }
    }
    let i0 = first_at(&series.times, t0);
    let widths = &series.width[i0.min(series.width.len())..];
    if !widths.is_empty() && widths.iter().all(|w| w.is_finite()) {
        e.set(Metric::Width, Some(widths.iter().sum::<f64>() / widths.len() as f64));
    }
    e
}

fn first_at(times: &[f64], t0: f64) -> usize {
    let eps = 1e-9 * t0.abs().max(1.0);
    times.partition_point(|t| *t < t0 - eps).min(times.len().saturating_sub(1))
}

#[derive(Debug, Clone)]
pub struct RealizationResult {
    pub index: usize,
    pub status: Status,
    pub series: RealizationSeries,
    pub estimates: Estimates,
    /// Full-grid profile at the last accepted step.
    pub final_profile: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// Steps at which the template shift had several candidate roots.
    pub ambiguous_shifts: usize,
    /// Steps at which no template shift was found.
    pub failed_shifts: usize,
}

impl RealizationResult {
    pub fn completed(&self) -> bool {
        self.status == Status::Done
    }
}

/// Shared, read-only data for all realizations of one ensemble.
pub struct Runner {
    config: EnsembleConfig,
    stepper: Stepper<ModelSpec>,
    sampler: Option<NoiseSampler>,
    shift_template: Option<ShiftTemplate>,
    initial: Vec<f64>,
    steps: usize,
}

impl Runner {
    pub fn new(config: EnsembleConfig) -> Result<Self> {
        config.validate()?;
        let steps = config.steps()?;
        let grid = config.grid.clone();
        let template = grid.sample(|x| config.template.front(x));
        let initial = grid.sample(|x| config.initial.front(x));
        let mut options = StepperOptions::new(config.dt);
        options.advection = config.advection;
        options.blowup_threshold = config.blowup_threshold;
        let mut stepper = Stepper::new(grid.clone(), config.model, options)?;
        if config.kind.is_frozen() {
            stepper = stepper.with_template(&template)?;
        }
        let sampler = if config.kind.is_stochastic() && !config.model.is_noiseless() {
            let sampler = NoiseSampler::new(config.noise_model()?, &grid)?;
            let half: Vec<f64> = match config.correction {
                CorrectionSource::Spectral => {
                    sampler.pointwise_variance().iter().map(|v| 0.5 * v).collect()
                }
                CorrectionSource::Kernel => vec![0.5 / config.xi; grid.points()],
            };
            stepper = stepper.with_drift_correction(&half)?;
            Some(sampler)
        } else {
            None
        };
        let shift_template = if config.kind.is_frozen() {
            None
        } else {
            Some(ShiftTemplate::new(&grid, &template)?)
        };
        Ok(Self {
            config,
            stepper,
            sampler,
            shift_template,
            initial,
            steps,
        })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn run(&self, index: usize) -> Result<RealizationResult> {
        let cfg = &self.config;
        let grid = &cfg.grid;
        let mut state = SolverState::from_full(grid, &self.initial)?;
        let mut series = RealizationSeries::default();
        let mut full = Vec::with_capacity(grid.points());
        let mut snapshots = Vec::new();
        let mut tracker = ShiftTracker {
            previous: 0.0,
            last_c: None,
            ambiguous: 0,
            failed: 0,
        };
        let mut noise = vec![0.0; grid.points()];
        let mut scratch = self.sampler.as_ref().map(|s| s.scratch());
        let c_ref = cfg.template.center;

        grid.expand_into(&state.u, &mut full);
        self.record(&mut series, &state, &full, &mut tracker, c_ref);
        if cfg.snapshot_stride > 0 {
            snapshots.push((0.0, full.clone()));
        }
        for n in 0..self.steps {
            let increment = match (&self.sampler, scratch.as_mut()) {
                (Some(sampler), Some(scratch)) => {
                    let mut rng = rng_stream(cfg.seed, index as u64, n as u64);
                    sampler.sample_into(cfg.dt, &mut rng, scratch, &mut noise);
                    Some(noise.as_slice())
                }
                _ => None,
            };
            match (&cfg.kind, increment) {
                (RunKind::Pde, _) => self.stepper.step_pde(&mut state)?,
                (RunKind::Pdae, _) => self.stepper.step_pdae(&mut state)?,
                (RunKind::Spde, Some(dw)) => self.stepper.step_spde(&mut state, dw, cfg.scheme)?,
                (RunKind::Spde, None) => self.stepper.step_pde(&mut state)?,
                (RunKind::Spdae, Some(dw)) => self.stepper.step_spdae(&mut state, dw, cfg.scheme)?,
                (RunKind::Spdae, None) => self.stepper.step_pdae(&mut state)?,
                (RunKind::FixedSpeed(speed), dw) => {
                    self.stepper
                        .step_fixed_speed(&mut state, speed.at(index, n), dw, cfg.scheme)?
                }
            }
            if !state.is_running() {
                break;
            }
            grid.expand_into(&state.u, &mut full);
            self.record(&mut series, &state, &full, &mut tracker, c_ref);
            if cfg.snapshot_stride > 0 && (n + 1) % cfg.snapshot_stride == 0 {
                snapshots.push((state.t, full.clone()));
            }
        }
        state.finish();
        let estimates = estimate(&series, cfg.kind.is_frozen(), cfg.t0, cfg.delta);
        Ok(RealizationResult {
            index,
            status: state.status,
            series,
            estimates,
            final_profile: full,
            snapshots,
            ambiguous_shifts: tracker.ambiguous,
            failed_shifts: tracker.failed,
        })
    }

    fn record(
        &self,
        series: &mut RealizationSeries,
        state: &SolverState,
        full: &[f64],
        tracker: &mut ShiftTracker,
        c_ref: f64,
    ) {
        let grid = &self.config.grid;
        let delta = self.config.delta;
        let pos = |w: LevelSet| level_crossing(full, grid, w.level(delta), w.convention());
        let (a, b, c) = (pos(LevelSet::A), pos(LevelSet::B), pos(LevelSet::C));
        let shift = match &self.shift_template {
            None => 0.0,
            Some(tpl) => tracker.next(full, grid, tpl, c, c_ref),
        };
        series.times.push(state.t);
        series.lambda.push(state.lambda);
        series.gamma.push(state.gamma);
        series.shift.push(shift);
        series.a.push(a.unwrap_or(f64::NAN));
        series.b.push(b.unwrap_or(f64::NAN));
        series.c.push(c.unwrap_or(f64::NAN));
        series.width.push(match (a, b) {
            (Some(a), Some(b)) => a - b,
            _ => f64::NAN,
        });
    }
}

struct ShiftTracker {
    previous: f64,
    last_c: Option<f64>,
    ambiguous: usize,
    failed: usize,
}

impl ShiftTracker {
    // Warm start at the previous shift moved by the motion of c since then;
    // if that fails, restart from c itself.
    fn next(&mut self, full: &[f64], grid: &Grid, tpl: &ShiftTemplate, c: Option<f64>, c_ref: f64) -> f64 {
        let guess = match (c, self.last_c) {
            (Some(c), Some(last)) => self.previous + (c - last),
            _ => self.previous,
        };
        let found = template_shift(full, grid, tpl, guess).or_else(|e| match c {
            Some(c) => template_shift(full, grid, tpl, c - c_ref),
            None => Err(e),
        });
        match found {
            Ok(s) => {
                if s.multiple_roots {
                    self.ambiguous += 1;
                }
                self.previous = s.shift;
                self.last_c = c;
                s.shift
            }
            Err(_) => {
                self.failed += 1;
                f64::NAN
            }
        }
    }
}

/// Run every realization of `config`, in realization order.
pub fn run_realizations(config: &EnsembleConfig) -> Result<Vec<RealizationResult>> {
    let runner = Runner::new(config.clone())?;
    (0..config.realizations)
        .into_par_iter()
        .map(|r| runner.run(r))
        .collect()
}

pub fn run_realization(config: &EnsembleConfig, index: usize) -> Result<RealizationResult> {
    Runner::new(config.clone())?.run(index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (0 for a single sample).
    pub std: f64,
    pub std_error: f64,
    pub count: usize,
}

impl Stat {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return None;
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat {
            mean,
            std,
            std_error: std / (n as f64).sqrt(),
            count: n,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Option<Histogram> {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() || bins == 0 {
            return None;
        }
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            hi = lo + 1.0;
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
        let mut counts = vec![0u64; bins];
        for v in finite {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Some(Histogram { edges, counts })
    }

    pub fn sample_variance(values: &[f64]) -> Option<f64> {
        Stat::from_values(values.iter().copied()).map(|s| s.std * s.std)
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub kind: RunKind,
    pub realizations: usize,
    pub completed: usize,
    pub blown_up: usize,
    pub extinct: usize,
    /// Statistics over completed realizations.
    pub metrics: Vec<(Metric, Stat)>,
    /// Statistics over every realization whose estimator could be evaluated
    /// on the part of the run before it failed.
    pub metrics_all: Vec<(Metric, Stat)>,
    /// Spread of the instantaneous speed over `[t0, T]`, pooled over
    /// completed realizations.
    pub lambda_spread: Option<Stat>,
    pub lambda_histogram: Option<Histogram>,
    /// `E lambda^n` over completed realizations, one per step.
    pub mean_lambda: Vec<f64>,
    /// Mean final profile over completed realizations, aligned for free runs.
    pub mean_profile: Vec<f64>,
    /// `E c(T)` over completed realizations (lab frame for free runs).
    pub mean_final_c: Option<f64>,
    /// `E gamma(T)`, the mean displacement of the comoving frame.
    pub mean_final_gamma: f64,
    pub grid: Grid,
}

impl EnsembleSummary {
    pub fn completed_fraction(&self) -> f64 {
        self.completed as f64 / self.realizations as f64
    }

    pub fn metric(&self, m: Metric) -> Option<Stat> {
        self.metrics.iter().find(|(k, _)| *k == m).map(|(_, s)| *s)
    }

    pub fn metric_including_failures(&self, m: Metric) -> Option<Stat> {
        self.metrics_all.iter().find(|(k, _)| *k == m).map(|(_, s)| *s)
    }
}

pub const HISTOGRAM_BINS: usize = 60;

/// Translate `u` so that its level `c` moves to `reference`.
pub fn align_profile(u: &[f64], grid: &Grid, c: f64, reference: f64) -> Vec<f64> {
    let offset = c - reference;
    (0..grid.points())
        .map(|i| interpolate_clamped(u, grid.dx(), grid.x(i) + offset))
        .collect()
}

pub fn summarize(config: &EnsembleConfig, results: &[RealizationResult]) -> Result<EnsembleSummary> {
    let reference = match config.align {
        AlignReference::TemplateCenter => Some(config.template.center),
        AlignReference::At(x) => Some(x),
        AlignReference::None => None,
    };
    summarize_runs(&config.kind, &config.grid, config.t0, reference, results)
}

/// Summary of `results` of one run kind; free runs have their final profiles
/// aligned at `reference` before averaging.
pub fn summarize_runs(
    kind: &RunKind,
    grid: &Grid,
    t0: f64,
    reference: Option<f64>,
    results: &[RealizationResult],
) -> Result<EnsembleSummary> {
    let realizations = results.len();
    let blown_up = results.iter().filter(|r| matches!(r.status, Status::BlownUp { .. })).count();
    let extinct = results.iter().filter(|r| matches!(r.status, Status::Extinct { .. })).count();
    let done: Vec<&RealizationResult> = results.iter().filter(|r| r.completed()).collect();
    if done.is_empty() {
        return Err(Error::AllRealizationsFailed {
            realizations,
            blown_up,
            extinct,
        });
    }
    let stats = |rs: &[&RealizationResult]| -> Vec<(Metric, Stat)> {
        Metric::ALL
            .into_iter()
            .filter_map(|m| Stat::from_values(rs.iter().filter_map(|r| r.estimates.get(m))).map(|s| (m, s)))
            .collect()
    };
    let all: Vec<&RealizationResult> = results.iter().collect();

    let steps = done[0].series.len();
    let i0 = first_at(&done[0].series.times, t0);
    let frozen = kind.is_frozen();
    let mut mean_lambda = vec![0.0; steps.saturating_sub(1)];
    let mut pooled = Vec::new();
    for r in &done {
        let speeds = instantaneous_speeds(&r.series, frozen);
        for (m, l) in mean_lambda.iter_mut().zip(&speeds) {
            *m += l / done.len() as f64;
        }
        pooled.extend_from_slice(&speeds[i0.min(speeds.len())..]);
    }

    let align = matches!(kind, RunKind::Pde | RunKind::Spde);
    let mut mean_profile = vec![0.0; grid.points()];
    for r in &done {
        let c = r.series.c.last().copied().unwrap_or(f64::NAN);
        let profile = match reference {
            Some(x) if align && c.is_finite() => align_profile(&r.final_profile, grid, c, x),
            _ => r.final_profile.clone(),
        };
        for (m, v) in mean_profile.iter_mut().zip(profile) {
            *m += v / done.len() as f64;
        }
    }

    let mean_final_c = Stat::from_values(done.iter().map(|r| r.series.c.last().copied().unwrap_or(f64::NAN)))
        .map(|s| s.mean);
    let mean_final_gamma = done.iter().map(|r| r.series.gamma.last().copied().unwrap_or(0.0)).sum::<f64>()
        / done.len() as f64;

    Ok(EnsembleSummary {
        kind: kind.clone(),
        realizations,
        completed: done.len(),
        blown_up,
        extinct,
        metrics: stats(&done),
        metrics_all: stats(&all),
        lambda_spread: Stat::from_values(pooled.iter().copied()),
        lambda_histogram: Histogram::new(&pooled, HISTOGRAM_BINS),
        mean_lambda,
        mean_profile,
        mean_final_c,
        mean_final_gamma,
        grid: grid.clone(),
    })
}

/// Per-step speeds of one realization (length = steps).
pub fn instantaneous_speeds(series: &RealizationSeries, frozen: bool) -> Vec<f64> {
    if frozen {
        series.lambda[1..].to_vec()
    } else {
        (1..series.len())
            .map(|n| {
                let p1 = series.gamma[n] + series.shift[n];
                let p0 = series.gamma[n - 1] + series.shift[n - 1];
                (p1 - p0) / (series.times[n] - series.times[n - 1])
            })
            .collect()
    }
}

pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleSummary> {
    summarize(config, &run_realizations(config)?)
}

/// `|| E u_A - E u_B ||^2` in L2 by the trapezoidal rule.
pub fn weak_error(a: &EnsembleSummary, b: &EnsembleSummary) -> Result<f64> {
    if a.grid != b.grid || a.mean_profile.len() != b.mean_profile.len() {
        return Err(Error::GridMismatch("summaries were computed on different grids".into()));
    }
    Ok(l2_squared(&a.mean_profile, &b.mean_profile, a.grid.dx()))
}

/// Weak error between a free ensemble and a frozen one, compared in the lab
/// frame: the frozen mean profile is carried along by `E gamma(T)`, and every
/// free realization is translated so that its `c(T)` sits at `E c(T)`.
/// Equivalently, in frame coordinates the free profiles are aligned at
/// `E c(T) - E gamma(T)`.
pub fn weak_error_lab_frame(
    free_config: &EnsembleConfig,
    free: &[RealizationResult],
    frozen: &EnsembleSummary,
) -> Result<f64> {
    let done: Vec<&RealizationResult> = free.iter().filter(|r| r.completed()).collect();
    let mean_c = Stat::from_values(done.iter().map(|r| r.series.c.last().copied().unwrap_or(f64::NAN)))
        .ok_or(Error::AllRealizationsFailed {
            realizations: free.len(),
            blown_up: free.iter().filter(|r| matches!(r.status, Status::BlownUp { .. })).count(),
            extinct: free.iter().filter(|r| matches!(r.status, Status::Extinct { .. })).count(),
        })?
        .mean;
    let cfg = EnsembleConfig {
        align: AlignReference::At(mean_c - frozen.mean_final_gamma),
        ..free_config.clone()
    };
    weak_error(&summarize(&cfg, free)?, frozen)
}

pub fn l2_squared(u: &[f64], v: &[f64], dx: f64) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        let d = (u[i] - v[i]).powi(2);
        s += if i == 0 || i + 1 == n { 0.5 * d } else { d };
    }
    s * dx
}

/// Resolve the frame speed of a fixed-speed run from a prior ensemble.
pub fn resolve_speed(source: &SpeedSource, prior: &[RealizationResult], frozen: bool) -> Result<FrameSpeed> {
    let done: Vec<&RealizationResult> = prior.iter().filter(|r| r.completed()).collect();
    let need_prior = || Error::InvalidParameter("the prior ensemble has no completed realization".into());
    Ok(match source {
        SpeedSource::Constant(c) => FrameSpeed::Constant(*c),
        SpeedSource::PerRealizationLambda => {
            let mean = Stat::from_values(done.iter().filter_map(|r| r.estimates.get(Metric::LambdaMin)))
                .ok_or_else(need_prior)?
                .mean;
            // failed realizations fall back to the ensemble value
            FrameSpeed::PerRealization(
                prior
                    .iter()
                    .map(|r| r.estimates.get(Metric::LambdaMin).filter(|_| r.completed()).unwrap_or(mean))
                    .collect(),
            )
        }
        SpeedSource::EnsembleMeanLambda => {
            let first = done.first().ok_or_else(need_prior)?;
            let mut mean = vec![0.0; first.series.len() - 1];
            for r in &done {
                for (m, l) in mean.iter_mut().zip(instantaneous_speeds(&r.series, frozen)) {
                    *m += l / done.len() as f64;
                }
            }
            FrameSpeed::Series(mean)
        }
        SpeedSource::EnsembleMeanLambdaAverage => FrameSpeed::Constant(
            Stat::from_values(done.iter().filter_map(|r| r.estimates.get(Metric::LambdaMin)))
                .ok_or_else(need_prior)?
                .mean,
        ),
    })
}

/// Two-pass protocol: a frozen stochastic ensemble supplies the speed
/// statistic, then the same noise paths are rerun in a frame moving at it.
pub fn fixed_speed_ensemble(
    config: &EnsembleConfig,
    source: &SpeedSource,
) -> Result<(EnsembleSummary, EnsembleSummary)> {
    let prior_cfg = EnsembleConfig {
        kind: RunKind::Spdae,
        ..config.clone()
    };
    let prior = run_realizations(&prior_cfg)?;
    let prior_summary = summarize(&prior_cfg, &prior)?;
    let speed = resolve_speed(source, &prior, true)?;
    let fixed_cfg = EnsembleConfig {
        kind: RunKind::FixedSpeed(speed),
        ..config.clone()
    };
    Ok((prior_summary, run_ensemble(&fixed_cfg)?))
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub alpha: f64,
    pub mu2: f64,
    pub xi: f64,
    pub interpretation: Interpretation,
    pub summary: std::result::Result<EnsembleSummary, String>,
}

/// One ensemble per `(alpha, mu^2, xi, interpretation)`. All cells share the
/// master seed, so neighbouring cells see the same noise paths. A failed cell
/// is recorded with its error and the sweep continues.
pub fn sweep(
    base: &EnsembleConfig,
    mu2: &[f64],
    xi: &[f64],
    alpha: &[f64],
    interpretations: &[Interpretation],
) -> Result<Vec<SweepCell>> {
    if mu2.is_empty() || xi.is_empty() || alpha.is_empty() || interpretations.is_empty() {
        return Err(Error::InvalidParameter("sweep lists must not be empty".into()));
    }
    if let Some(bad) = mu2.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
        return Err(Error::InvalidParameter(format!("mu^2 = {bad} must be >= 0")));
    }
    let mut cells = Vec::new();
    for &interpretation in interpretations {
        for &a in alpha {
            for &x in xi {
                for &m2 in mu2 {
                    let scheme = match interpretation {
                        Interpretation::Stratonovich => Scheme::EulerHeun,
                        Interpretation::Ito => Scheme::EulerMaruyamaOnCorrected,
                    };
                    let cfg = EnsembleConfig {
                        model: ModelSpec {
                            alpha: a,
                            mu: m2.sqrt(),
                            interpretation,
                            ..base.model
                        },
                        xi: x,
                        scheme,
                        ..base.clone()
                    };
                    cells.push(SweepCell {
                        alpha: a,
                        mu2: m2,
                        xi: x,
                        interpretation,
                        summary: run_ensemble(&cfg).map_err(|e| e.to_string()),
                    });
                }
            }
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn small_config(kind: RunKind) -> EnsembleConfig {
        let grid = Grid::with_spacing(60.0, 0.2, BoundaryCondition::Neumann).unwrap();
        let profile = ProfileSpec::new(FRAC_1_SQRT_2, 24.0).unwrap();
        EnsembleConfig {
            realizations: 4,
            seed: 11,
            kind,
            model: ModelSpec {
                alpha: -0.25,
                nu: 0.0,
                mu: 0.1,
                interpretation: Interpretation::Stratonovich,
            },
            grid,
            xi: 0.5,
            noise_modes: NoiseModes::Matched,
            dt: 0.05,
            t_final: 4.0,
            t0: 2.0,
            snapshot_stride: 0,
            template: profile,
            initial: profile,
            delta: 0.05,
            scheme: Scheme::EulerHeun,
            advection: Advection::Central,
            correction: CorrectionSource::Spectral,
            align: AlignReference::TemplateCenter,
            blowup_threshold: 25.0,
        }
    }

    #[test]
    fn stat_basics() {
        let s = Stat::from_values([1.0, 2.0, 3.0, f64::NAN]).unwrap();
        assert_eq!(s.count, 3);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-15);
        assert!((s.std_error - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(Stat::from_values([]).is_none());
        assert_eq!(Stat::from_values([4.0]).unwrap().std_error, 0.0);
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let h = Histogram::new(&v, 7).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 100);
        assert_eq!(h.edges.len(), 8);
    }

    #[test]
    fn l2_of_constant_difference() {
        assert!((l2_squared(&[1.0; 11], &[0.0; 11], 0.1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn alignment_moves_the_midpoint() {
        let g = Grid::with_spacing(40.0, 0.1, BoundaryCondition::Neumann).unwrap();
        let p = ProfileSpec::new(1.0, 22.37).unwrap();
        let u = g.sample(|x| p.front(x));
        let c = level_crossing(&u, &g, 0.5, crate::metrics::Convention::SupFromLeft).unwrap();
        let moved = align_profile(&u, &g, c, 15.0);
        let c2 = level_crossing(&moved, &g, 0.5, crate::metrics::Convention::SupFromLeft).unwrap();
        assert!((c2 - 15.0).abs() < 1e-3);
    }

    #[test]
    fn failure_accounting_adds_up() {
        let mut cfg = small_config(RunKind::Spdae);
        cfg.model.mu = 3.0;
        cfg.xi = 0.2;
        let results = run_realizations(&cfg).unwrap();
        let done = results.iter().filter(|r| r.completed()).count();
        match summarize(&cfg, &results) {
            Ok(s) => assert_eq!(s.completed + s.blown_up + s.extinct, s.realizations),
            Err(Error::AllRealizationsFailed { realizations, blown_up, extinct }) => {
                assert_eq!(done, 0);
                assert_eq!(blown_up + extinct, realizations);
            }
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn summary_is_independent_of_worker_count() {
        let cfg = small_config(RunKind::Spde);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| run_ensemble(&cfg)).unwrap();
        let b = three.install(|| run_ensemble(&cfg)).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.mean_profile, b.mean_profile);
    }

    #[test]
    fn zero_constant_speed_equals_free_run() {
        let free = small_config(RunKind::Spde);
        let fixed = small_config(RunKind::FixedSpeed(FrameSpeed::Constant(0.0)));
        let a = run_realizations(&free).unwrap();
        let b = run_realizations(&fixed).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.final_profile, y.final_profile);
            assert_eq!(x.estimates, y.estimates);
        }
    }

    #[test]
    fn noiseless_single_realization_matches_deterministic() {
        let mut spde = small_config(RunKind::Spde);
        spde.realizations = 1;
        spde.model.mu = 0.0;
        let pde = EnsembleConfig { kind: RunKind::Pde, ..spde.clone() };
        let a = run_ensemble(&spde).unwrap();
        let b = run_ensemble(&pde).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.mean_profile, b.mean_profile);
    }

    #[test]
    fn lab_frame_weak_error_vanishes_without_noise() {
        let mut free = small_config(RunKind::Pde);
        free.realizations = 1;
        free.model.mu = 0.0;
        let frozen = EnsembleConfig { kind: RunKind::Pdae, ..free.clone() };
        let runs = run_realizations(&free).unwrap();
        let fz = run_ensemble(&frozen).unwrap();
        let err = weak_error_lab_frame(&free, &runs, &fz).unwrap();
        let unaligned = weak_error(&run_ensemble(&EnsembleConfig { align: AlignReference::None, ..free.clone() }).unwrap(), &fz).unwrap();
        assert!(err < 1e-3 && unaligned > 1000.0 * err, "{err} {unaligned}");
    }

    #[test]
    fn sweep_rejects_empty_lists() {
        let cfg = small_config(RunKind::Spde);
        assert!(sweep(&cfg, &[], &[0.1], &[-0.25], &[Interpretation::Stratonovich]).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small_config(RunKind::Spde);
        cfg.t0 = 5.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(RunKind::Spde);
        cfg.realizations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(RunKind::Spde);
        cfg.t_final = 4.01;
        assert!(cfg.validate().is_err());
    }
}
