//! Wave position, speed and width.
//!
//! Fronts are laid out with `u = 1` behind (left) and `u = 0` ahead (right).
//! Level-set positions:
//!
//! * `a`: rightmost crossing of `delta` (leading edge),
//! * `b`: leftmost crossing of `1 - delta` (trailing edge),
//! * `c`: rightmost crossing of `1/2`.
//!
//! The rest states are taken as exactly 0 and 1, not the instantaneous
//! extremes, since noise perturbs the tails.

use crate::error::{Error, Result};
use crate::grid::{interpolate_clamped, Grid};

pub const DEFAULT_DELTA: f64 = 0.05;

/// Which crossing to report when there are several.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// Supremum of all crossings (found scanning from the right end).
    SupFromLeft,
    /// Infimum of all crossings (found scanning from the left end).
    SupFromRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LevelSet {
    A,
    B,
    C,
}

impl LevelSet {
    pub const ALL: [LevelSet; 3] = [LevelSet::A, LevelSet::B, LevelSet::C];

    pub fn level(self, delta: f64) -> f64 {
        match self {
            LevelSet::A => delta,
            LevelSet::B => 1.0 - delta,
            LevelSet::C => 0.5,
        }
    }

    pub fn convention(self) -> Convention {
        match self {
            LevelSet::A | LevelSet::C => Convention::SupFromLeft,
            LevelSet::B => Convention::SupFromRight,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LevelSet::A => "a",
            LevelSet::B => "b",
            LevelSet::C => "c",
        }
    }
}

/// Position where full-grid `u` crosses `level`, linearly interpolated within
/// the bracketing cell; `None` if there is no crossing.
pub fn level_crossing(u: &[f64], grid: &Grid, level: f64, convention: Convention) -> Option<f64> {
    debug_assert_eq!(u.len(), grid.points());
    crossing_index(u, level, convention).map(|s| s * grid.dx())
}

// crossing position in units of grid cells
fn crossing_index(u: &[f64], level: f64, convention: Convention) -> Option<f64> {
    let n = u.len();
    let at = |i: usize| -> Option<f64> {
        let d0 = u[i] - level;
        if d0 == 0.0 {
            return Some(i as f64);
        }
        if i + 1 < n {
            let d1 = u[i + 1] - level;
            if d1 == 0.0 {
                return Some((i + 1) as f64);
            }
            if (d0 < 0.0) != (d1 < 0.0) {
                return Some(i as f64 + d0 / (d0 - d1));
            }
        }
        None
    };
    match convention {
        Convention::SupFromLeft => (0..n).rev().find_map(at),
        Convention::SupFromRight => (0..n).find_map(at),
    }
}

/// Positions of one level set over time.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetTrack {
    pub level: f64,
    pub convention: Convention,
    pub times: Vec<f64>,
    pub positions: Vec<Option<f64>>,
}

impl LevelSetTrack {
    pub fn new(level: f64, convention: Convention) -> Self {
        Self {
            level,
            convention,
            times: Vec::new(),
            positions: Vec::new(),
        }
    }

    pub fn record(&mut self, t: f64, u: &[f64], grid: &Grid) -> Option<f64> {
        let x = level_crossing(u, grid, self.level, self.convention);
        self.times.push(t);
        self.positions.push(x);
        x
    }

    pub fn push(&mut self, t: f64, x: Option<f64>) {
        self.times.push(t);
        self.positions.push(x);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// `(z(t) - z(t0)) / (t - t0)`
    LevelSecant,
    /// least-squares slope of `z(s)`, `s >= t0`
    LevelFit,
    /// time average of the instantaneous speed over `[t0, t]`
    TemplateAverage,
    /// least-squares slope of the position `y` or `gamma`
    PositionFit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedEstimate {
    pub estimator: Estimator,
    pub value: f64,
    pub t0: f64,
    /// Intercept `K` of a fit.
    pub intercept: Option<f64>,
    /// Temporal variance of the instantaneous speed.
    pub lambda_variance: Option<f64>,
}

// first index with t >= t0, allowing for rounding in t = n dt
fn start_index(times: &[f64], t0: f64) -> usize {
    let eps = 1e-9 * t0.abs().max(1.0);
    times.partition_point(|t| *t < t0 - eps)
}

pub fn speed_secant(track: &LevelSetTrack, t0: f64) -> Result<SpeedEstimate> {
    let i0 = start_index(&track.times, t0);
    let n = track.len();
    if n < 2 || i0 + 1 >= n {
        return Err(Error::NotEnoughSamples {
            t0,
            found: n.saturating_sub(i0),
            needed: 2,
        });
    }
    let (ta, tb) = (track.times[i0], track.times[n - 1]);
    let za = track.positions[i0].ok_or(Error::MissingPosition { t: ta })?;
    let zb = track.positions[n - 1].ok_or(Error::MissingPosition { t: tb })?;
    Ok(SpeedEstimate {
        estimator: Estimator::LevelSecant,
        value: (zb - za) / (tb - ta),
        t0: ta,
        intercept: None,
        lambda_variance: None,
    })
}

pub fn speed_linfit(track: &LevelSetTrack, t0: f64) -> Result<SpeedEstimate> {
    let i0 = start_index(&track.times, t0);
    let mut ys = Vec::with_capacity(track.len() - i0.min(track.len()));
    for (t, z) in track.times[i0..].iter().zip(&track.positions[i0..]) {
        ys.push(z.ok_or(Error::MissingPosition { t: *t })?);
    }
    let (slope, intercept) = fit_from(&track.times[i0..], &ys, t0)?;
    Ok(SpeedEstimate {
        estimator: Estimator::LevelFit,
        value: slope,
        t0,
        intercept: Some(intercept),
        lambda_variance: None,
    })
}

fn fit_from(ts: &[f64], ys: &[f64], t0: f64) -> Result<(f64, f64)> {
    linear_fit(ts, ys).ok_or(Error::NotEnoughSamples {
        t0,
        found: ts.len(),
        needed: 2,
    })
}

/// Ordinary least squares `y = slope t + intercept`; `None` for fewer than two
/// distinct times.
pub fn linear_fit(ts: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = ts.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let tm = ts.iter().sum::<f64>() / n as f64;
    let ym = ys.iter().sum::<f64>() / n as f64;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        sty += (t - tm) * (y - ym);
        stt += (t - tm) * (t - tm);
    }
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    Some((slope, ym - slope * tm))
}

/// Speeds derived from a series of positions (template shifts or `gamma`).
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSpeeds {
    /// `lambda^n = (y^n - y^{n-1}) / dt`, one per step.
    pub lambdas: Vec<f64>,
    pub lambda_min: SpeedEstimate,
    pub lambda_gamma: SpeedEstimate,
}

pub fn template_speed_series(times: &[f64], shifts: &[f64], t0: f64) -> Result<TemplateSpeeds> {
    if times.len() != shifts.len() {
        return Err(Error::InvalidParameter("times and shifts differ in length".into()));
    }
    let lambdas: Vec<f64> = times
        .windows(2)
        .zip(shifts.windows(2))
        .map(|(t, y)| (y[1] - y[0]) / (t[1] - t[0]))
        .collect();
    let lambda_min = interval_average(times, &lambdas, t0)?;
    let i0 = start_index(times, t0);
    let (slope, intercept) = fit_from(&times[i0..], &shifts[i0..], t0)?;
    Ok(TemplateSpeeds {
        lambdas,
        lambda_min,
        lambda_gamma: SpeedEstimate {
            estimator: Estimator::PositionFit,
            value: slope,
            t0,
            intercept: Some(intercept),
            lambda_variance: None,
        },
    })
}

/// Time average over `[t0, t_end]` of a piecewise-constant speed; `lambdas[n]`
/// is the speed over `[times[n], times[n + 1]]`.
pub fn interval_average(times: &[f64], lambdas: &[f64], t0: f64) -> Result<SpeedEstimate> {
    if lambdas.len() + 1 != times.len() {
        return Err(Error::InvalidParameter("need one speed per time interval".into()));
    }
    let i0 = start_index(times, t0);
    if i0 >= lambdas.len() {
        return Err(Error::NotEnoughSamples { t0, found: 0, needed: 1 });
    }
    let (mut integral, mut span) = (0.0, 0.0);
    for n in i0..lambdas.len() {
        let h = times[n + 1] - times[n];
        integral += lambdas[n] * h;
        span += h;
    }
    let mean = integral / span;
    let var = (i0..lambdas.len())
        .map(|n| (lambdas[n] - mean).powi(2) * (times[n + 1] - times[n]))
        .sum::<f64>()
        / span;
    Ok(SpeedEstimate {
        estimator: Estimator::TemplateAverage,
        value: mean,
        t0,
        intercept: None,
        lambda_variance: Some(var),
    })
}

/// Template `u^` prepared for shift estimation.
#[derive(Debug, Clone)]
pub struct ShiftTemplate {
    dx: f64,
    values: Vec<f64>,
    derivative: Vec<f64>,
    // index range of the grid where u^' is not negligible
    support: (usize, usize),
    derivative_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shift {
    pub shift: f64,
    /// More than one sign change of the residual was found near the
    /// previous shift; the root closest to it was taken.
    pub multiple_roots: bool,
}

impl ShiftTemplate {
    /// `values` are full-grid samples of the template.
    pub fn new(grid: &Grid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(Error::GridMismatch("template length differs from grid".into()));
        }
        let n = values.len();
        let dx = grid.dx();
        // central differences, one-sided at the ends
        let mut derivative = vec![0.0; n];
        for i in 0..n {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            derivative[i] = (values[hi] - values[lo]) / ((hi - lo) as f64 * dx);
        }
        let peak = derivative.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if peak == 0.0 {
            return Err(Error::InvalidParameter("template has no derivative mass".into()));
        }
        let cutoff = 1e-15 * peak;
        let lo = derivative.iter().position(|d| d.abs() > cutoff).unwrap_or(0);
        let hi = derivative.iter().rposition(|d| d.abs() > cutoff).unwrap_or(n - 1);
        let derivative_norm = (derivative.iter().map(|d| d * d).sum::<f64>() * dx).sqrt();
        Ok(Self {
            dx,
            values: values.to_vec(),
            derivative,
            support: (lo, hi),
            derivative_norm,
        })
    }

    /// `r(y) = dx sum_i u^'(x_i - y) (u_i - u^(x_i - y))`.
    pub fn residual(&self, u: &[f64], y: f64) -> f64 {
        let n = u.len();
        let s = y / self.dx;
        // x_i - y within [x_lo, x_hi]  <=>  i within [lo + s, hi + s]
        let first = ((self.support.0 as f64 + s).floor().max(0.0)) as usize;
        let last = ((self.support.1 as f64 + s).ceil().min((n - 1) as f64)).max(0.0) as usize;
        let mut r = 0.0;
        for (i, ui) in u.iter().enumerate().take(last + 1).skip(first) {
            let x = i as f64 * self.dx - y;
            let d = interpolate_derivative(&self.derivative, self.dx, x);
            if d != 0.0 {
                r += d * (ui - interpolate_clamped(&self.values, self.dx, x));
            }
        }
        r * self.dx
    }

    fn tolerance(&self, u: &[f64]) -> f64 {
        let norm = (u.iter().map(|v| v * v).sum::<f64>() * self.dx).sqrt();
        1e-10 * self.derivative_norm * norm.max(f64::MIN_POSITIVE)
    }
}

// linear interpolation that vanishes outside the sampled interval
fn interpolate_derivative(values: &[f64], dx: f64, x: f64) -> f64 {
    let last = (values.len() - 1) as f64 * dx;
    if x < 0.0 || x > last {
        0.0
    } else {
        interpolate_clamped(values, dx, x)
    }
}

/// Shift `y` with `<u^_x(. - y), u - u^(. - y)> = 0`, searched near `previous`.
pub fn template_shift(u: &[f64], grid: &Grid, template: &ShiftTemplate, previous: f64) -> Result<Shift> {
    if u.len() != grid.points() || template.values.len() != grid.points() {
        return Err(Error::GridMismatch("template and field differ in length".into()));
    }
    let dx = grid.dx();
    let r = |y: f64| template.residual(u, y);
    let tol = template.tolerance(u);
    for half_width in [2.0 * dx, 4.0 * dx, 8.0 * dx] {
        let cells = (2.0 * half_width / dx).round() as usize;
        let h = half_width / cells as f64 * 2.0;
        let ys: Vec<f64> = (0..=cells).map(|k| previous - half_width + h * k as f64).collect();
        let rs: Vec<f64> = ys.iter().map(|y| r(*y)).collect();
        if let Some(k) = rs.iter().position(|v| *v == 0.0) {
            return Ok(Shift { shift: ys[k], multiple_roots: false });
        }
        let changes: Vec<usize> = (0..cells).filter(|&k| (rs[k] < 0.0) != (rs[k + 1] < 0.0)).collect();
        if changes.is_empty() {
            continue;
        }
        let best = *changes
            .iter()
            .min_by(|&&i, &&j| {
                let di = (0.5 * (ys[i] + ys[i + 1]) - previous).abs();
                let dj = (0.5 * (ys[j] + ys[j + 1]) - previous).abs();
                di.total_cmp(&dj)
            })
            .expect("non-empty");
        let shift = illinois(&r, (ys[best], rs[best]), (ys[best + 1], rs[best + 1]), tol);
        return Ok(Shift { shift, multiple_roots: changes.len() > 1 });
    }
    Err(Error::NoRootInBracket { previous, width: 8.0 * dx })
}

// regula falsi with the Illinois modification on a sign-changing bracket
fn illinois(f: &impl Fn(f64) -> f64, (mut a, mut fa): (f64, f64), (mut b, mut fb): (f64, f64), tol: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c);
        if fc.abs() < tol || (b - a).abs() <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            return c;
        }
        if (fc < 0.0) == (fb < 0.0) {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

/// Distance between the `delta` and `1 - delta` crossings (`a - b`).
///
/// `None` if `delta` is not in `(0, 1/2)` or a crossing is missing.
pub fn wave_width(u: &[f64], grid: &Grid, delta: f64) -> Option<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return None;
    }
    let a = level_crossing(u, grid, LevelSet::A.level(delta), LevelSet::A.convention())?;
    let b = level_crossing(u, grid, LevelSet::B.level(delta), LevelSet::B.convention())?;
    Some(a - b)
}
