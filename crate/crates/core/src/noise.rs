//! Q-Wiener increments with exponentially decaying spectrum.
//!
//! The noise is expanded in the Neumann eigenbasis of `d^2/dx^2` on `[0, L]`,
//! `phi_0 = 1/sqrt(L)`, `phi_j = sqrt(2/L) cos(j pi x / L)`, with eigenvalues
//! `zeta_j = exp(-xi^2 lambda_j / L)`, `lambda_j = j^2 pi^2 / L^2`. On the grid
//! `x_m = m L / N` a mode `j` coincides with mode `k = |j mod 2N|` folded into
//! `[0, N]`, so modes sharing a class are merged into a single Gaussian with the
//! summed variance. The increment at the grid points is then one type-I
//! discrete cosine transform, evaluated with an FFT of length `2N`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Coefficients below this are dropped by automatic truncation.
pub const AUTO_TRUNCATION_TOL: f64 = 1e-12;

/// Upper bound on the number of modes accepted by automatic truncation.
pub const MAX_MODES: usize = 1 << 28;

/// Spatial covariance `C(x) = exp(-pi x^2 / (4 xi^2)) / (2 xi)`.
pub fn covariance(x: f64, xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "correlation length must be positive, got {xi}"
        )));
    }
    Ok((-PI * x * x / (4.0 * xi * xi)).exp() / (2.0 * xi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Smallest `J` with `zeta_J < AUTO_TRUNCATION_TOL`.
    Auto,
    /// Modes `j = 0..=J`.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    correlation_length: f64,
    domain_length: f64,
    modes: usize,
}

impl NoiseModel {
    pub fn new(domain_length: f64, correlation_length: f64, truncation: Truncation) -> Result<Self> {
        if !(domain_length > 0.0 && domain_length.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "domain length must be positive, got {domain_length}"
            )));
        }
        if !(correlation_length > 0.0 && correlation_length.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "correlation length must be positive, got {correlation_length}"
            )));
        }
        let mut model = Self {
            correlation_length,
            domain_length,
            modes: 0,
        };
        model.modes = match truncation {
            Truncation::Fixed(j) => j,
            Truncation::Auto => {
                let rate = model.decay_rate();
                let guess = (-AUTO_TRUNCATION_TOL.ln() / rate).sqrt().ceil();
                if !(guess < MAX_MODES as f64) {
                    return Err(Error::InvalidParameter(format!(
                        "automatic truncation needs more than {MAX_MODES} modes"
                    )));
                }
                let mut j = (guess as usize).max(1);
                while j > 1 && model.coefficient(j - 1) < AUTO_TRUNCATION_TOL {
                    j -= 1;
                }
                while model.coefficient(j) >= AUTO_TRUNCATION_TOL {
                    j += 1;
                }
                j
            }
        };
        Ok(model)
    }

    pub fn correlation_length(&self) -> f64 {
        self.correlation_length
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    /// Highest retained mode index `J`.
    pub fn modes(&self) -> usize {
        self.modes
    }

    // zeta_j = exp(-rate j^2)
    fn decay_rate(&self) -> f64 {
        let (xi, l) = (self.correlation_length, self.domain_length);
        xi * xi * PI * PI / (l * l * l)
    }

    /// `zeta_j = exp(-xi^2 lambda_j / L)`
    pub fn coefficient(&self, j: usize) -> f64 {
        let j = j as f64;
        (-self.decay_rate() * j * j).exp()
    }

    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.modes).map(|j| self.coefficient(j))
    }

    pub fn eigenfunction(&self, j: usize, x: f64) -> f64 {
        let l = self.domain_length;
        if j == 0 {
            1.0 / l.sqrt()
        } else {
            (2.0 / l).sqrt() * (j as f64 * PI * x / l).cos()
        }
    }

    /// `sum_j zeta_j phi_j(x) phi_j(y)`: covariance of the increment per unit time.
    pub fn spectral_covariance(&self, x: f64, y: f64) -> f64 {
        (0..=self.modes)
            .map(|j| self.coefficient(j) * self.eigenfunction(j, x) * self.eigenfunction(j, y))
            .sum()
    }
}

pub fn build_noise_model(length: f64, xi: f64, truncation: Truncation) -> Result<NoiseModel> {
    NoiseModel::new(length, xi, truncation)
}

/// Noise increment `Delta W_n` at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub values: Vec<f64>,
    pub dt: f64,
}

/// Deterministic random stream for `(seed, realization, step)`.
///
/// Each realization is a separate ChaCha stream and each step starts at its own
/// block offset, so any increment can be regenerated without replaying the
/// ones before it.
pub fn rng_stream(seed: u64, realization: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng.set_word_pos((step as u128) << 32);
    rng
}

/// Per-worker buffers for [`NoiseSampler`].
pub struct NoiseScratch {
    coeffs: Vec<f64>,
    buffer: Vec<Complex<f64>>,
    fft_scratch: Vec<Complex<f64>>,
}

/// Samples increments of a [`NoiseModel`] on a fixed grid.
#[derive(Clone)]
pub struct NoiseSampler {
    model: NoiseModel,
    points: usize,
    // standard deviation per unit sqrt(time) of each folded mode class k = 0..=N
    class_std: Vec<f64>,
    // pointwise variance per unit time
    variance: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NoiseSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseSampler")
            .field("model", &self.model)
            .field("points", &self.points)
            .finish()
    }
}

impl NoiseSampler {
    pub fn new(model: NoiseModel, grid: &Grid) -> Result<Self> {
        let l = model.domain_length();
        if (grid.length() - l).abs() > 1e-12 * l {
            return Err(Error::GridMismatch(format!(
                "noise built for L = {l}, grid has L = {}",
                grid.length()
            )));
        }
        let points = grid.points();
        let n = points - 1;
        let mut class_var = vec![0.0; n + 1];
        for j in 0..=model.modes() {
            let zeta = model.coefficient(j);
            if zeta == 0.0 {
                // coefficients are non-increasing
                break;
            }
            let norm2 = if j == 0 { 1.0 / l } else { 2.0 / l };
            class_var[fold(j, n)] += zeta * norm2;
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * n);
        let mut sampler = Self {
            model,
            points,
            class_std: class_var.iter().map(|v| v.sqrt()).collect(),
            variance: Vec::new(),
            fft,
        };
        // var(x_m) = sum_k s_k cos^2(pi k m / N) = (sum_k s_k + sum_k s_k cos(2 pi k m / N)) / 2
        let mut doubled = vec![0.0; n + 1];
        for (k, s) in class_var.iter().enumerate() {
            doubled[fold(2 * k, n)] += s;
        }
        let total: f64 = class_var.iter().sum();
        let mut scratch = sampler.scratch();
        let mut cos_sum = vec![0.0; points];
        sampler.synthesize(&doubled, &mut scratch, &mut cos_sum);
        sampler.variance = cos_sum.iter().map(|c| 0.5 * (total + c)).collect();
        Ok(sampler)
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Pointwise variance of the increment per unit time, `sum_j zeta_j phi_j(x)^2`
    /// evaluated on the grid (after aliasing).
    pub fn pointwise_variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn scratch(&self) -> NoiseScratch {
        let n2 = 2 * (self.points - 1);
        NoiseScratch {
            coeffs: vec![0.0; self.points],
            buffer: vec![Complex::new(0.0, 0.0); n2],
            fft_scratch: vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()],
        }
    }

    /// Draw one increment of duration `dt` into `out` (length = grid points).
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        dt: f64,
        rng: &mut R,
        scratch: &mut NoiseScratch,
        out: &mut [f64],
    ) {
        let scale = dt.sqrt();
        let mut coeffs = std::mem::take(&mut scratch.coeffs);
        for (c, s) in coeffs.iter_mut().zip(&self.class_std) {
            *c = if *s > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                s * scale * z
            } else {
                0.0
            };
        }
        self.synthesize(&coeffs, scratch, out);
        scratch.coeffs = coeffs;
    }

    pub fn sample<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> NoiseIncrement {
        let mut scratch = self.scratch();
        let mut values = vec![0.0; self.points];
        self.sample_into(dt, rng, &mut scratch, &mut values);
        NoiseIncrement { values, dt }
    }

    /// `out_m = sum_{k=0}^{N} c_k cos(pi k m / N)`
    pub(crate) fn synthesize(&self, coeffs: &[f64], scratch: &mut NoiseScratch, out: &mut [f64]) {
        let n = self.points - 1;
        let buf = &mut scratch.buffer;
        for k in 0..=n {
            buf[k] = Complex::new(coeffs[k], 0.0);
        }
        for k in 1..n {
            buf[2 * n - k] = Complex::new(coeffs[k], 0.0);
        }
        self.fft.process_with_scratch(buf, &mut scratch.fft_scratch);
        for (m, o) in out.iter_mut().enumerate() {
            let alt = if m % 2 == 0 { coeffs[n] } else { -coeffs[n] };
            *o = 0.5 * (buf[m].re + coeffs[0] + alt);
        }
    }
}

// alias class of mode j on a grid with N cells
fn fold(j: usize, n: usize) -> usize {
    let r = j % (2 * n);
    if r > n {
        2 * n - r
    } else {
        r
    }
}

pub fn sample_increment<R: Rng + ?Sized>(
    model: &NoiseModel,
    grid: &Grid,
    dt: f64,
    rng: &mut R,
) -> Result<NoiseIncrement> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    Ok(NoiseSampler::new(model.clone(), grid)?.sample(dt, rng))
}

const DUMP_MAGIC: &[u8; 8] = b"STWNOISE";
const DUMP_VERSION: u32 = 1;

/// Header of an increment dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpHeader {
    pub length: f64,
    pub correlation_length: f64,
    pub modes: u64,
    pub dt: f64,
    pub seed: u64,
    pub realization: u64,
    pub points: u64,
}

/// Write increments of one realization.
///
/// Layout (little endian): magic `STWNOISE`, `u32` version, `f64` L, `f64` xi,
/// `u64` J, `f64` dt, `u64` seed, `u64` realization, `u64` points, `u64` count,
/// then `count` records of `u64` step followed by `points` `f64` values.
pub fn write_dump<W: Write>(
    mut w: W,
    header: &DumpHeader,
    increments: &[(u64, Vec<f64>)],
) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_u32::<LittleEndian>(DUMP_VERSION)?;
    w.write_f64::<LittleEndian>(header.length)?;
    w.write_f64::<LittleEndian>(header.correlation_length)?;
    w.write_u64::<LittleEndian>(header.modes)?;
    w.write_f64::<LittleEndian>(header.dt)?;
    w.write_u64::<LittleEndian>(header.seed)?;
    w.write_u64::<LittleEndian>(header.realization)?;
    w.write_u64::<LittleEndian>(header.points)?;
    w.write_u64::<LittleEndian>(increments.len() as u64)?;
    for (step, values) in increments {
        if values.len() as u64 != header.points {
            return Err(Error::InvalidParameter("increment length differs from header".into()));
        }
        w.write_u64::<LittleEndian>(*step)?;
        for v in values {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    Ok(())
}

pub fn read_dump<R: Read>(mut r: R) -> Result<(DumpHeader, Vec<(u64, Vec<f64>)>)> {
    let corrupt = |e: std::io::Error| Error::Corrupt(format!("noise dump: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(corrupt)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Corrupt("noise dump: bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(corrupt)?;
    if version != DUMP_VERSION {
        return Err(Error::Version { found: version, expected: DUMP_VERSION });
    }
    let header = DumpHeader {
        length: r.read_f64::<LittleEndian>().map_err(corrupt)?,
        correlation_length: r.read_f64::<LittleEndian>().map_err(corrupt)?,
        modes: r.read_u64::<LittleEndian>().map_err(corrupt)?,
        dt: r.read_f64::<LittleEndian>().map_err(corrupt)?,
        seed: r.read_u64::<LittleEndian>().map_err(corrupt)?,
        realization: r.read_u64::<LittleEndian>().map_err(corrupt)?,
        points: r.read_u64::<LittleEndian>().map_err(corrupt)?,
    };
    let count = r.read_u64::<LittleEndian>().map_err(corrupt)?;
    let mut records = Vec::new();
    for _ in 0..count {
        let step = r.read_u64::<LittleEndian>().map_err(corrupt)?;
        let values = (0..header.points)
            .map(|_| r.read_f64::<LittleEndian>())
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(corrupt)?;
        records.push((step, values));
    }
    Ok((header, records))
}
