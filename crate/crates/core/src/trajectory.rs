//! Versioned binary record of one realization, enough to recompute every
//! estimator without re-simulating.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      8 bytes  "STWTRAJ\0"
//! version    u32
//! length     f64      domain length L
//! points     u64      grid points M
//! bc         u8       0 = Neumann, 1 = Dirichlet
//! bc_left    f64      Dirichlet values (0 for Neumann)
//! bc_right   f64
//! alpha, nu, mu       f64 x 3
//! interp     u8       0 = Ito, 1 = Stratonovich
//! xi         f64
//! modes      u64      number of noise modes (0 for deterministic runs)
//! kind       u8       0 pde, 1 pdae, 2 spde, 3 spdae, 4 fixed-speed
//! dt         f64
//! stride     u64      snapshot stride
//! seed       u64
//! index      u64      realization index
//! status     u8       0 done, 1 blown up, 2 extinct, 3 running
//! status_at  u64      step of the failure (0 otherwise)
//! t0, delta  f64 x 2
//! centre     f64      template centre, the alignment reference
//! records    u64      number of per-step records N
//! N x 8 f64           t, lambda, gamma, shift, a, b, c, width
//! snapshots  u64      number of snapshots S
//! S x (1 + M) f64     t, profile
//! M f64               final profile
//! end        4 bytes  "END\0"
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::ensemble::{
    estimate, summarize_runs, EnsembleConfig, EnsembleSummary, Estimates, FrameSpeed, RealizationResult,
    RealizationSeries, RunKind,
};
use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Grid};
use crate::model::{Interpretation, ModelSpec};
use crate::stepper::Status;

pub const MAGIC: &[u8; 8] = b"STWTRAJ\0";
pub const VERSION: u32 = 1;
const END: &[u8; 4] = b"END\0";

/// Kind byte as stored; fixed-speed frame speeds are not kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoredKind {
    Pde,
    Pdae,
    Spde,
    Spdae,
    FixedSpeed,
}

impl StoredKind {
    pub fn is_frozen(self) -> bool {
        matches!(self, StoredKind::Pdae | StoredKind::Spdae)
    }

    pub fn name(self) -> &'static str {
        match self {
            StoredKind::Pde => "pde",
            StoredKind::Pdae => "pdae",
            StoredKind::Spde => "spde",
            StoredKind::Spdae => "spdae",
            StoredKind::FixedSpeed => "fixed-speed",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => StoredKind::Pde,
            1 => StoredKind::Pdae,
            2 => StoredKind::Spde,
            3 => StoredKind::Spdae,
            4 => StoredKind::FixedSpeed,
            _ => return Err(Error::Corrupt(format!("unknown run kind {c}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryHeader {
    pub grid: Grid,
    pub model: ModelSpec,
    pub xi: f64,
    pub modes: usize,
    pub kind: StoredKind,
    pub dt: f64,
    pub stride: usize,
    pub seed: u64,
    pub realization: usize,
    pub status: Status,
    pub t0: f64,
    pub delta: f64,
    pub template_center: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub series: RealizationSeries,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub final_profile: Vec<f64>,
}

impl Trajectory {
    pub fn from_result(config: &EnsembleConfig, result: &RealizationResult) -> Result<Self> {
        let kind = match config.kind {
            RunKind::Pde => StoredKind::Pde,
            RunKind::Pdae => StoredKind::Pdae,
            RunKind::Spde => StoredKind::Spde,
            RunKind::Spdae => StoredKind::Spdae,
            RunKind::FixedSpeed(_) => StoredKind::FixedSpeed,
        };
        let modes = if kind == StoredKind::Pde || kind == StoredKind::Pdae {
            0
        } else {
            config.noise_model()?.modes()
        };
        Ok(Self {
            header: TrajectoryHeader {
                grid: config.grid.clone(),
                model: config.model,
                xi: config.xi,
                modes,
                kind,
                dt: config.dt,
                stride: config.snapshot_stride,
                seed: config.seed,
                realization: result.index,
                status: result.status,
                t0: config.t0,
                delta: config.delta,
                template_center: config.template.center,
            },
            series: result.series.clone(),
            snapshots: result.snapshots.clone(),
            final_profile: result.final_profile.clone(),
        })
    }

    /// Recompute all estimators, optionally from another `t0`. The stored
    /// positions were taken at the recorded `delta`.
    pub fn estimates(&self, t0: Option<f64>) -> Estimates {
        let h = &self.header;
        estimate(&self.series, h.kind.is_frozen(), t0.unwrap_or(h.t0), h.delta)
    }

    /// The stored realization with its estimators recomputed.
    pub fn to_result(&self, t0: Option<f64>) -> RealizationResult {
        RealizationResult {
            index: self.header.realization,
            status: self.header.status,
            series: self.series.clone(),
            estimates: self.estimates(t0),
            final_profile: self.final_profile.clone(),
            snapshots: self.snapshots.clone(),
            ambiguous_shifts: 0,
            failed_shifts: 0,
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let h = &self.header;
        let m = h.grid.points();
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_f64::<LE>(h.grid.length())?;
        w.write_u64::<LE>(m as u64)?;
        let (bc, left, right) = match h.grid.bc() {
            BoundaryCondition::Neumann => (0u8, 0.0, 0.0),
            BoundaryCondition::Dirichlet { left, right } => (1, left, right),
        };
        w.write_u8(bc)?;
        w.write_f64::<LE>(left)?;
        w.write_f64::<LE>(right)?;
        w.write_f64::<LE>(h.model.alpha)?;
        w.write_f64::<LE>(h.model.nu)?;
        w.write_f64::<LE>(h.model.mu)?;
        w.write_u8(match h.model.interpretation {
            Interpretation::Ito => 0,
            Interpretation::Stratonovich => 1,
        })?;
        w.write_f64::<LE>(h.xi)?;
        w.write_u64::<LE>(h.modes as u64)?;
        w.write_u8(h.kind.code())?;
        w.write_f64::<LE>(h.dt)?;
        w.write_u64::<LE>(h.stride as u64)?;
        w.write_u64::<LE>(h.seed)?;
        w.write_u64::<LE>(h.realization as u64)?;
        let (code, at) = match h.status {
            Status::Done => (0u8, 0),
            Status::BlownUp { step } => (1, step),
            Status::Extinct { step } => (2, step),
            Status::Running => (3, 0),
        };
        w.write_u8(code)?;
        w.write_u64::<LE>(at)?;
        w.write_f64::<LE>(h.t0)?;
        w.write_f64::<LE>(h.delta)?;
        w.write_f64::<LE>(h.template_center)?;

        let s = &self.series;
        w.write_u64::<LE>(s.len() as u64)?;
        for n in 0..s.len() {
            for v in [s.times[n], s.lambda[n], s.gamma[n], s.shift[n], s.a[n], s.b[n], s.c[n], s.width[n]] {
                w.write_f64::<LE>(v)?;
            }
        }
        w.write_u64::<LE>(self.snapshots.len() as u64)?;
        for (t, u) in &self.snapshots {
            if u.len() != m {
                return Err(Error::GridMismatch("snapshot length differs from the grid".into()));
            }
            w.write_f64::<LE>(*t)?;
            for v in u {
                w.write_f64::<LE>(*v)?;
            }
        }
        if self.final_profile.len() != m {
            return Err(Error::GridMismatch("final profile length differs from the grid".into()));
        }
        for v in &self.final_profile {
            w.write_f64::<LE>(*v)?;
        }
        w.write_all(END)?;
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Corrupt("not a trajectory file (bad magic)".into()));
        }
        let version = r.read_u32::<LE>().map_err(truncated)?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let f = |r: &mut R| r.read_f64::<LE>().map_err(truncated);
        let u = |r: &mut R| r.read_u64::<LE>().map_err(truncated);
        let b = |r: &mut R| r.read_u8().map_err(truncated);

        let length = f(&mut r)?;
        let m = u(&mut r)? as usize;
        let bc = b(&mut r)?;
        let (left, right) = (f(&mut r)?, f(&mut r)?);
        let bc = match bc {
            0 => BoundaryCondition::Neumann,
            1 => BoundaryCondition::Dirichlet { left, right },
            c => return Err(Error::Corrupt(format!("unknown boundary condition {c}"))),
        };
        let grid = Grid::new(length, m, bc).map_err(|e| Error::Corrupt(e.to_string()))?;
        let (alpha, nu, mu) = (f(&mut r)?, f(&mut r)?, f(&mut r)?);
        let interpretation = match b(&mut r)? {
            0 => Interpretation::Ito,
            1 => Interpretation::Stratonovich,
            c => return Err(Error::Corrupt(format!("unknown interpretation {c}"))),
        };
        let xi = f(&mut r)?;
        let modes = u(&mut r)? as usize;
        let kind = StoredKind::from_code(b(&mut r)?)?;
        let dt = f(&mut r)?;
        let stride = u(&mut r)? as usize;
        let seed = u(&mut r)?;
        let realization = u(&mut r)? as usize;
        let code = b(&mut r)?;
        let at = u(&mut r)?;
        let status = match code {
            0 => Status::Done,
            1 => Status::BlownUp { step: at },
            2 => Status::Extinct { step: at },
            3 => Status::Running,
            c => return Err(Error::Corrupt(format!("unknown status {c}"))),
        };
        let t0 = f(&mut r)?;
        let delta = f(&mut r)?;
        let template_center = f(&mut r)?;

        let n = u(&mut r)? as usize;
        let mut s = RealizationSeries::default();
        for _ in 0..n {
            s.times.push(f(&mut r)?);
            s.lambda.push(f(&mut r)?);
            s.gamma.push(f(&mut r)?);
            s.shift.push(f(&mut r)?);
            s.a.push(f(&mut r)?);
            s.b.push(f(&mut r)?);
            s.c.push(f(&mut r)?);
            s.width.push(f(&mut r)?);
        }
        let count = u(&mut r)? as usize;
        let mut snapshots = Vec::new();
        for _ in 0..count {
            let t = f(&mut r)?;
            let mut v = Vec::with_capacity(m);
            for _ in 0..m {
                v.push(f(&mut r)?);
            }
            snapshots.push((t, v));
        }
        let mut final_profile = Vec::with_capacity(m);
        for _ in 0..m {
            final_profile.push(f(&mut r)?);
        }
        let mut end = [0u8; 4];
        r.read_exact(&mut end).map_err(truncated)?;
        if &end != END {
            return Err(Error::Corrupt("missing end marker".into()));
        }
        Ok(Self {
            header: TrajectoryHeader {
                grid,
                model: ModelSpec {
                    alpha,
                    nu,
                    mu,
                    interpretation,
                },
                xi,
                modes,
                kind,
                dt,
                stride,
                seed,
                realization,
                status,
                t0,
                delta,
                template_center,
            },
            series: s,
            snapshots,
            final_profile,
        })
    }
}

/// Re-summarize stored realizations of one run. All must share the grid and
/// kind; they are taken in realization order.
pub fn summarize_trajectories(trajectories: &[Trajectory], t0: Option<f64>) -> Result<EnsembleSummary> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidParameter("no trajectories to summarize".into()))?;
    let h = &first.header;
    if let Some(bad) = trajectories
        .iter()
        .find(|t| t.header.grid != h.grid || t.header.kind != h.kind)
    {
        return Err(Error::GridMismatch(format!(
            "realization {} was stored for another grid or run kind",
            bad.header.realization
        )));
    }
    let mut sorted: Vec<&Trajectory> = trajectories.iter().collect();
    sorted.sort_by_key(|t| t.header.realization);
    let results: Vec<RealizationResult> = sorted.iter().map(|t| t.to_result(t0)).collect();
    let kind = match h.kind {
        StoredKind::Pde => RunKind::Pde,
        StoredKind::Pdae => RunKind::Pdae,
        StoredKind::Spde => RunKind::Spde,
        StoredKind::Spdae => RunKind::Spdae,
        StoredKind::FixedSpeed => RunKind::FixedSpeed(FrameSpeed::Constant(f64::NAN)),
    };
    summarize_runs(&kind, &h.grid, t0.unwrap_or(h.t0), Some(h.template_center), &results)
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Corrupt("file is truncated".into())
    } else {
        Error::Io(e)
    }
}
