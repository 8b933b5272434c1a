//! Uniform one-dimensional mesh on `[0, L]` with its boundary-condition kind.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition imposed at both ends of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    /// Fixed values at `x = 0` and `x = L`; only interior points are unknowns.
    Dirichlet { left: f64, right: f64 },
    /// Zero flux; every grid point is an unknown.
    Neumann,
}

/// Uniform grid `x_i = i * dx`, `i = 0..points`, including both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    length: f64,
    points: usize,
    dx: f64,
    bc: BoundaryCondition,
}

impl Grid {
    pub const MIN_POINTS: usize = 4;

    pub fn new(length: f64, points: usize, bc: BoundaryCondition) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if points < Self::MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} points, got {points}",
                Self::MIN_POINTS
            )));
        }
        if let BoundaryCondition::Dirichlet { left, right } = bc {
            if !(left.is_finite() && right.is_finite()) {
                return Err(Error::InvalidGrid("non-finite Dirichlet data".into()));
            }
        }
        let dx = length / (points - 1) as f64;
        Ok(Self { length, points, dx, bc })
    }

    /// Grid with spacing `dx`; `length / dx` must be (numerically) an integer.
    pub fn with_spacing(length: f64, dx: f64, bc: BoundaryCondition) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidGrid(format!("dx must be positive, got {dx}")));
        }
        let cells = length / dx;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-8 * cells.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "length {length} is not a multiple of dx {dx}"
            )));
        }
        Self::new(length, rounded as usize + 1, bc)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    /// Number of unknowns: `M - 2` for Dirichlet, `M` for Neumann.
    pub fn unknowns(&self) -> usize {
        match self.bc {
            BoundaryCondition::Dirichlet { .. } => self.points - 2,
            BoundaryCondition::Neumann => self.points,
        }
    }

    /// Index of the first unknown within the full set of grid points.
    pub fn first_unknown(&self) -> usize {
        match self.bc {
            BoundaryCondition::Dirichlet { .. } => 1,
            BoundaryCondition::Neumann => 0,
        }
    }

    /// Restrict a full-grid field to the unknowns.
    pub fn restrict<'a>(&self, full: &'a [f64]) -> &'a [f64] {
        let start = self.first_unknown();
        &full[start..start + self.unknowns()]
    }

    /// Expand an unknown vector to the full grid, filling Dirichlet data at the ends.
    pub fn expand_into(&self, unknowns: &[f64], full: &mut Vec<f64>) {
        full.clear();
        match self.bc {
            BoundaryCondition::Dirichlet { left, right } => {
                full.push(left);
                full.extend_from_slice(unknowns);
                full.push(right);
            }
            BoundaryCondition::Neumann => full.extend_from_slice(unknowns),
        }
    }

    pub fn expand(&self, unknowns: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(self.points);
        self.expand_into(unknowns, &mut full);
        full
    }

    /// Sample `f` at every grid point.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.points).map(|i| f(self.x(i))).collect()
    }

    /// Linear interpolation of full-grid `values` at `x`; queries outside `[0, L]` fail.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        debug_assert_eq!(values.len(), self.points);
        if !(x >= 0.0 && x <= self.length) {
            return Err(Error::OutOfDomain { x, length: self.length });
        }
        Ok(interpolate_clamped(values, self.dx, x))
    }
}

/// Piecewise-linear interpolation on a uniform grid starting at 0 with constant
/// extension beyond either end.
pub(crate) fn interpolate_clamped(values: &[f64], dx: f64, x: f64) -> f64 {
    let n = values.len();
    let s = x / dx;
    if s <= 0.0 {
        return values[0];
    }
    let last = (n - 1) as f64;
    if s >= last {
        return values[n - 1];
    }
    let i = s.floor() as usize;
    let frac = s - i as f64;
    if frac == 0.0 {
        values[i]
    } else {
        values[i] + frac * (values[i + 1] - values[i])
    }
}
