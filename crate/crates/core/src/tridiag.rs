//! Tridiagonal matrices and a Thomas-algorithm factorization.
//!
//! The factorization is computed once and then only read, so a single
//! `TridiagonalLu` can be shared by every realization of an ensemble.

use crate::error::{Error, Result};

/// Square tridiagonal matrix stored by diagonals.
///
/// `lower[i]` is the entry at `(i, i - 1)` (so `lower[0]` is unused) and
/// `upper[i]` the entry at `(i, i + 1)` (so `upper[n - 1]` is unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![1.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `out = self * x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        if n == 1 {
            out[0] = self.diag[0] * x[0];
            return;
        }
        out[0] = self.diag[0] * x[0] + self.upper[0] * x[1];
        for i in 1..n - 1 {
            out[i] = self.lower[i] * x[i - 1] + self.diag[i] * x[i] + self.upper[i] * x[i + 1];
        }
        out[n - 1] = self.lower[n - 1] * x[n - 2] + self.diag[n - 1] * x[n - 1];
    }

    /// `a * self + b * other`
    pub fn combine(&self, a: f64, other: &Tridiagonal, b: f64) -> Tridiagonal {
        let mix = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(p, q)| a * p + b * q).collect();
        Tridiagonal {
            lower: mix(&self.lower, &other.lower),
            diag: mix(&self.diag, &other.diag),
            upper: mix(&self.upper, &other.upper),
        }
    }

    /// `I - scale * self`
    pub fn identity_minus(&self, scale: f64) -> Tridiagonal {
        Tridiagonal::identity(self.len()).combine(1.0, self, -scale)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i > 0 {
                m[i][i - 1] = self.lower[i];
            }
            if i + 1 < n {
                m[i][i + 1] = self.upper[i];
            }
        }
        m
    }

    pub fn factor(&self) -> Result<TridiagonalLu> {
        TridiagonalLu::new(self)
    }
}

/// LU factors of a tridiagonal matrix (no pivoting).
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    // reciprocal of the modified diagonal
    inv_diag: Vec<f64>,
    // modified super-diagonal c'_i = c_i / d'_i
    upper: Vec<f64>,
}

impl TridiagonalLu {
    pub fn new(m: &Tridiagonal) -> Result<Self> {
        let n = m.len();
        let mut inv_diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut prev_upper = 0.0;
        for i in 0..n {
            let d = if i == 0 {
                m.diag[0]
            } else {
                m.diag[i] - m.lower[i] * prev_upper
            };
            if d == 0.0 || !d.is_finite() {
                return Err(Error::SingularPivot { row: i });
            }
            inv_diag[i] = 1.0 / d;
            upper[i] = if i + 1 < n { m.upper[i] * inv_diag[i] } else { 0.0 };
            prev_upper = upper[i];
        }
        Ok(Self {
            lower: m.lower.clone(),
            inv_diag,
            upper,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_diag.is_empty()
    }

    /// Overwrite `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_diag[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_diag[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_dominant(n: usize, seed: &[f64]) -> Tridiagonal {
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            let s = seed[i % seed.len()];
            t.lower[i] = if i > 0 { s - 0.5 } else { 0.0 };
            t.upper[i] = if i + 1 < n { 0.3 - s } else { 0.0 };
            t.diag[i] = 3.0 + s;
        }
        t
    }

    #[test]
    fn solves_small_system() {
        let m = Tridiagonal {
            lower: vec![0.0, 1.0, 1.0],
            diag: vec![2.0, 2.0, 2.0],
            upper: vec![1.0, 1.0, 0.0],
        };
        let mut b = vec![3.0, 4.0, 3.0];
        m.factor().unwrap().solve_in_place(&mut b);
        for v in b {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let m = Tridiagonal {
            lower: vec![0.0, 1.0],
            diag: vec![0.0, 1.0],
            upper: vec![1.0, 0.0],
        };
        assert!(matches!(m.factor(), Err(Error::SingularPivot { row: 0 })));
    }

    proptest! {
        #[test]
        fn matches_dense_solve(seed in prop::collection::vec(0.0f64..1.0, 1..20), n in 2usize..50) {
            let m = random_dominant(n, &seed);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut x = b.clone();
            m.factor().unwrap().solve_in_place(&mut x);
            let oracle = dense::solve(m.to_dense(), b);
            for (a, o) in x.iter().zip(&oracle) {
                prop_assert!((a - o).abs() <= 1e-12 * (1.0 + o.abs()));
            }
        }

        #[test]
        fn apply_matches_dense(seed in prop::collection::vec(0.0f64..1.0, 1..20), n in 2usize..50) {
            let m = random_dominant(n, &seed);
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
            let mut out = vec![0.0; n];
            m.apply(&x, &mut out);
            let oracle = dense::matvec(&m.to_dense(), &x);
            for (a, o) in out.iter().zip(&oracle) {
                prop_assert!((a - o).abs() <= 1e-13);
            }
        }
    }
}
