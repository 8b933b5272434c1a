//! Finite-difference operators on a [`Grid`].
//!
//! Every operator acts on the vector of unknowns. Boundary data enter through a
//! separate correction vector (`phi` for the Laplacian, `eta` for first
//! derivatives) so that the same stencil serves both boundary kinds. Under
//! Neumann conditions the ghost values are mirror images of the first interior
//! neighbour and the corrections vanish.

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Grid};
use crate::tridiag::Tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorKind {
    Laplacian,
    /// Backward difference `(u_j - u_{j-1}) / dx`.
    Left,
    /// Forward difference `(u_{j+1} - u_j) / dx`.
    Right,
    /// Central difference `(u_{j+1} - u_{j-1}) / (2 dx)`.
    Central,
    /// `w * Left + (1 - w) * Right`.
    Blend { weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstDerivative {
    Left,
    Right,
    Central,
}

/// A banded finite-difference operator plus its boundary correction.
#[derive(Debug, Clone)]
pub struct DiffOperator {
    pub kind: OperatorKind,
    pub stencil: Tridiagonal,
    pub correction: Vec<f64>,
}

impl DiffOperator {
    /// `out = stencil * u`
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        self.stencil.apply(u, out);
    }

    /// `out = stencil * u + correction`
    pub fn apply_with_boundary(&self, u: &[f64], out: &mut [f64]) {
        self.stencil.apply(u, out);
        for (o, c) in out.iter_mut().zip(&self.correction) {
            *o += c;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.stencil.to_dense()
    }
}

/// Second-derivative matrix `A` and its boundary vector `phi`.
pub fn build_laplacian(grid: &Grid) -> DiffOperator {
    let n = grid.unknowns();
    let h2 = grid.dx() * grid.dx();
    let mut stencil = Tridiagonal::zeros(n);
    for i in 0..n {
        stencil.diag[i] = -2.0 / h2;
        if i > 0 {
            stencil.lower[i] = 1.0 / h2;
        }
        if i + 1 < n {
            stencil.upper[i] = 1.0 / h2;
        }
    }
    let mut correction = vec![0.0; n];
    match grid.bc() {
        BoundaryCondition::Neumann => {
            stencil.upper[0] = 2.0 / h2;
            stencil.lower[n - 1] = 2.0 / h2;
        }
        BoundaryCondition::Dirichlet { left, right } => {
            correction[0] += left / h2;
            correction[n - 1] += right / h2;
        }
    }
    DiffOperator {
        kind: OperatorKind::Laplacian,
        stencil,
        correction,
    }
}

pub fn build_first_derivative(grid: &Grid, which: FirstDerivative) -> DiffOperator {
    let n = grid.unknowns();
    let h = grid.dx();
    let mut stencil = Tridiagonal::zeros(n);
    let mut correction = vec![0.0; n];
    // (lower, diag, upper) coefficients of an interior row
    let (lo, di, up, kind) = match which {
        FirstDerivative::Left => (-1.0 / h, 1.0 / h, 0.0, OperatorKind::Left),
        FirstDerivative::Right => (0.0, -1.0 / h, 1.0 / h, OperatorKind::Right),
        FirstDerivative::Central => (-0.5 / h, 0.0, 0.5 / h, OperatorKind::Central),
    };
    for i in 0..n {
        stencil.diag[i] = di;
        if i > 0 {
            stencil.lower[i] = lo;
        }
        if i + 1 < n {
            stencil.upper[i] = up;
        }
    }
    match grid.bc() {
        BoundaryCondition::Neumann => {
            // mirror ghosts u_{-1} = u_1 and u_n = u_{n-2}
            stencil.upper[0] += lo;
            stencil.lower[n - 1] += up;
        }
        BoundaryCondition::Dirichlet { left, right } => {
            correction[0] += lo * left;
            correction[n - 1] += up * right;
        }
    }
    DiffOperator {
        kind,
        stencil,
        correction,
    }
}

/// Weight of the backward difference in the upwind blend, `exp(-beta * speed)`
/// clamped to `[0, 1]`.
pub fn upwind_weight(speed: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    let w = (-beta * speed).exp();
    if w.is_nan() {
        1.0
    } else {
        w.clamp(0.0, 1.0)
    }
}

/// `D = w D_L + (1 - w) D_R` with `w = upwind_weight(speed, beta)`.
pub fn build_upwind_blend(grid: &Grid, speed: f64, beta: f64) -> Result<DiffOperator> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
    }
    let w = upwind_weight(speed, beta);
    let left = build_first_derivative(grid, FirstDerivative::Left);
    let right = build_first_derivative(grid, FirstDerivative::Right);
    let stencil = left.stencil.combine(w, &right.stencil, 1.0 - w);
    let correction = left
        .correction
        .iter()
        .zip(&right.correction)
        .map(|(l, r)| w * l + (1.0 - w) * r)
        .collect();
    Ok(DiffOperator {
        kind: OperatorKind::Blend { weight: w },
        stencil,
        correction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tridiag::dense;
    use proptest::prelude::*;

    fn neumann(points: usize, dx: f64) -> Grid {
        Grid::new(dx * (points - 1) as f64, points, BoundaryCondition::Neumann).unwrap()
    }

    fn dirichlet(points: usize, dx: f64, left: f64, right: f64) -> Grid {
        Grid::new(
            dx * (points - 1) as f64,
            points,
            BoundaryCondition::Dirichlet { left, right },
        )
        .unwrap()
    }

    #[test]
    fn dirichlet_laplacian_rows() {
        // five interior unknowns, dx = 1
        let g = dirichlet(7, 1.0, 0.0, 0.0);
        let a = build_laplacian(&g);
        let d = a.to_dense();
        assert_eq!(d.len(), 5);
        assert_eq!(d[0][..2], [-2.0, 1.0]);
        assert_eq!(d[2][1..4], [1.0, -2.0, 1.0]);
        assert_eq!(d[4][3..], [1.0, -2.0]);
    }

    #[test]
    fn neumann_laplacian_annihilates_constants() {
        let g = neumann(9, 0.25);
        let a = build_laplacian(&g);
        let d = a.to_dense();
        assert_eq!(d[0][..2], [-32.0, 32.0]);
        assert_eq!(d[8][7..], [32.0, -32.0]);
        let mut out = vec![1.0; 9];
        a.apply_with_boundary(&[1.0; 9], &mut out);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn laplacian_exact_on_quadratics() {
        let g = dirichlet(21, 0.1, 0.0, 4.0);
        let a = build_laplacian(&g);
        let full = g.sample(|x| x * x);
        let u = g.restrict(&full);
        let mut out = vec![0.0; u.len()];
        a.apply_with_boundary(u, &mut out);
        for v in out {
            assert!((v - 2.0).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn dirichlet_laplacian_kills_linear_interpolant() {
        let (gl, gr) = (1.0, 0.25);
        let g = dirichlet(12, 0.5, gl, gr);
        let full = g.sample(|x| gl + (gr - gl) * x / g.length());
        let u = g.restrict(&full);
        let mut out = vec![0.0; u.len()];
        build_laplacian(&g).apply_with_boundary(u, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn first_derivatives_exact_on_affine() {
        let g = dirichlet(15, 0.2, 1.0, 3.0 * 2.8 + 1.0);
        let full = g.sample(|x| 3.0 * x + 1.0);
        let u = g.restrict(&full);
        for which in [FirstDerivative::Left, FirstDerivative::Right, FirstDerivative::Central] {
            let mut out = vec![0.0; u.len()];
            build_first_derivative(&g, which).apply_with_boundary(u, &mut out);
            for v in &out {
                assert!((v - 3.0).abs() < 1e-12, "{which:?}: {v}");
            }
        }
    }

    #[test]
    fn central_difference_exact_on_quadratic() {
        // x = 1 is grid point 2 for dx = 0.5
        let g = neumann(6, 0.5);
        let u = g.sample(|x| x * x);
        let mut out = vec![0.0; 6];
        build_first_derivative(&g, FirstDerivative::Central).apply(&u, &mut out);
        assert_eq!(out[2], 2.0);
    }

    #[test]
    fn neumann_central_boundary_rows_vanish() {
        let g = neumann(10, 0.1);
        let u = g.sample(|x| (3.0 * x).sin() + x);
        let mut out = vec![0.0; 10];
        build_first_derivative(&g, FirstDerivative::Central).apply(&u, &mut out);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[9], 0.0);
    }

    #[test]
    fn blend_limits() {
        let g = neumann(8, 0.1);
        let dl = build_first_derivative(&g, FirstDerivative::Left);
        let dr = build_first_derivative(&g, FirstDerivative::Right);
        for speed in [-3.0, 0.0, 1.0, 100.0] {
            let b = build_upwind_blend(&g, speed, 0.0).unwrap();
            assert_eq!(b.stencil, dl.stencil);
        }
        assert_eq!(build_upwind_blend(&g, 0.0, 0.5).unwrap().stencil, dl.stencil);
        let far = build_upwind_blend(&g, 1e6, 0.5).unwrap();
        assert_eq!(far.stencil, dr.stencil);
        assert_eq!(upwind_weight(f64::INFINITY, 0.5), 0.0);
        assert!(build_upwind_blend(&g, 1.0, -0.1).is_err());
    }

    #[test]
    fn zero_vector_maps_to_zero_under_neumann() {
        let g = neumann(7, 0.3);
        let zero = vec![0.0; 7];
        let mut ops = vec![
            build_laplacian(&g),
            build_upwind_blend(&g, 0.7, 0.5).unwrap(),
        ];
        for which in [FirstDerivative::Left, FirstDerivative::Right, FirstDerivative::Central] {
            ops.push(build_first_derivative(&g, which));
        }
        for op in ops {
            let mut out = vec![1.0; 7];
            op.apply_with_boundary(&zero, &mut out);
            assert!(out.iter().all(|v| *v == 0.0));
            assert!(op.correction.iter().all(|v| *v == 0.0));
        }
    }

    proptest! {
        #[test]
        fn blend_weight_in_unit_interval(speed in -1e3f64..1e3, beta in 0.0f64..10.0) {
            let w = upwind_weight(speed, beta);
            prop_assert!((0.0..=1.0).contains(&w));
        }

        #[test]
        fn stencils_match_dense_assembly(
            points in 4usize..50,
            dirichlet_bc in any::<bool>(),
            values in prop::collection::vec(-5.0f64..5.0, 50),
            speed in -5.0f64..5.0,
        ) {
            let g = if dirichlet_bc { dirichlet(points, 0.1, 0.3, -0.2) } else { neumann(points, 0.1) };
            let n = g.unknowns();
            let u = &values[..n];
            let mut ops = vec![build_laplacian(&g), build_upwind_blend(&g, speed, 0.5).unwrap()];
            for which in [FirstDerivative::Left, FirstDerivative::Right, FirstDerivative::Central] {
                ops.push(build_first_derivative(&g, which));
            }
            for op in ops {
                let mut out = vec![0.0; n];
                op.apply(u, &mut out);
                let oracle = dense::matvec(&op.to_dense(), u);
                for (a, b) in out.iter().zip(&oracle) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }
}
