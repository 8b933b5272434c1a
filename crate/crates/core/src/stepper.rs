//! Semi-implicit time stepping.
//!
//! Only the Laplacian is treated implicitly; reaction, advection and noise are
//! explicit. Every step therefore solves with the same matrix `I - dt A`,
//! factored once per [`Stepper`] and shared read-only. Frozen (comoving) steps
//! append the unknown speed `lambda` and the phase condition to that system;
//! the bordered matrix is never formed, it is solved by bordering with two
//! solves against the shared factorization.
//!
//! All variants go through one routine, so a zero noise increment reproduces
//! the deterministic step bit for bit.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Interpretation, ScalarModel};
use crate::ops::{
    build_first_derivative, build_laplacian, upwind_weight, DiffOperator, FirstDerivative,
};
use crate::tridiag::{Tridiagonal, TridiagonalLu};

pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 25.0;
pub const DEFAULT_EXTINCTION_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Running,
    BlownUp { step: u64 },
    Extinct { step: u64 },
    Done,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::BlownUp { .. } => "blown_up",
            Status::Extinct { .. } => "extinct",
            Status::Done => "done",
        }
    }
}

/// Discretisation of the advection term `lambda v_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Advection {
    Central,
    /// `w D_L + (1 - w) D_R` with `w = exp(-beta lambda)` clamped to `[0, 1]`.
    Upwind { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Semi-implicit Euler-Heun; converges to the Stratonovich solution.
    EulerHeun,
    /// Semi-implicit Euler-Maruyama; converges to the Itô solution. A
    /// Stratonovich model is stepped with its Itô-corrected drift.
    EulerMaruyamaOnCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperOptions {
    pub dt: f64,
    pub advection: Advection,
    pub blowup_threshold: f64,
    pub extinction_steps: usize,
    /// Level whose interior crossing must exist; `(u_- + u_+) / 2`.
    pub extinction_level: f64,
}

impl StepperOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            advection: Advection::Central,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            extinction_steps: DEFAULT_EXTINCTION_STEPS,
            extinction_level: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    rhs: Vec<f64>,
    column: Vec<f64>,
    work: Vec<f64>,
    z: Vec<f64>,
}

/// State of one realization.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Values at the unknowns (interior points for Dirichlet).
    pub u: Vec<f64>,
    /// Speed of the frame over the last step (0 when not comoving).
    pub lambda: f64,
    /// Accumulated frame position `sum lambda dt`.
    pub gamma: f64,
    pub t: f64,
    pub step: u64,
    pub status: Status,
    /// `|c . q|` of the last bordered solve, 0 before any frozen step.
    pub border_pivot: f64,
    quiet_steps: usize,
    scratch: Scratch,
}

impl SolverState {
    pub fn new(u: Vec<f64>) -> Self {
        Self {
            u,
            lambda: 0.0,
            gamma: 0.0,
            t: 0.0,
            step: 0,
            status: Status::Running,
            border_pivot: 0.0,
            quiet_steps: 0,
            scratch: Scratch::default(),
        }
    }

    /// Initial state from full-grid values.
    pub fn from_full(grid: &Grid, full: &[f64]) -> Result<Self> {
        if full.len() != grid.points() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                full.len(),
                grid.points()
            )));
        }
        Ok(Self::new(grid.restrict(full).to_vec()))
    }

    pub fn is_running(&self) -> bool {
        self.status == Status::Running
    }

    pub fn finish(&mut self) {
        if self.status == Status::Running {
            self.status = Status::Done;
        }
    }
}

/// Frozen bordered system
///
/// ```text
/// [ I - dt A      -dt (D v + eta) ] [ v' ]   [ v + dt (f(v) + phi) + noise ]
/// [ dx (D_C u^)^T        0        ] [ l  ] = [ dx <D_C u^, u^>             ]
/// ```
#[derive(Debug, Clone)]
pub struct BorderedSystem {
    pub principal: Tridiagonal,
    pub column: Vec<f64>,
    pub row: Vec<f64>,
    pub rhs: Vec<f64>,
    pub rhs_scalar: f64,
}

impl BorderedSystem {
    pub fn to_dense(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.rhs.len();
        let mut m = self.principal.to_dense();
        for (i, row) in m.iter_mut().enumerate() {
            row.push(self.column[i]);
        }
        let mut last = self.row.clone();
        last.push(0.0);
        m.push(last);
        let mut b = self.rhs.clone();
        b.push(self.rhs_scalar);
        debug_assert_eq!(m.len(), n + 1);
        (m, b)
    }

    /// Solve by bordering; returns `(v, lambda)`.
    pub fn solve(&self) -> Result<(Vec<f64>, f64)> {
        let lu = self.principal.factor()?;
        let mut v = self.rhs.clone();
        let mut q = self.column.clone();
        let (lambda, _) = solve_bordered(&lu, &mut v, &mut q, &self.row, self.rhs_scalar)
            .ok_or(Error::SingularPivot { row: self.rhs.len() })?;
        Ok((v, lambda))
    }
}

// On entry `rhs` holds the principal right-hand side and `column` the border
// column; on exit `rhs` holds v. Returns lambda and |c.q|, or None if the
// Schur complement vanishes.
fn solve_bordered(
    lu: &TridiagonalLu,
    rhs: &mut [f64],
    column: &mut [f64],
    row: &[f64],
    scalar: f64,
) -> Option<(f64, f64)> {
    lu.solve_in_place(rhs);
    lu.solve_in_place(column);
    let cp: f64 = row.iter().zip(rhs.iter()).map(|(c, p)| c * p).sum();
    let cq: f64 = row.iter().zip(column.iter()).map(|(c, q)| c * q).sum();
    if cq == 0.0 || !cq.is_finite() {
        return None;
    }
    let lambda = (cp - scalar) / cq;
    if !lambda.is_finite() {
        return None;
    }
    for (v, q) in rhs.iter_mut().zip(column.iter()) {
        *v -= lambda * q;
    }
    Some((lambda, cq.abs()))
}

/// Template data for the phase condition.
#[derive(Debug, Clone)]
struct Template {
    // dx * D_C u^ over the unknowns
    row: Vec<f64>,
    // dx * <D_C u^, u^>
    scalar: f64,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DriftMode {
    Plain,
    AddCorrection,
    SubtractCorrection,
}

#[derive(Debug, Clone, Copy)]
enum Frame {
    Fixed(f64),
    Frozen,
}

#[derive(Debug, Clone)]
pub struct Stepper<M> {
    grid: Grid,
    model: M,
    options: StepperOptions,
    laplacian: DiffOperator,
    principal: Tridiagonal,
    lu: TridiagonalLu,
    left: DiffOperator,
    right: DiffOperator,
    central: DiffOperator,
    template: Option<Template>,
    // half the pointwise noise variance per unit time, over the unknowns
    correction: Option<Vec<f64>>,
}

impl<M: ScalarModel> Stepper<M> {
    pub fn new(grid: Grid, model: M, options: StepperOptions) -> Result<Self> {
        if !(options.dt > 0.0 && options.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", options.dt)));
        }
        if let Advection::Upwind { beta } = options.advection {
            if !(beta >= 0.0) {
                return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
            }
        }
        if !(options.blowup_threshold > 0.0) {
            return Err(Error::InvalidParameter("blow-up threshold must be positive".into()));
        }
        let laplacian = build_laplacian(&grid);
        let principal = laplacian.stencil.identity_minus(options.dt);
        let lu = principal.factor()?;
        Ok(Self {
            left: build_first_derivative(&grid, FirstDerivative::Left),
            right: build_first_derivative(&grid, FirstDerivative::Right),
            central: build_first_derivative(&grid, FirstDerivative::Central),
            grid,
            model,
            options,
            laplacian,
            principal,
            lu,
            template: None,
            correction: None,
        })
    }

    /// Set the template `u^` (full-grid samples) used by the phase condition.
    pub fn with_template(mut self, full: &[f64]) -> Result<Self> {
        if full.len() != self.grid.points() {
            return Err(Error::GridMismatch("template length differs from grid".into()));
        }
        let values = self.grid.restrict(full).to_vec();
        let mut dc = vec![0.0; values.len()];
        self.central.apply_with_boundary(&values, &mut dc);
        let dx = self.grid.dx();
        let scalar = dx * dc.iter().zip(&values).map(|(d, v)| d * v).sum::<f64>();
        let row: Vec<f64> = dc.iter().map(|d| dx * d).collect();
        if row.iter().all(|r| *r == 0.0) {
            return Err(Error::InvalidParameter("template has no derivative mass".into()));
        }
        self.template = Some(Template { row, scalar, values });
        Ok(self)
    }

    /// Half the pointwise noise variance per unit time (full grid), used for
    /// the Itô/Stratonovich drift correction.
    pub fn with_drift_correction(mut self, half_variance: &[f64]) -> Result<Self> {
        if half_variance.len() != self.grid.points() {
            return Err(Error::GridMismatch("correction length differs from grid".into()));
        }
        self.correction = Some(self.grid.restrict(half_variance).to_vec());
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn options(&self) -> &StepperOptions {
        &self.options
    }

    pub fn dt(&self) -> f64 {
        self.options.dt
    }

    /// `dx <D_C u^, u - u^>` for unknowns `u`.
    pub fn phase_residual(&self, u: &[f64]) -> Option<f64> {
        let tpl = self.template.as_ref()?;
        Some(
            tpl.row
                .iter()
                .zip(u.iter().zip(&tpl.values))
                .map(|(c, (v, t))| c * (v - t))
                .sum(),
        )
    }

    pub fn step_pde(&self, state: &mut SolverState) -> Result<()> {
        self.advance(state, None, Scheme::EulerHeun, Frame::Fixed(0.0))
    }

    pub fn step_pdae(&self, state: &mut SolverState) -> Result<()> {
        self.advance(state, None, Scheme::EulerHeun, Frame::Frozen)
    }

    /// `noise` is the increment at every grid point.
    pub fn step_spde(&self, state: &mut SolverState, noise: &[f64], scheme: Scheme) -> Result<()> {
        self.advance(state, Some(noise), scheme, Frame::Fixed(0.0))
    }

    pub fn step_spdae(&self, state: &mut SolverState, noise: &[f64], scheme: Scheme) -> Result<()> {
        self.advance(state, Some(noise), scheme, Frame::Frozen)
    }

    /// SPDE step in a frame moving at a prescribed `speed`; `noise = None`
    /// gives the deterministic comoving step.
    pub fn step_fixed_speed(
        &self,
        state: &mut SolverState,
        speed: f64,
        noise: Option<&[f64]>,
        scheme: Scheme,
    ) -> Result<()> {
        if !speed.is_finite() {
            return Err(Error::InvalidParameter(format!("speed must be finite, got {speed}")));
        }
        self.advance(state, noise, scheme, Frame::Fixed(speed))
    }

    /// The bordered system the next frozen step would solve (for inspection).
    pub fn bordered_system(
        &self,
        state: &SolverState,
        noise: Option<&[f64]>,
        scheme: Scheme,
    ) -> Result<BorderedSystem> {
        let tpl = self.template()?;
        let mut s = state.clone();
        self.assemble(&mut s, noise, scheme, 0.0)?;
        self.advection_into(&s.u, s.lambda, &mut s.scratch.column);
        let dt = self.options.dt;
        Ok(BorderedSystem {
            principal: self.principal.clone(),
            column: s.scratch.column.iter().map(|w| -dt * w).collect(),
            row: tpl.row.clone(),
            rhs: s.scratch.rhs.clone(),
            rhs_scalar: tpl.scalar,
        })
    }

    fn template(&self) -> Result<&Template> {
        self.template
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("frozen step needs a template".into()))
    }

    fn drift_mode(&self, noisy: bool, scheme: Scheme) -> DriftMode {
        if !noisy {
            return DriftMode::Plain;
        }
        match (self.model.interpretation(), scheme) {
            (Interpretation::Stratonovich, Scheme::EulerHeun) => DriftMode::Plain,
            (Interpretation::Ito, Scheme::EulerMaruyamaOnCorrected) => DriftMode::Plain,
            (Interpretation::Stratonovich, Scheme::EulerMaruyamaOnCorrected) => {
                DriftMode::AddCorrection
            }
            (Interpretation::Ito, Scheme::EulerHeun) => DriftMode::SubtractCorrection,
        }
    }

    // D_lambda v + eta
    fn advection_into(&self, u: &[f64], speed: f64, out: &mut Vec<f64>) {
        out.resize(u.len(), 0.0);
        match self.options.advection {
            Advection::Central => self.central.apply_with_boundary(u, out),
            Advection::Upwind { beta } => {
                let w = upwind_weight(speed, beta);
                if w == 1.0 {
                    self.left.apply_with_boundary(u, out);
                } else if w == 0.0 {
                    self.right.apply_with_boundary(u, out);
                } else {
                    let mut r = vec![0.0; u.len()];
                    self.left.apply_with_boundary(u, out);
                    self.right.apply_with_boundary(u, &mut r);
                    for (o, r) in out.iter_mut().zip(r) {
                        *o = w * *o + (1.0 - w) * r;
                    }
                }
            }
        }
    }

    // rhs = u + dt (f(u) + phi + speed (D u + eta)) + noise term
    fn assemble(
        &self,
        state: &mut SolverState,
        noise: Option<&[f64]>,
        scheme: Scheme,
        speed: f64,
    ) -> Result<()> {
        let n = state.u.len();
        if n != self.grid.unknowns() {
            return Err(Error::GridMismatch(format!(
                "state has {n} unknowns, grid has {}",
                self.grid.unknowns()
            )));
        }
        let dt = self.options.dt;
        let mode = self.drift_mode(noise.is_some(), scheme);
        let correction = match mode {
            DriftMode::Plain => None,
            _ => Some(self.correction.as_deref().ok_or_else(|| {
                Error::InvalidParameter("scheme needs the noise variance for the drift correction".into())
            })?),
        };
        let Scratch { rhs, work, z, .. } = &mut state.scratch;
        rhs.resize(n, 0.0);
        let phi = &self.laplacian.correction;
        for i in 0..n {
            let u = state.u[i];
            let mut f = self.model.drift(u);
            if let Some(c) = correction {
                let g = c[i] * self.model.diffusion_derivative(u) * self.model.diffusion(u);
                if mode == DriftMode::AddCorrection {
                    f += g;
                } else {
                    f -= g;
                }
            }
            rhs[i] = f + phi[i];
        }
        if speed != 0.0 {
            self.advection_into(&state.u, speed, work);
            for (r, w) in rhs.iter_mut().zip(work.iter()) {
                *r += speed * w;
            }
        }
        for (r, u) in rhs.iter_mut().zip(&state.u) {
            *r = u + dt * *r;
        }
        if let Some(dw) = noise {
            if dw.len() != self.grid.points() {
                return Err(Error::GridMismatch(format!(
                    "noise increment has {} values, grid has {} points",
                    dw.len(),
                    self.grid.points()
                )));
            }
            let dw = self.grid.restrict(dw);
            match scheme {
                Scheme::EulerHeun => {
                    z.resize(n, 0.0);
                    for i in 0..n {
                        let u = state.u[i];
                        let g = self.model.diffusion(u);
                        z[i] = u + g * dw[i];
                        rhs[i] += 0.5 * (self.model.diffusion(z[i]) + g) * dw[i];
                    }
                }
                Scheme::EulerMaruyamaOnCorrected => {
                    for i in 0..n {
                        rhs[i] += self.model.diffusion(state.u[i]) * dw[i];
                    }
                }
            }
        }
        Ok(())
    }

    fn advance(
        &self,
        state: &mut SolverState,
        noise: Option<&[f64]>,
        scheme: Scheme,
        frame: Frame,
    ) -> Result<()> {
        if state.status != Status::Running {
            return Err(Error::NotRunning(state.status.name().into()));
        }
        let tpl = match frame {
            Frame::Frozen => Some(self.template()?),
            Frame::Fixed(_) => None,
        };
        let speed = match frame {
            Frame::Fixed(s) => s,
            Frame::Frozen => 0.0,
        };
        self.assemble(state, noise, scheme, speed)?;
        let next = state.step + 1;
        let lambda = match tpl {
            None => {
                self.lu.solve_in_place(&mut state.scratch.rhs);
                speed
            }
            Some(tpl) => {
                let dt = self.options.dt;
                let mut column = std::mem::take(&mut state.scratch.column);
                self.advection_into(&state.u, state.lambda, &mut column);
                for c in column.iter_mut() {
                    *c *= -dt;
                }
                let solved = solve_bordered(
                    &self.lu,
                    &mut state.scratch.rhs,
                    &mut column,
                    &tpl.row,
                    tpl.scalar,
                );
                state.scratch.column = column;
                match solved {
                    Some((lambda, pivot)) => {
                        state.border_pivot = pivot;
                        lambda
                    }
                    None => {
                        state.status = Status::BlownUp { step: next };
                        return Ok(());
                    }
                }
            }
        };
        std::mem::swap(&mut state.u, &mut state.scratch.rhs);
        state.lambda = lambda;
        state.gamma += lambda * self.options.dt;
        state.step = next;
        state.t = next as f64 * self.options.dt;
        self.check(state);
        Ok(())
    }

    fn check(&self, state: &mut SolverState) {
        let limit = self.options.blowup_threshold;
        if !state.lambda.is_finite() || state.u.iter().any(|v| !(v.abs() <= limit)) {
            state.status = Status::BlownUp { step: state.step };
            return;
        }
        if has_crossing(&state.u, self.options.extinction_level) {
            state.quiet_steps = 0;
        } else {
            state.quiet_steps += 1;
            if state.quiet_steps >= self.options.extinction_steps {
                state.status = Status::Extinct { step: state.step };
            }
        }
    }
}

fn has_crossing(u: &[f64], level: f64) -> bool {
    u.windows(2).any(|w| {
        let (a, b) = (w[0] - level, w[1] - level);
        (a <= 0.0 && b >= 0.0 || a >= 0.0 && b <= 0.0) && a != b
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition;
    use crate::model::{ModelSpec, ProfileSpec};
    use crate::tridiag::dense;
    use std::f64::consts::PI;

    fn neumann(points: usize, dx: f64) -> Grid {
        Grid::new(dx * (points - 1) as f64, points, BoundaryCondition::Neumann).unwrap()
    }

    fn front(grid: &Grid, k: f64, x0: f64) -> Vec<f64> {
        let p = ProfileSpec::new(k, x0).unwrap();
        grid.sample(|x| p.front(x))
    }

    fn noisy(alpha: f64, nu: f64, mu: f64) -> ModelSpec {
        ModelSpec { alpha, nu, mu, interpretation: Interpretation::Stratonovich }
    }

    fn pseudo_noise(points: usize, seed: u32) -> Vec<f64> {
        (0..points)
            .map(|i| 0.05 * ((i as f64 * 1.7 + seed as f64 * 0.3).sin()))
            .collect()
    }

    #[test]
    fn constants_are_steady_without_reaction() {
        let g = neumann(20, 0.1);
        let model = noisy(0.0, 0.0, 0.0);
        let s = Stepper::new(g, model, StepperOptions::new(0.1)).unwrap();
        // u = 1 is a rest state of the reaction too
        let mut st = SolverState::new(vec![1.0; 20]);
        for _ in 0..5 {
            s.step_pde(&mut st).unwrap();
        }
        assert!(st.u.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn heat_mode_decays_at_discrete_rate() {
        let l = 10.0;
        let points = 101;
        let g = Grid::new(l, points, BoundaryCondition::Dirichlet { left: 0.0, right: 0.0 }).unwrap();
        let flat = crate::model::ClosureModel {
            drift: |_| 0.0,
            diffusion: |_| 0.0,
            diffusion_derivative: |_| 0.0,
            interpretation: Interpretation::Ito,
        };
        let dt = 0.01;
        let s = Stepper::new(g.clone(), flat, StepperOptions::new(dt)).unwrap();
        let full = g.sample(|x| (PI * x / l).sin());
        let mut st = SolverState::from_full(&g, &full).unwrap();
        let before = st.u.clone();
        s.step_pde(&mut st).unwrap();
        let dx = g.dx();
        let mu = 4.0 / (dx * dx) * (PI * dx / (2.0 * l)).sin().powi(2);
        let factor = 1.0 / (1.0 + dt * mu);
        for (a, b) in st.u.iter().zip(&before) {
            assert!((a - factor * b).abs() < 1e-12);
        }
        let continuum = 1.0 / (1.0 + dt * PI * PI / (l * l));
        assert!((factor - continuum).abs() < 1e-6);
    }

    #[test]
    fn bordered_solve_matches_dense_oracle() {
        for (points, bc) in [
            (12, BoundaryCondition::Neumann),
            (50, BoundaryCondition::Neumann),
            (31, BoundaryCondition::Dirichlet { left: 1.0, right: 0.0 }),
        ] {
            let g = Grid::new(0.2 * (points - 1) as f64, points, bc).unwrap();
            for advection in [Advection::Central, Advection::Upwind { beta: 0.5 }] {
                let mut opts = StepperOptions::new(0.05);
                opts.advection = advection;
                let x0 = 0.4 * g.length();
                let s = Stepper::new(g.clone(), noisy(-0.25, 0.0, 0.3), opts)
                    .unwrap()
                    .with_template(&front(&g, 1.0, x0))
                    .unwrap();
                let mut st = SolverState::from_full(&g, &front(&g, 0.8, x0 + 0.3)).unwrap();
                st.lambda = 0.7;
                let dw = pseudo_noise(points, 1);
                let sys = s.bordered_system(&st, Some(&dw), Scheme::EulerHeun).unwrap();
                let (m, b) = sys.to_dense();
                let oracle = dense::solve(m, b);
                let (v, lambda) = sys.solve().unwrap();
                s.step_spdae(&mut st, &dw, Scheme::EulerHeun).unwrap();
                let n = v.len();
                let scale = oracle.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                for i in 0..n {
                    assert!((v[i] - oracle[i]).abs() <= 1e-10 * scale);
                    assert!((st.u[i] - oracle[i]).abs() <= 1e-10 * scale);
                }
                assert!((lambda - oracle[n]).abs() <= 1e-10 * oracle[n].abs().max(1.0));
                assert!((st.lambda - oracle[n]).abs() <= 1e-10 * oracle[n].abs().max(1.0));
            }
        }
    }

    #[test]
    fn phase_condition_holds_after_frozen_steps() {
        let g = neumann(401, 0.1);
        let tpl = front(&g, FRAC_1_SQRT_2, 16.0);
        let s = Stepper::new(g.clone(), noisy(-0.25, 0.0, 0.1), StepperOptions::new(0.05))
            .unwrap()
            .with_template(&tpl)
            .unwrap();
        let mut st = SolverState::from_full(&g, &tpl).unwrap();
        let norm = tpl.iter().map(|v| v * v).sum::<f64>().sqrt();
        for n in 0..40 {
            let dw = pseudo_noise(401, n);
            s.step_spdae(&mut st, &dw, Scheme::EulerHeun).unwrap();
            assert!(s.phase_residual(&st.u).unwrap().abs() < 1e-10 * norm);
        }
    }

    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn zero_noise_reduces_bit_for_bit() {
        let g = neumann(301, 0.1);
        let init = front(&g, FRAC_1_SQRT_2, 12.0);
        let model = noisy(-0.25, 0.2, 0.5);
        let mut opts = StepperOptions::new(0.05);
        opts.advection = Advection::Upwind { beta: 0.5 };
        let s = Stepper::new(g.clone(), model, opts).unwrap().with_template(&init).unwrap();
        let zero = vec![0.0; 301];

        let (mut a, mut b) = (SolverState::from_full(&g, &init).unwrap(), SolverState::from_full(&g, &init).unwrap());
        let (mut c, mut d) = (a.clone(), a.clone());
        let mut e = a.clone();
        for _ in 0..30 {
            s.step_pde(&mut a).unwrap();
            s.step_spde(&mut b, &zero, Scheme::EulerHeun).unwrap();
            s.step_pdae(&mut c).unwrap();
            s.step_spdae(&mut d, &zero, Scheme::EulerHeun).unwrap();
            s.step_fixed_speed(&mut e, 0.0, Some(&zero), Scheme::EulerHeun).unwrap();
        }
        assert_eq!(a.u, b.u);
        assert_eq!(a.u, e.u);
        assert_eq!(c.u, d.u);
        assert_eq!(c.lambda, d.lambda);
        assert_eq!(c.gamma, d.gamma);
    }

    #[test]
    fn noiseless_model_ignores_increments() {
        let g = neumann(101, 0.1);
        let init = front(&g, 1.0, 5.0);
        let s = Stepper::new(g.clone(), ModelSpec::deterministic(-0.25), StepperOptions::new(0.05)).unwrap();
        let mut a = SolverState::from_full(&g, &init).unwrap();
        let mut b = a.clone();
        for n in 0..10 {
            s.step_pde(&mut a).unwrap();
            s.step_spde(&mut b, &pseudo_noise(101, n), Scheme::EulerHeun).unwrap();
        }
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn additive_noise_heun_equals_maruyama() {
        let g = neumann(101, 0.1);
        let init = front(&g, 1.0, 5.0);
        let s = Stepper::new(g.clone(), noisy(-0.25, 0.3, 0.0), StepperOptions::new(0.05))
            .unwrap()
            .with_drift_correction(&vec![2.5; 101])
            .unwrap();
        let mut a = SolverState::from_full(&g, &init).unwrap();
        let mut b = a.clone();
        for n in 0..10 {
            let dw = pseudo_noise(101, n);
            s.step_spde(&mut a, &dw, Scheme::EulerHeun).unwrap();
            s.step_spde(&mut b, &dw, Scheme::EulerMaruyamaOnCorrected).unwrap();
        }
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn corrected_scheme_needs_variance() {
        let g = neumann(20, 0.1);
        let s = Stepper::new(g, noisy(0.0, 0.0, 0.5), StepperOptions::new(0.05)).unwrap();
        let mut st = SolverState::new(vec![0.5; 20]);
        assert!(s.step_spde(&mut st, &[0.0; 20], Scheme::EulerMaruyamaOnCorrected).is_err());
    }

    #[test]
    fn blow_up_and_extinction_stop_the_run() {
        let g = neumann(50, 0.1);
        let s = Stepper::new(g.clone(), noisy(-0.25, 0.0, 1.0), StepperOptions::new(0.05)).unwrap();
        let mut st = SolverState::from_full(&g, &front(&g, 1.0, 2.5)).unwrap();
        s.step_spde(&mut st, &vec![1e3; 50], Scheme::EulerHeun).unwrap();
        assert_eq!(st.status, Status::BlownUp { step: 1 });
        assert!(matches!(s.step_pde(&mut st), Err(Error::NotRunning(_))));

        // u = 0 everywhere never crosses 1/2
        let mut st = SolverState::new(vec![0.0; 50]);
        for _ in 0..9 {
            s.step_pde(&mut st).unwrap();
        }
        assert!(st.is_running());
        s.step_pde(&mut st).unwrap();
        assert_eq!(st.status, Status::Extinct { step: 10 });
    }

    #[test]
    fn gamma_accumulates_speed() {
        let g = neumann(101, 0.1);
        let s = Stepper::new(g.clone(), ModelSpec::deterministic(-0.25), StepperOptions::new(0.05)).unwrap();
        let mut st = SolverState::from_full(&g, &front(&g, 1.0, 5.0)).unwrap();
        for _ in 0..4 {
            s.step_fixed_speed(&mut st, 1.5, None, Scheme::EulerHeun).unwrap();
        }
        assert!((st.gamma - 4.0 * 1.5 * 0.05).abs() < 1e-14);
        assert!((st.t - 0.2).abs() < 1e-15);
    }
}
