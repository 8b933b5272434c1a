//! Nagumo reaction and noise coefficients, Itô/Stratonovich drift conversion,
//! the logistic front profile family and the known deterministic wave speeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpretation {
    Ito,
    Stratonovich,
}

impl Interpretation {
    pub fn name(self) -> &'static str {
        match self {
            Interpretation::Ito => "ito",
            Interpretation::Stratonovich => "stratonovich",
        }
    }
}

/// Scalar reaction `f`, noise coefficient `g` and `g'` for
/// `du = [u_xx + f(u)] dt + g(u) dW`.
pub trait ScalarModel: Sync {
    fn drift(&self, u: f64) -> f64;
    fn diffusion(&self, u: f64) -> f64;
    fn diffusion_derivative(&self, u: f64) -> f64;
    fn interpretation(&self) -> Interpretation;
}

/// Stochastic Nagumo equation
/// `du = [u_xx + u(1-u)(u-alpha)] dt + (nu + mu u(1-u)) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub alpha: f64,
    pub nu: f64,
    pub mu: f64,
    pub interpretation: Interpretation,
}

impl ModelSpec {
    pub fn deterministic(alpha: f64) -> Self {
        Self {
            alpha,
            nu: 0.0,
            mu: 0.0,
            interpretation: Interpretation::Stratonovich,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("nu", self.nu), ("mu", self.mu)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.nu < 0.0 || self.mu < 0.0 {
            return Err(Error::InvalidParameter("noise amplitudes must be >= 0".into()));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.nu == 0.0 && self.mu == 0.0
    }
}

impl ScalarModel for ModelSpec {
    fn drift(&self, u: f64) -> f64 {
        drift(u, self.alpha)
    }

    fn diffusion(&self, u: f64) -> f64 {
        diffusion(u, self.nu, self.mu)
    }

    fn diffusion_derivative(&self, u: f64) -> f64 {
        self.mu * (1.0 - 2.0 * u)
    }

    fn interpretation(&self) -> Interpretation {
        self.interpretation
    }
}

/// Any scalar model given by closures, for reuse of the machinery beyond Nagumo.
pub struct ClosureModel<F, G, D> {
    pub drift: F,
    pub diffusion: G,
    pub diffusion_derivative: D,
    pub interpretation: Interpretation,
}

impl<F, G, D> ScalarModel for ClosureModel<F, G, D>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
    D: Fn(f64) -> f64 + Sync,
{
    fn drift(&self, u: f64) -> f64 {
        (self.drift)(u)
    }

    fn diffusion(&self, u: f64) -> f64 {
        (self.diffusion)(u)
    }

    fn diffusion_derivative(&self, u: f64) -> f64 {
        (self.diffusion_derivative)(u)
    }

    fn interpretation(&self) -> Interpretation {
        self.interpretation
    }
}

/// `f(u) = u (1 - u) (u - alpha)`
pub fn drift(u: f64, alpha: f64) -> f64 {
    u * (1.0 - u) * (u - alpha)
}

/// `g(u) = nu + mu u (1 - u)`
pub fn diffusion(u: f64, nu: f64, mu: f64) -> f64 {
    nu + mu * u * (1.0 - u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conversion {
    /// Drift of the Itô equation equivalent to a Stratonovich one.
    StratonovichToIto,
    /// Drift of the Stratonovich equation equivalent to an Itô one.
    ItoToStratonovich,
}

/// Drift after changing the stochastic interpretation.
///
/// `c0` is half the pointwise noise variance per unit time, so that
/// Stratonovich-to-Itô adds `c0 g'(u) g(u)` (the mean effect of the Heun
/// correction) and Itô-to-Stratonovich subtracts it.
pub fn converted_drift(model: &impl ScalarModel, u: f64, c0: f64, conversion: Conversion) -> f64 {
    let correction = c0 * model.diffusion_derivative(u) * model.diffusion(u);
    match conversion {
        Conversion::StratonovichToIto => model.drift(u) + correction,
        Conversion::ItoToStratonovich => model.drift(u) - correction,
    }
}

pub fn corrected_drift(u: f64, spec: &ModelSpec, c0: f64, conversion: Conversion) -> f64 {
    converted_drift(spec, u, c0, conversion)
}

/// Logistic front `u_k(x - x0) = 1 / (1 + exp(-k (x - x0)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub steepness: f64,
    pub center: f64,
}

impl ProfileSpec {
    pub fn new(steepness: f64, center: f64) -> Result<Self> {
        if !(steepness > 0.0 && steepness.is_finite()) || !center.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "profile needs k > 0 and finite centre, got k = {steepness}, x0 = {center}"
            )));
        }
        Ok(Self { steepness, center })
    }

    /// Increasing profile, `0` at `-inf`, `1` at `+inf`.
    pub fn value(&self, x: f64) -> f64 {
        profile(self, x)
    }

    /// The profile reflected about its centre, `1 - u_k(x - x0)`.
    ///
    /// Simulated fronts are laid out with the invading state `u = 1` on the
    /// left and the invaded state `u = 0` on the right, so they travel toward
    /// `+x` and speeds come out positive.
    pub fn front(&self, x: f64) -> f64 {
        profile(self, 2.0 * self.center - x)
    }
}

pub fn profile(spec: &ProfileSpec, x: f64) -> f64 {
    1.0 / (1.0 + (-spec.steepness * (x - spec.center)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedKind {
    Exact,
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheorySpeed {
    pub value: f64,
    pub kind: SpeedKind,
}

/// Asymptotic speed of the deterministic Nagumo front started from `u_{k0}`,
/// reported positive in the direction of propagation.
pub fn theoretical_speed(alpha: f64, k0: f64) -> Result<TheorySpeed> {
    if !(alpha > -1.0 && alpha <= 0.5) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if !(k0 > 0.0) {
        return Err(Error::InvalidParameter(format!("k0 must be positive, got {k0}")));
    }
    let pushed = std::f64::consts::SQRT_2 * (0.5 - alpha);
    let speed = if alpha > 0.0 {
        TheorySpeed { value: pushed, kind: SpeedKind::Exact }
    } else if alpha > -0.5 {
        let k_star = -alpha * std::f64::consts::SQRT_2;
        if k0 >= k_star {
            TheorySpeed { value: pushed, kind: SpeedKind::Exact }
        } else {
            TheorySpeed {
                value: (k0 * k0 - alpha) / k0,
                kind: SpeedKind::LowerBound,
            }
        }
    } else {
        let k_dag = alpha.abs().sqrt();
        let kind = if k0 >= k_dag { SpeedKind::Exact } else { SpeedKind::LowerBound };
        TheorySpeed { value: 2.0 * k_dag, kind }
    };
    Ok(speed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn drift_roots_and_value() {
        for alpha in [-0.75, -0.25, 0.0, 0.3] {
            assert_eq!(drift(0.0, alpha), 0.0);
            assert_eq!(drift(1.0, alpha), 0.0);
            assert_eq!(drift(alpha, alpha), 0.0);
        }
        assert_eq!(drift(0.5, 0.25), 0.0625);
    }

    #[test]
    fn diffusion_values() {
        assert_eq!(diffusion(0.0, 0.3, 0.7), 0.3);
        assert_eq!(diffusion(1.0, 0.3, 0.7), 0.3);
        assert_eq!(diffusion(0.5, 0.0, 1.0), 0.25);
        for u in [0.0, 0.2, 0.9] {
            assert_eq!(diffusion(u, 0.1, 0.0), 0.1);
        }
    }

    #[test]
    fn conversion_special_cases() {
        let spec = ModelSpec { alpha: 0.0, nu: 0.0, mu: 0.1, interpretation: Interpretation::Stratonovich };
        // g'(1/2) = 0
        let f = drift(0.5, 0.0);
        assert_eq!(corrected_drift(0.5, &spec, 5.0, Conversion::StratonovichToIto), f);
        assert_eq!(corrected_drift(0.0, &spec, 5.0, Conversion::StratonovichToIto), 0.0);
        let expected = drift(0.25, 0.0) + 5.0 * (0.1 * 0.5) * (0.1 * 0.1875);
        let got = corrected_drift(0.25, &spec, 5.0, Conversion::StratonovichToIto);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.0515625).abs() < 1e-15);

        let additive = ModelSpec { mu: 0.0, nu: 0.4, ..spec };
        for u in [0.0, 0.3, 0.8] {
            for c in [Conversion::StratonovichToIto, Conversion::ItoToStratonovich] {
                assert_eq!(corrected_drift(u, &additive, 5.0, c), drift(u, 0.0));
            }
        }
    }

    #[test]
    fn profile_basics() {
        let p = ProfileSpec::new(0.7, 10.0).unwrap();
        assert_eq!(p.value(10.0), 0.5);
        assert!(p.value(-1e4) < 1e-300);
        assert_eq!(p.value(1e4), 1.0);
        assert!((p.front(3.0) - (1.0 - p.value(3.0))).abs() < 1e-15);
        assert!(ProfileSpec::new(0.0, 1.0).is_err());
    }

    #[test]
    fn theory_table_values() {
        let s = theoretical_speed(-0.25, INV_SQRT2).unwrap();
        assert_eq!(s.kind, SpeedKind::Exact);
        assert!((s.value - 1.06066).abs() < 5e-6);
        let s = theoretical_speed(-0.25, 0.1).unwrap();
        assert_eq!(s.kind, SpeedKind::LowerBound);
        assert!((s.value - 2.6).abs() < 1e-12);
        let s = theoretical_speed(-0.75, 0.9).unwrap();
        assert_eq!(s.kind, SpeedKind::Exact);
        assert!((s.value - 2.0 * 0.75f64.sqrt()).abs() < 1e-12);
        assert!((s.value - 1.73205).abs() < 1e-5);
        assert!(theoretical_speed(0.6, 1.0).is_err());
        assert!(theoretical_speed(-1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn drift_sign_pattern(alpha in -0.99f64..0.49, u in -0.5f64..1.5) {
            let f = drift(u, alpha);
            let sign = u.signum() * (1.0 - u).signum() * (u - alpha).signum();
            if f != 0.0 {
                prop_assert_eq!(f.signum(), sign);
            }
        }

        #[test]
        fn conversion_is_an_involution(u in -0.2f64..1.2, mu in 0.0f64..2.0, nu in 0.0f64..1.0, c0 in 0.0f64..10.0) {
            let spec = ModelSpec { alpha: -0.25, nu, mu, interpretation: Interpretation::Stratonovich };
            let ito = ClosureModel {
                drift: |v: f64| corrected_drift(v, &spec, c0, Conversion::StratonovichToIto),
                diffusion: |v: f64| spec.diffusion(v),
                diffusion_derivative: |v: f64| spec.diffusion_derivative(v),
                interpretation: Interpretation::Ito,
            };
            let back = converted_drift(&ito, u, c0, Conversion::ItoToStratonovich);
            prop_assert!((back - drift(u, spec.alpha)).abs() <= 1e-13);
        }

        #[test]
        fn profile_symmetry_and_monotone(k in 0.05f64..50.0, x0 in -10.0f64..10.0, x in -50.0f64..50.0) {
            let p = ProfileSpec::new(k, x0).unwrap();
            prop_assert!((p.value(x) + p.value(2.0 * x0 - x) - 1.0).abs() < 1e-12);
            prop_assert!(p.value(x + 0.01) >= p.value(x));
        }
    }
}
