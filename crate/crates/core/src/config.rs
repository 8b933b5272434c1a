//! Flat TOML run configuration. Every key is optional; missing keys take the
//! defaults below, unknown keys are rejected.
//!
//! ```toml
//! length = 500.0          # domain [0, L]
//! dx = 0.1
//! boundary = "neumann"    # or "dirichlet" (u = 1 left, u = 0 right)
//! dt = 0.05
//! t_final = 100.0
//! # t0 = 50.0             # start of the averaging window, default T/2
//! realizations = 100
//! seed = 1
//! kind = "both"           # pde | pdae | spde | spdae | both | fixed-speed
//! speed_source = "ensemble-mean-lambda"  # | per-realization | ensemble-mean-average | constant
//! frame_speed = 0.0       # used by speed_source = "constant"
//! alpha = -0.25
//! nu = 0.0
//! mu = 0.1
//! interpretation = "stratonovich"        # or "ito"
//! xi = 0.1
//! noise_modes = "matched" # | "grid" | "auto" | a mode count
//! # scheme = "euler-heun" # | "euler-maruyama"; default follows the interpretation
//! advection = "central"   # or "upwind"
//! upwind_beta = 0.5
//! correction = "spectral" # or "kernel"
//! k0 = 0.7071067811865476 # steepness of the initial front
//! k_hat = 0.7071067811865476             # steepness of the template
//! # x0 = 200.0            # front centre, default 2L/5
//! delta = 0.05
//! snapshot_stride = 0
//! trajectories = false    # write one binary trajectory per realization
//! blowup_threshold = 25.0
//! align = "template"      # | "none" | a position
//! sweep_mu2 = [0.0, 0.25, 0.5, 0.75, 1.0]
//! sweep_xi = [0.1]
//! sweep_alpha = [-0.25]
//! sweep_interpretations = ["stratonovich"]
//! ```

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{AlignReference, CorrectionSource, EnsembleConfig, NoiseModes, RunKind, SpeedSource};
use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Grid};
use crate::model::{Interpretation, ModelSpec, ProfileSpec};
use crate::stepper::{Advection, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Pde,
    Pdae,
    Spde,
    Spdae,
    /// SPDE and SPDAE on the same noise paths, plus their weak error.
    Both,
    FixedSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedSourceName {
    PerRealization,
    EnsembleMeanLambda,
    EnsembleMeanAverage,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    EulerHeun,
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvectionName {
    Central,
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionName {
    Spectral,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModesValue {
    Count(u64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlignValue {
    At(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub length: f64,
    pub dx: f64,
    pub boundary: Boundary,
    pub dt: f64,
    pub t_final: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub kind: Kind,
    pub speed_source: SpeedSourceName,
    pub frame_speed: f64,
    pub alpha: f64,
    pub nu: f64,
    pub mu: f64,
    pub interpretation: Interpretation,
    pub xi: f64,
    pub noise_modes: ModesValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeName>,
    pub advection: AdvectionName,
    pub upwind_beta: f64,
    pub correction: CorrectionName,
    pub k0: f64,
    pub k_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    pub delta: f64,
    pub snapshot_stride: usize,
    pub trajectories: bool,
    pub blowup_threshold: f64,
    pub align: AlignValue,
    pub sweep_mu2: Vec<f64>,
    pub sweep_xi: Vec<f64>,
    pub sweep_alpha: Vec<f64>,
    pub sweep_interpretations: Vec<Interpretation>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            length: 500.0,
            dx: 0.1,
            boundary: Boundary::Neumann,
            dt: 0.05,
            t_final: 100.0,
            t0: None,
            realizations: 100,
            seed: 1,
            kind: Kind::Both,
            speed_source: SpeedSourceName::EnsembleMeanLambda,
            frame_speed: 0.0,
            alpha: -0.25,
            nu: 0.0,
            mu: 0.1,
            interpretation: Interpretation::Stratonovich,
            xi: 0.1,
            noise_modes: ModesValue::Named("matched".into()),
            scheme: None,
            advection: AdvectionName::Central,
            upwind_beta: 0.5,
            correction: CorrectionName::Spectral,
            k0: FRAC_1_SQRT_2,
            k_hat: FRAC_1_SQRT_2,
            x0: None,
            delta: 0.05,
            snapshot_stride: 0,
            trajectories: false,
            blowup_threshold: 25.0,
            align: AlignValue::Named("template".into()),
            sweep_mu2: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sweep_xi: vec![0.1],
            sweep_alpha: vec![-0.25],
            sweep_interpretations: vec![Interpretation::Stratonovich],
        }
    }
}

/// Error for `key`, pointing at the line that sets it when there is one.
fn invalid(source: Option<&str>, key: &str, msg: impl std::fmt::Display) -> Error {
    let line = source.and_then(|src| {
        src.lines().position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
    });
    match line {
        Some(n) => Error::Config(format!("line {}: `{key}`: {msg}", n + 1)),
        None => Error::Config(format!("`{key}`: {msg}")),
    }
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check(Some(src))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml(&src).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("a run config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.check(None)
    }

    fn check(&self, src: Option<&str>) -> Result<()> {
        let bad = |key: &str, msg: String| Err(invalid(src, key, msg));
        for (key, v) in [
            ("length", self.length),
            ("dx", self.dx),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("xi", self.xi),
            ("k0", self.k0),
            ("k_hat", self.k_hat),
            ("blowup_threshold", self.blowup_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("must be positive, got {v}"));
            }
        }
        if let Some(t0) = self.t0 {
            if !(t0 >= 0.0 && t0 < self.t_final) {
                return bad("t0", format!("must lie in [0, t_final), got {t0}"));
            }
        }
        if self.realizations == 0 {
            return bad("realizations", "must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return bad("delta", format!("must lie in (0, 1/2), got {}", self.delta));
        }
        if let ModesValue::Named(name) = &self.noise_modes {
            if !matches!(name.as_str(), "matched" | "grid" | "auto") {
                return bad("noise_modes", format!("expected matched, grid, auto or a count, got {name:?}"));
            }
        }
        if let AlignValue::Named(name) = &self.align {
            if !matches!(name.as_str(), "template" | "none") {
                return bad("align", format!("expected template, none or a position, got {name:?}"));
            }
        }
        if self.sweep_mu2.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return bad("sweep_mu2", "entries must be >= 0".into());
        }
        self.grid().map_err(|e| invalid(src, "dx", e))?;
        let model = self.model();
        model.validate().map_err(|e| invalid(src, "mu", e))?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let bc = match self.boundary {
            Boundary::Neumann => BoundaryCondition::Neumann,
            Boundary::Dirichlet => BoundaryCondition::Dirichlet { left: 1.0, right: 0.0 },
        };
        Grid::with_spacing(self.length, self.dx, bc)
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec {
            alpha: self.alpha,
            nu: self.nu,
            mu: self.mu,
            interpretation: self.interpretation,
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0.unwrap_or(0.5 * self.t_final)
    }

    pub fn x0(&self) -> f64 {
        self.x0.unwrap_or(0.4 * self.length)
    }

    pub fn scheme(&self) -> Scheme {
        match (self.scheme, self.interpretation) {
            (Some(SchemeName::EulerHeun), _) | (None, Interpretation::Stratonovich) => Scheme::EulerHeun,
            (Some(SchemeName::EulerMaruyama), _) | (None, Interpretation::Ito) => {
                Scheme::EulerMaruyamaOnCorrected
            }
        }
    }

    pub fn speed_source(&self) -> SpeedSource {
        match self.speed_source {
            SpeedSourceName::PerRealization => SpeedSource::PerRealizationLambda,
            SpeedSourceName::EnsembleMeanLambda => SpeedSource::EnsembleMeanLambda,
            SpeedSourceName::EnsembleMeanAverage => SpeedSource::EnsembleMeanLambdaAverage,
            SpeedSourceName::Constant => SpeedSource::Constant(self.frame_speed),
        }
    }

    /// Ensemble of the given kind with every other field from this config.
    pub fn ensemble(&self, kind: RunKind) -> Result<EnsembleConfig> {
        self.validate()?;
        let noise_modes = match &self.noise_modes {
            ModesValue::Count(j) => NoiseModes::Fixed(*j as usize),
            ModesValue::Named(n) if n == "grid" => NoiseModes::Grid,
            ModesValue::Named(n) if n == "auto" => NoiseModes::Auto,
            ModesValue::Named(_) => NoiseModes::Matched,
        };
        let align = match &self.align {
            AlignValue::At(x) => AlignReference::At(*x),
            AlignValue::Named(n) if n == "none" => AlignReference::None,
            AlignValue::Named(_) => AlignReference::TemplateCenter,
        };
        let cfg = EnsembleConfig {
            realizations: self.realizations,
            seed: self.seed,
            kind,
            model: self.model(),
            grid: self.grid()?,
            xi: self.xi,
            noise_modes,
            dt: self.dt,
            t_final: self.t_final,
            t0: self.t0(),
            snapshot_stride: self.snapshot_stride,
            template: ProfileSpec::new(self.k_hat, self.x0())?,
            initial: ProfileSpec::new(self.k0, self.x0())?,
            delta: self.delta,
            scheme: self.scheme(),
            advection: match self.advection {
                AdvectionName::Central => Advection::Central,
                AdvectionName::Upwind => Advection::Upwind { beta: self.upwind_beta },
            },
            correction: match self.correction {
                CorrectionName::Spectral => CorrectionSource::Spectral,
                CorrectionName::Kernel => CorrectionSource::Kernel,
            },
            align,
            blowup_threshold: self.blowup_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let e = cfg.ensemble(RunKind::Spde).unwrap();
        assert_eq!(e.grid.points(), 5001);
        assert_eq!(e.t0, 50.0);
        assert_eq!(e.initial.center, 200.0);
        assert_eq!(e.steps().unwrap(), 2000);
        assert_eq!(e.scheme, Scheme::EulerHeun);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.t0 = Some(12.5);
        cfg.noise_modes = ModesValue::Count(250);
        cfg.align = AlignValue::At(199.75);
        cfg.scheme = Some(SchemeName::EulerMaruyama);
        cfg.sweep_interpretations = vec![Interpretation::Ito, Interpretation::Stratonovich];
        cfg.xi = 1.0 / 3.0;
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        let default = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&default.to_toml()).unwrap(), default);
    }

    #[test]
    fn unknown_key_is_named_with_its_line() {
        let err = RunConfig::from_toml("dt = 0.05\nmu_squared = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("mu_squared"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn invalid_value_points_at_its_line() {
        let err = RunConfig::from_toml("seed = 3\n\ndt = -1.0\n").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("`dt`"), "{err}");
        let err = RunConfig::from_toml("noise_modes = \"lots\"").unwrap_err().to_string();
        assert!(err.contains("noise_modes"), "{err}");
        assert!(RunConfig::from_toml("dx = 0.3").is_err());
        assert!(RunConfig::from_toml("t0 = 100.0").is_err());
    }

    #[test]
    fn wrong_type_is_a_parse_error() {
        let err = RunConfig::from_toml("realizations = \"many\"").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn scheme_follows_interpretation() {
        let cfg = RunConfig::from_toml("interpretation = \"ito\"").unwrap();
        assert_eq!(cfg.scheme(), Scheme::EulerMaruyamaOnCorrected);
        let cfg = RunConfig::from_toml("interpretation = \"ito\"\nscheme = \"euler-heun\"").unwrap();
        assert_eq!(cfg.scheme(), Scheme::EulerHeun);
    }
}
