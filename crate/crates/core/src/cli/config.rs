//! Run configuration, presets and scalar field descriptions.

use serde::{Deserialize, Serialize};

use crate::assembly::{interpolate, NormKind};
use crate::newton::{InitialGuess, NewtonConfig, Problem};
use crate::operators::SelectorPolicy;
use crate::{Error, FeMatrices, Result};

/// Scalar field on the unit square, interpolated at the mesh nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarField {
    /// Desired state of the reference experiment.
    PaperDesired,
    /// Obstacle of the reference experiment.
    PaperObstacle,
    Constant { value: f64 },
    /// `a + b x₁ + c x₂`.
    Affine { a: f64, b: f64, c: f64 },
}

impl ScalarField {
    /// Coefficients `(a, b, c)` of the field as an affine function.
    pub fn affine_coefficients(&self) -> (f64, f64, f64) {
        match *self {
            ScalarField::PaperDesired => (0.0, -1.0, -1.0),
            ScalarField::PaperObstacle => (presets::PAPER_OBSTACLE, 0.0, 0.0),
            ScalarField::Constant { value } => (value, 0.0, 0.0),
            ScalarField::Affine { a, b, c } => (a, b, c),
        }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let (a, b, c) = self.affine_coefficients();
        a + b * x1 + c * x2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialPolicy {
    #[default]
    InterpolateDesired,
    Zero,
}

/// Complete experiment configuration. Missing JSON fields take the values of
/// the `paper` preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub selector: SelectorPolicy,
    pub initial_guess: InitialPolicy,
    pub desired: ScalarField,
    pub obstacle: ScalarField,
    /// Mesh parameters `n` (cells per side) of the sweep.
    pub meshes: Vec<usize>,
    /// Additional meshes enabled by `--large`.
    pub large_meshes: Vec<usize>,
    pub seed: u64,
    /// Norm of the control in the EOC column `eoc_h10_u`.
    pub u_norm: NormKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        presets::paper()
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(presets::paper()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset {other:?}; available: {}",
                presets::NAMES.join(", ")
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.newton_config().validate()?;
        if self.meshes.iter().chain(&self.large_meshes).any(|&n| n < 2) {
            return Err(Error::InvalidArgument("mesh parameters must be at least 2".into()));
        }
        for field in [&self.desired, &self.obstacle] {
            let (a, b, c) = field.affine_coefficients();
            if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                return Err(Error::InvalidArgument("field coefficients must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn newton_config(&self) -> NewtonConfig {
        NewtonConfig {
            alpha: self.alpha,
            tol: self.tol,
            max_iter: self.max_iter,
            selector_policy: self.selector,
            y0: match self.initial_guess {
                InitialPolicy::InterpolateDesired => InitialGuess::InterpolateDesired,
                InitialPolicy::Zero => InitialGuess::Zero,
            },
        }
    }

    pub fn problem(&self, mats: &FeMatrices) -> Result<Problem> {
        let mesh = mats.mesh();
        let desired = interpolate(|x, y| self.desired.eval(x, y), mesh)?;
        let obstacle = interpolate(|x, y| self.obstacle.eval(x, y), mesh)?;
        Problem::new(desired, obstacle)
    }
}

/// Named configurations. The constants of the reference experiment live
/// here and nowhere else.
pub mod presets {
    use super::*;

    pub const NAMES: [&str; 1] = ["paper"];
    pub const PAPER_OBSTACLE: f64 = -5.0;

    pub fn paper() -> RunConfig {
        RunConfig {
            alpha: 1e-5,
            tol: 1e-7,
            max_iter: 50,
            selector: SelectorPolicy::StrictOnly,
            initial_guess: InitialPolicy::InterpolateDesired,
            desired: ScalarField::PaperDesired,
            obstacle: ScalarField::PaperObstacle,
            meshes: vec![16, 32, 64, 128, 256],
            large_meshes: vec![512],
            seed: 42,
            u_norm: NormKind::H1Semi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_fields() {
        assert_eq!(ScalarField::PaperDesired.eval(0.25, 0.5), -0.75);
        assert_eq!(ScalarField::PaperObstacle.eval(0.3, 0.9), -5.0);
        assert_eq!(ScalarField::Affine { a: 1.0, b: 2.0, c: 3.0 }.eval(1.0, 1.0), 6.0);
    }

    #[test]
    fn partial_json_falls_back_to_preset() {
        let cfg = RunConfig::from_json(r#"{"alpha": 0.001, "meshes": [8]}"#).unwrap();
        assert_eq!(cfg.alpha, 1e-3);
        assert_eq!(cfg.meshes, vec![8]);
        assert_eq!(cfg.tol, presets::paper().tol);
    }

    #[test]
    fn json_round_trip() {
        let cfg = presets::paper();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        let affine = r#"{"obstacle": {"kind": "affine", "a": -1, "b": 0.5, "c": 0}}"#;
        let cfg = RunConfig::from_json(affine).unwrap();
        assert_eq!(cfg.obstacle, ScalarField::Affine { a: -1.0, b: 0.5, c: 0.0 });
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(RunConfig::from_json(r#"{"alpha": -1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"meshes": [1]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::preset("other").is_err());
    }
}
