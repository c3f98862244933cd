//! Experiment configuration: one JSON document per run.

use crate::endo::{DirectionMode, EndoError, Mode, PerturbationSpec, TorusEndomorphism};
use crate::lattice::{eigen_decompose, LatticeMatrix, Vec2};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value at {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error(transparent)]
    Endo(#[from] EndoError),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field: field.to_string(), reason: reason.into() }
}

/// A coefficient given either as a multiple of the aligned eigendirection or as a raw vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Scalar(f64),
    Vector([f64; 2]),
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient::Scalar(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub k: [i64; 2],
    #[serde(default)]
    pub cos: Coefficient,
    #[serde(default)]
    pub sin: Coefficient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_direction_mode")]
    pub direction_mode: DirectionMode,
}

fn default_direction_mode() -> DirectionMode {
    DirectionMode::General
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig { modes: Vec::new(), epsilon: 0.0, direction_mode: DirectionMode::General }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Stopping tolerance of the semi-conjugacy iteration.
    pub contraction: f64,
    /// Angular tolerance for bundle convergence and for "E^c constant".
    pub angle: f64,
    /// Probe fibers must be smaller than this for a conjugacy.
    pub fiber_threshold: f64,
    /// Specialness defect gate.
    pub specialness: f64,
    /// Allowed |lambda_c(p) - lambda_c(A)| when the rigidity hypotheses pass.
    pub rigidity: f64,
    /// Largest semi-conjugacy defect accepted by downstream stages.
    pub defect_max: f64,
    /// Allowed |d'(J)/d'(I) - 1|.
    pub holonomy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            contraction: 1e-10,
            angle: 1e-8,
            fiber_threshold: 0.05,
            specialness: 1e-3,
            rigidity: 1e-4,
            defect_max: 1e-2,
            holonomy: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub matrix: [[i64; 2]; 2],
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_periodic_max")]
    pub periodic_max: usize,
    #[serde(default = "default_rotation_iterations")]
    pub rotation_iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_bundle_depth")]
    pub bundle_depth: usize,
    #[serde(default = "default_specialness_depth")]
    pub specialness_depth: usize,
    #[serde(default = "default_area_n_max")]
    pub area_n_max: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_samples")]
    pub livschitz_samples: usize,
    #[serde(default = "default_spectral_sweep")]
    pub spectral_sweep: usize,
}

fn default_grid() -> usize {
    256
}
fn default_periodic_max() -> usize {
    4
}
fn default_rotation_iterations() -> usize {
    10_000
}
fn default_max_iter() -> usize {
    500
}
fn default_bundle_depth() -> usize {
    40
}
fn default_specialness_depth() -> usize {
    8
}
fn default_area_n_max() -> usize {
    8
}
fn default_probes() -> usize {
    6
}
fn default_samples() -> usize {
    100
}
fn default_spectral_sweep() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn minimal(matrix: [[i64; 2]; 2]) -> Self {
        serde_json::from_value(serde_json::json!({ "matrix": matrix })).expect("defaults")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.grid.is_power_of_two() || self.grid < 8 {
            return Err(invalid("grid", format!("{} is not a power of two >= 8", self.grid)));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.contraction", t.contraction),
            ("tolerances.angle", t.angle),
            ("tolerances.fiber_threshold", t.fiber_threshold),
            ("tolerances.specialness", t.specialness),
            ("tolerances.rigidity", t.rigidity),
            ("tolerances.defect_max", t.defect_max),
            ("tolerances.holonomy", t.holonomy),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        if !self.perturbation.epsilon.is_finite() {
            return Err(invalid("perturbation.epsilon", "not finite"));
        }
        for (name, v) in [
            ("periodic_max", self.periodic_max),
            ("rotation_iterations", self.rotation_iterations),
            ("max_iter", self.max_iter),
            ("bundle_depth", self.bundle_depth),
            ("area_n_max", self.area_n_max),
            ("probes", self.probes),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if self.periodic_max > 8 {
            return Err(invalid("periodic_max", "periods above 8 are not supported"));
        }
        let a = self.lattice_matrix();
        eigen_decompose(&a).map_err(|e| invalid("matrix", e.to_string()))?;
        if self.perturbation.direction_mode == DirectionMode::General {
            for (i, m) in self.perturbation.modes.iter().enumerate() {
                for c in [m.cos, m.sin] {
                    if let Coefficient::Scalar(s) = c {
                        if s != 0.0 {
                            return Err(invalid(
                                &format!("perturbation.modes[{i}]"),
                                "scalar coefficients need an aligned direction_mode",
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn lattice_matrix(&self) -> LatticeMatrix {
        LatticeMatrix(self.matrix)
    }

    pub fn perturbation_spec(&self) -> Result<PerturbationSpec, ConfigError> {
        let e = eigen_decompose(&self.lattice_matrix()).map_err(|e| invalid("matrix", e.to_string()))?;
        let axis = match self.perturbation.direction_mode {
            DirectionMode::UnstableAligned => e.e_u,
            _ => e.e_c,
        };
        let vec = |c: Coefficient| match c {
            Coefficient::Scalar(s) => axis * s,
            Coefficient::Vector(v) => Vec2::new(v[0], v[1]),
        };
        Ok(PerturbationSpec {
            modes: self
                .perturbation
                .modes
                .iter()
                .map(|m| Mode { k: m.k, cos: vec(m.cos), sin: vec(m.sin) })
                .collect(),
            epsilon: self.perturbation.epsilon,
            direction_mode: self.perturbation.direction_mode,
        })
    }

    pub fn build_map(&self) -> Result<TorusEndomorphism, ConfigError> {
        Ok(TorusEndomorphism::new(self.lattice_matrix(), self.perturbation_spec()?, self.grid)?)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    ExperimentConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_fills_defaults() {
        let c = ExperimentConfig::from_json(r#"{"matrix": [[3,1],[1,2]]}"#).unwrap();
        assert_eq!(c.grid, 256);
        assert_eq!(c.perturbation.epsilon, 0.0);
        assert_eq!(c.tolerances, Tolerances::default());
        assert!(c.build_map().unwrap().is_linear());
    }

    #[test]
    fn negative_tolerance_rejected() {
        let e = ExperimentConfig::from_json(r#"{"matrix": [[3,1],[1,2]], "tolerances": {"contraction": -1}}"#);
        assert!(matches!(e, Err(ConfigError::Validation { field, .. }) if field == "tolerances.contraction"));
    }

    #[test]
    fn unknown_key_named() {
        let e = ExperimentConfig::from_json(r#"{"matrix": [[3,1],[1,2]], "gird": 64}"#);
        match e {
            Err(ConfigError::Parse(msg)) => assert!(msg.contains("gird"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_must_be_power_of_two() {
        let e = ExperimentConfig::from_json(r#"{"matrix": [[3,1],[1,2]], "grid": 100}"#);
        assert!(matches!(e, Err(ConfigError::Validation { field, .. }) if field == "grid"));
    }

    #[test]
    fn scalar_and_vector_coefficients() {
        let c = ExperimentConfig::from_json(
            r#"{"matrix": [[3,1],[1,2]], "perturbation": {"epsilon": 0.05, "direction_mode": "center_aligned",
                "modes": [{"k": [1,0], "cos": 1.0}, {"k": [0,1], "sin": [0.1, -0.2]}]}}"#,
        )
        .unwrap();
        let spec = c.perturbation_spec().unwrap();
        let e = eigen_decompose(&c.lattice_matrix()).unwrap();
        assert_eq!(spec.modes[0].cos, e.e_c);
        assert_eq!(spec.modes[1].sin, Vec2::new(0.1, -0.2));
        // the raw vector is not along e_c
        assert!(matches!(c.build_map(), Err(ConfigError::Endo(EndoError::NotAligned { .. }))));
    }

    #[test]
    fn bad_matrix_rejected() {
        let e = ExperimentConfig::from_json(r#"{"matrix": [[2,1],[1,1]]}"#);
        assert!(matches!(e, Err(ConfigError::Validation { field, .. }) if field == "matrix"));
    }
}
