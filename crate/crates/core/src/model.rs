//! Parametric description of the planar 3-RRR robot and its model file.
//!
//! A model file is a TOML document (see `models/default.toml` for the
//! annotated canonical instance). Loading always validates; a model that
//! exists in memory is assumed valid and is never mutated afterwards.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::planar::{signed_area, Vec2};

pub const SCHEMA_VERSION: u32 = 1;
pub const N_CHAINS: usize = 3;

const DEFAULT_MODEL_TOML: &str = include_str!("../models/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub length: f64,
    pub mass: f64,
    /// Planar rotational inertia about the COM.
    pub inertia: f64,
    /// COM offset along the link axis from the proximal joint.
    pub com: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Friction {
    pub viscous: f64,
    pub coulomb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    pub base: [f64; 2],
    pub attach: [f64; 2],
    pub elbow: i8,
    pub link1: LinkParams,
    pub link2: LinkParams,
    pub friction: Friction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformParams {
    pub mass: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    pub schema_version: u32,
    pub name: String,
    pub gravity: [f64; 2],
    pub link_radius: f64,
    pub platform_hull: Vec<[f64; 2]>,
    /// Diagonal impedance stiffness (N/m, N/m, N*m/rad).
    pub stiffness: [f64; 3],
    pub damping_ratio: f64,
    /// Momentum observer gain per operational DOF (1/s).
    pub observer_gain: [f64; 3],
    /// Per-DOF collision detection thresholds (N, N, N*m).
    pub detection_thresholds: [f64; 3],
    /// Velocity scale of the tanh-smoothed Coulomb term (rad/s).
    pub coulomb_smoothing: f64,
    pub platform: PlatformParams,
    #[serde(rename = "chain")]
    pub chains: Vec<ChainParams>,
}

/// The bundled canonical symmetric model.
pub fn default_model() -> RobotModel {
    RobotModel::from_toml_str(DEFAULT_MODEL_TOML).expect("bundled model is valid")
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RobotModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RobotModel::from_toml_str(&text)
}

pub fn save_model(model: &RobotModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_toml_string()).map_err(|e| Error::io(path, e))
}

impl RobotModel {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: RobotModel = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model serializes")
    }

    /// SHA-256 of the canonical serialization; recorded in run metadata.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.chains.len() != N_CHAINS {
            return fail(format!("expected {N_CHAINS} chains, found {}", self.chains.len()));
        }
        let positive = |what: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Validation(format!("non-positive {what}: {v}")))
            }
        };
        for (i, c) in self.chains.iter().enumerate() {
            for (tag, link) in [("link1", &c.link1), ("link2", &c.link2)] {
                positive(&format!("length (chain {i} {tag})"), link.length)?;
                positive(&format!("mass (chain {i} {tag})"), link.mass)?;
                positive(&format!("inertia (chain {i} {tag})"), link.inertia)?;
                if !(0.0..=link.length).contains(&link.com) {
                    return fail(format!("chain {i} {tag} COM offset outside the link"));
                }
            }
            if c.elbow != 1 && c.elbow != -1 {
                return fail(format!("chain {i} elbow must be +1 or -1"));
            }
            if c.friction.viscous < 0.0 || c.friction.coulomb < 0.0 {
                return fail(format!("chain {i} friction coefficients must be non-negative"));
            }
            if c.base.iter().chain(c.attach.iter()).any(|v| !v.is_finite()) {
                return fail(format!("chain {i} has non-finite coordinates"));
            }
        }
        positive("length (link radius)", self.link_radius)?;
        positive("mass (platform)", self.platform.mass)?;
        positive("inertia (platform)", self.platform.inertia)?;
        for k in 0..3 {
            positive("stiffness", self.stiffness[k])?;
            positive("observer gain", self.observer_gain[k])?;
            positive("detection threshold", self.detection_thresholds[k])?;
        }
        positive("damping ratio", self.damping_ratio)?;
        positive("coulomb smoothing", self.coulomb_smoothing)?;

        let hull = self.hull();
        if hull.len() < 3 {
            return fail("platform hull needs at least 3 vertices".into());
        }
        let area = signed_area(&hull);
        if area <= 0.0 {
            return fail(format!(
                "platform hull must be counter-clockwise (signed area {area:e})"
            ));
        }
        if !crate::planar::is_convex_ccw(&hull) {
            return fail("platform hull is not strictly convex".into());
        }
        Ok(())
    }

    pub fn base(&self, chain: usize) -> Vec2 {
        Vec2::from(self.chains[chain].base)
    }

    pub fn attach(&self, chain: usize) -> Vec2 {
        Vec2::from(self.chains[chain].attach)
    }

    pub fn hull(&self) -> Vec<Vec2> {
        self.platform_hull.iter().map(|p| Vec2::from(*p)).collect()
    }

    pub fn gravity_vec(&self) -> Vec2 {
        Vec2::from(self.gravity)
    }

    pub fn elbows(&self) -> [i8; N_CHAINS] {
        [self.chains[0].elbow, self.chains[1].elbow, self.chains[2].elbow]
    }

    /// Ratio of a link's length to the link radius (the 1D contact-isolation argument).
    pub fn slenderness(&self) -> f64 {
        self.chains
            .iter()
            .map(|c| c.link2.length / self.link_radius)
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest distance from any coupling joint to the hull boundary.
    pub fn hull_coupling_clearance(&self) -> f64 {
        let hull = self.hull();
        (0..N_CHAINS)
            .map(|i| crate::planar::distance_to_boundary(&self.attach(i), &hull))
            .fold(f64::INFINITY, f64::min)
    }

    /// Copy with scaled inertial and friction parameters, for model-mismatch studies.
    pub fn perturbed(&self, mass_scale: f64, friction_scale: f64) -> RobotModel {
        let mut m = self.clone();
        m.platform.mass *= mass_scale;
        m.platform.inertia *= mass_scale;
        for c in &mut m.chains {
            for link in [&mut c.link1, &mut c.link2] {
                link.mass *= mass_scale;
                link.inertia *= mass_scale;
            }
            c.friction.viscous *= friction_scale;
            c.friction.coulomb *= friction_scale;
        }
        m.name = format!("{}-mass{mass_scale}-fric{friction_scale}", self.name);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_symmetric_and_valid() {
        let m = default_model();
        assert_eq!(m.chains.len(), 3);
        m.validate().unwrap();
        for c in &m.chains {
            assert_eq!(c.link1, m.chains[0].link1);
            assert_eq!(c.link2, m.chains[0].link2);
            assert!((Vec2::from(c.base).norm() - 1.0).abs() < 1e-12);
            assert!((Vec2::from(c.attach).norm() - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn default_slenderness_is_about_24() {
        let m = default_model();
        let c = &m.chains[0];
        let total_over_diameter = (c.link1.length + c.link2.length) / (2.0 * m.link_radius);
        assert!((total_over_diameter - 24.0).abs() < 1e-9);
        assert!((m.slenderness() - 24.0).abs() < 1e-9);
    }

    #[test]
    fn zero_length_is_rejected() {
        let mut m = default_model();
        m.chains[0].link1.length = 0.0;
        let err = RobotModel::from_toml_str(&m.to_toml_string()).unwrap_err();
        assert!(err.to_string().contains("non-positive length"), "{err}");
    }

    #[test]
    fn clockwise_hull_is_rejected() {
        let mut m = default_model();
        m.platform_hull.reverse();
        let area = signed_area(&m.hull());
        assert!(area < 0.0);
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("counter-clockwise"), "{err}");
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        let err = RobotModel::from_toml_str("schema_version = [").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        let err = RobotModel::from_toml_str("schema_version = 1\nname = 3").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let mut m = default_model();
        m.schema_version = 7;
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn file_round_trip_is_field_identical() {
        let m = default_model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
    }

    #[test]
    fn perturbation_scales_masses_only() {
        let m = default_model();
        let p = m.perturbed(1.1, 1.0);
        assert!((p.platform.mass - 4.4).abs() < 1e-12);
        assert_eq!(p.chains[0].link1.length, m.chains[0].link1.length);
        assert_eq!(p.chains[0].friction, m.chains[0].friction);
        assert_ne!(p.hash(), m.hash());
    }
}
