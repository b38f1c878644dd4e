//! Line of action of an estimated platform wrench and the per-chain features
//! used for classification: coupling-joint distances `d`, forearm angles
//! `alpha` and the excited-drive count `n_tau`.
//!
//! Lines are expressed at the platform frame origin with world-aligned axes,
//! the frame in which operational-space wrenches live.

use nalgebra::Vector3;

use crate::dynamics::Wrench;
use crate::error::{Error, Result};
use crate::kinematics::{chain_points, KinState, Pose};
use crate::model::{RobotModel, N_CHAINS};
use crate::planar::{cross, perp, rot, Vec2};

/// Force norm below which the line of action is undefined.
pub const EPS_F: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineOfAction {
    /// Minimum lever from the platform origin to the line.
    pub lever: Vec2,
    /// Unit force direction.
    pub dir: Vec2,
}

impl LineOfAction {
    pub fn point(&self, lambda: f64) -> Vec2 {
        self.lever + self.dir * lambda
    }

    /// Same line in the platform body frame (axes rotated by `phi`).
    pub fn to_body(&self, phi: f64) -> LineOfAction {
        let r = rot(-phi);
        LineOfAction {
            lever: r * self.lever,
            dir: r * self.dir,
        }
    }

    pub fn from_body(&self, phi: f64) -> LineOfAction {
        let r = rot(phi);
        LineOfAction {
            lever: r * self.lever,
            dir: r * self.dir,
        }
    }

    /// Point of the line in world coordinates.
    pub fn world_point(&self, x: &Pose, lambda: f64) -> Vec2 {
        Vec2::new(x[0], x[1]) + self.point(lambda)
    }
}

/// Minimum-norm lever `r` with `r x f = m`, i.e. `(m / |f|^2) (f_y, -f_x)`.
pub fn min_lever(w: &Wrench) -> Result<Vec2> {
    let n2 = w.f.norm_squared();
    let norm = n2.sqrt();
    if !(norm > EPS_F) {
        return Err(Error::DegenerateForce { norm });
    }
    Ok(Vec2::new(w.f.y, -w.f.x) * (w.m / n2))
}

pub fn line_of_action(w: &Wrench) -> Result<LineOfAction> {
    let lever = min_lever(w)?;
    Ok(LineOfAction {
        lever,
        dir: w.f / w.f.norm(),
    })
}

/// Distance from `p` (same frame as the line) to the line.
pub fn min_distance(loa: &LineOfAction, p: &Vec2) -> f64 {
    cross(&(p - loa.lever), &loa.dir).abs()
}

/// Signed angle in degrees from the forearm vector to the force direction, in (-180, 180].
pub fn angle_alpha(n_f: &Vec2, forearm: &Vec2) -> Result<f64> {
    let norm = forearm.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateForce { norm });
    }
    let a = cross(forearm, n_f).atan2(forearm.dot(n_f)).to_degrees();
    Ok(if a <= -180.0 { a + 360.0 } else { a })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub d: Vector3<f64>,
    /// Degrees.
    pub alpha: Vector3<f64>,
    pub n_tau: u8,
    pub f_hat: Vector3<f64>,
    pub tau_hat: Vector3<f64>,
}

pub const N_INPUTS: usize = 12;

pub const FEATURE_CSV_HEADER: &str = "d1,d2,d3,a1,a2,a3,n_tau,Fx,Fy,Mz,tau1,tau2,tau3";

impl FeatureVector {
    /// Network inputs: `F_hat`, `tau_hat`, `d`, `alpha`.
    pub fn inputs(&self) -> [f64; N_INPUTS] {
        let mut v = [0.0; N_INPUTS];
        v[0..3].copy_from_slice(self.f_hat.as_slice());
        v[3..6].copy_from_slice(self.tau_hat.as_slice());
        v[6..9].copy_from_slice(self.d.as_slice());
        v[9..12].copy_from_slice(self.alpha.as_slice());
        v
    }

    pub fn csv_fields(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.d.iter().chain(self.alpha.iter()).copied().collect();
        v.push(self.n_tau as f64);
        v.extend(self.f_hat.iter());
        v.extend(self.tau_hat.iter());
        v
    }

    pub fn from_csv_fields(v: &[f64]) -> Result<Self> {
        if v.len() != 13 {
            return Err(Error::DimensionMismatch {
                expected: 13,
                got: v.len(),
            });
        }
        Ok(FeatureVector {
            d: Vector3::new(v[0], v[1], v[2]),
            alpha: Vector3::new(v[3], v[4], v[5]),
            n_tau: v[6] as u8,
            f_hat: Vector3::new(v[7], v[8], v[9]),
            tau_hat: Vector3::new(v[10], v[11], v[12]),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.inputs().iter().all(|v| v.is_finite())
    }
}

pub fn count_excited(tau_hat: &Vector3<f64>, eps_tau: f64) -> u8 {
    tau_hat.iter().filter(|t| t.abs() > eps_tau).count() as u8
}

pub fn compute_features(
    f_hat: &Wrench,
    tau_hat: &Vector3<f64>,
    state: &KinState,
    model: &RobotModel,
    eps_tau: f64,
) -> Result<FeatureVector> {
    let loa = line_of_action(f_hat)?;
    let origin = Vec2::new(state.x[0], state.x[1]);
    let mut d = Vector3::zeros();
    let mut alpha = Vector3::zeros();
    for i in 0..N_CHAINS {
        let p = chain_points(&state.q, model, i);
        d[i] = min_distance(&loa, &(p.coupling - origin));
        alpha[i] = angle_alpha(&loa.dir, &(p.coupling - p.passive))?;
    }
    Ok(FeatureVector {
        d,
        alpha,
        n_tau: count_excited(tau_hat, eps_tau),
        f_hat: f_hat.to_vector(),
        tau_hat: *tau_hat,
    })
}

/// Point at signed offset `s` normal to the line, for test construction.
pub fn offset_point(loa: &LineOfAction, lambda: f64, s: f64) -> Vec2 {
    loa.point(lambda) + perp(&loa.dir) * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn w(fx: f64, fy: f64, m: f64) -> Wrench {
        Wrench::platform(Vector3::new(fx, fy, m))
    }

    #[test]
    fn lever_matches_embedded_cross_product() {
        let r = min_lever(&w(0.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(r, Vec2::new(1.0, 0.0));
        let f = Vec2::new(3.0, -4.0);
        let r = min_lever(&w(f.x, f.y, 2.5)).unwrap();
        assert_relative_eq!(cross(&r, &f), 2.5, epsilon = 1e-14);
        assert!(r.dot(&f).abs() < 1e-12);
    }

    #[test]
    fn zero_moment_passes_through_origin() {
        assert_eq!(min_lever(&w(2.0, 1.0, 0.0)).unwrap(), Vec2::zeros());
    }

    #[test]
    fn lever_is_homogeneous() {
        let a = min_lever(&w(1.5, -0.3, 0.7)).unwrap();
        let b = min_lever(&w(15.0, -3.0, 7.0)).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn tiny_force_is_degenerate() {
        assert!(matches!(min_lever(&w(1e-7, 0.0, 1.0)), Err(Error::DegenerateForce { .. })));
    }

    #[test]
    fn moment_is_constant_along_line() {
        let wr = w(-2.0, 5.0, 0.9);
        let loa = line_of_action(&wr).unwrap();
        for k in -10..=10 {
            let p = loa.point(k as f64 * 0.1);
            assert_relative_eq!(cross(&p, &wr.f), wr.m, epsilon = 1e-12);
        }
    }

    #[test]
    fn distance_by_construction() {
        let loa = line_of_action(&w(1.0, 2.0, 0.3)).unwrap();
        assert!(min_distance(&loa, &loa.point(0.4)) < 1e-15);
        let p = loa.lever + loa.dir + perp(&loa.dir) * 0.05;
        assert_relative_eq!(min_distance(&loa, &p), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn body_frame_round_trip() {
        let loa = line_of_action(&w(1.0, 2.0, 0.3)).unwrap();
        let back = loa.to_body(0.7).from_body(0.7);
        assert_relative_eq!(back.lever, loa.lever, epsilon = 1e-15);
        assert_relative_eq!(back.dir, loa.dir, epsilon = 1e-15);
    }

    #[test]
    fn alpha_conventions() {
        let a = Vec2::new(0.0, 2.0);
        assert_relative_eq!(angle_alpha(&Vec2::new(0.0, 1.0), &a).unwrap(), 0.0);
        assert_relative_eq!(angle_alpha(&Vec2::new(0.0, -1.0), &a).unwrap(), 180.0);
        assert_relative_eq!(angle_alpha(&Vec2::new(-1.0, 0.0), &a).unwrap(), 90.0);
        assert_relative_eq!(angle_alpha(&Vec2::new(1.0, 0.0), &a).unwrap(), -90.0);
        assert!(angle_alpha(&Vec2::new(1.0, 0.0), &Vec2::zeros()).is_err());
    }

    #[test]
    fn zero_torque_means_no_excited_drive() {
        assert_eq!(count_excited(&Vector3::zeros(), 2.5), 0);
        assert_eq!(count_excited(&Vector3::new(2.5, -2.6, 0.0), 2.5), 1);
    }

    #[test]
    fn csv_fields_round_trip() {
        let fv = FeatureVector {
            d: Vector3::new(0.1, 0.2, 0.3),
            alpha: Vector3::new(10.0, -20.0, 180.0),
            n_tau: 2,
            f_hat: Vector3::new(1.0, 2.0, 3.0),
            tau_hat: Vector3::new(4.0, 5.0, 6.0),
        };
        assert_eq!(FeatureVector::from_csv_fields(&fv.csv_fields()).unwrap(), fv);
        assert_eq!(FEATURE_CSV_HEADER.split(',').count(), 13);
    }
}
