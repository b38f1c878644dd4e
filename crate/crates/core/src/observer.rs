//! Generalized-momentum observer in platform coordinates.
//!
//! With `p = M_x dx` and `beta = g_x + F_fr - C_x^T dx` the residual
//! `F_hat = K_o (p - integral(F_m - beta + F_hat))` follows
//! `dF_hat/dt = K_o (F_ext - F_hat)`. The integral is advanced with the
//! trapezoidal rule; the `F_hat` term of the current sample is solved for
//! algebraically, which makes the discrete filter a Tustin first-order lag.

use nalgebra::Vector3;

use crate::dynamics::{dyn_terms, DynTerms};
use crate::error::{Error, Result};
use crate::kinematics::KinState;
use crate::model::RobotModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub gain: Vector3<f64>,
    pub integral: Vector3<f64>,
    pub f_hat: Vector3<f64>,
    /// `F_m - beta + F_hat` at the previous sample.
    prev_integrand: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverOutput {
    pub f_hat: Vector3<f64>,
    /// Actuator-space estimate `J_x_qa^T F_hat`.
    pub tau_hat: Vector3<f64>,
}

impl ObserverState {
    /// Starts the observer at rest with a zero estimate: the integral is
    /// seeded with the initial momentum.
    pub fn start(state: &KinState, f_m: &Vector3<f64>, model_hat: &RobotModel) -> Result<Self> {
        let terms = dyn_terms(state, model_hat)?;
        Ok(Self::start_with(state, f_m, &terms, Vector3::from(model_hat.observer_gain)))
    }

    pub fn start_with(state: &KinState, f_m: &Vector3<f64>, terms: &DynTerms, gain: Vector3<f64>) -> Self {
        ObserverState {
            gain,
            integral: terms.m_x * state.dx,
            f_hat: Vector3::zeros(),
            prev_integrand: f_m - terms.beta(&state.dx),
        }
    }
}

/// One observer update at a new sample `(state, F_m)` taken `dt` after the previous one.
pub fn observer_step(
    obs: &ObserverState,
    state: &KinState,
    f_m: &Vector3<f64>,
    dt: f64,
    model_hat: &RobotModel,
) -> Result<(ObserverState, ObserverOutput)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("observer step {dt} must be positive")));
    }
    let terms = dyn_terms(state, model_hat)?;
    Ok(observer_step_with(obs, state, f_m, dt, &terms))
}

pub fn observer_step_with(
    obs: &ObserverState,
    state: &KinState,
    f_m: &Vector3<f64>,
    dt: f64,
    terms: &DynTerms,
) -> (ObserverState, ObserverOutput) {
    let p = terms.m_x * state.dx;
    let known = f_m - terms.beta(&state.dx);
    let half = 0.5 * dt;
    let rhs = p - obs.integral - (obs.prev_integrand + known) * half;
    let f_hat = Vector3::from_fn(|i, _| obs.gain[i] * rhs[i] / (1.0 + obs.gain[i] * half));
    let integrand = known + f_hat;
    let integral = obs.integral + (obs.prev_integrand + integrand) * half;
    let next = ObserverState {
        gain: obs.gain,
        integral,
        f_hat,
        prev_integrand: integrand,
    };
    let out = ObserverOutput {
        f_hat,
        tau_hat: terms.jac.j_x_qa.transpose() * f_hat,
    };
    (next, out)
}

/// Strict per-DOF threshold test.
pub fn detect(f_hat: &Vector3<f64>, thresholds: &Vector3<f64>) -> bool {
    f_hat.iter().zip(thresholds.iter()).any(|(f, t)| f.abs() > *t)
}

/// First-order step-response time constant fitted by least squares to
/// `F (1 - exp(-t / T))`, golden-section search over `T` in `[lo, hi]`.
pub fn fit_time_constant(t: &[f64], y: &[f64], step: f64, lo: f64, hi: f64) -> f64 {
    let sse = |tau: f64| -> f64 {
        t.iter()
            .zip(y)
            .map(|(t, y)| (y - step * (1.0 - (-t / tau).exp())).powi(2))
            .sum()
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..200 {
        if sse(c) < sse(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, ExternalLoad, ImpedanceHold, SimSpec};
    use crate::kinematics::Pose;
    use crate::model::default_model;

    #[test]
    fn detection_is_strict() {
        let th = Vector3::new(5.0, 5.0, 0.5);
        assert!(!detect(&Vector3::new(5.0, -5.0, 0.5), &th));
        assert!(detect(&Vector3::new(0.0, -5.0001, 0.0), &th));
        assert!(detect(&Vector3::new(0.0, 0.0, -0.51), &th));
    }

    #[test]
    fn time_constant_fit_recovers_exact_curve() {
        let t: Vec<f64> = (0..300).map(|k| k as f64 * 1e-3).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (1.0 - (-t / 0.05).exp())).collect();
        assert!((fit_time_constant(&t, &y, 3.0, 1e-3, 1.0) - 0.05).abs() < 1e-7);
    }

    #[test]
    fn free_motion_keeps_estimate_near_zero() {
        let m = default_model();
        let s = KinState::at_pose(Pose::new(0.0, 0.0, 0.0), &m, m.elbows()).unwrap();
        let ctrl = ImpedanceHold::new(Pose::new(0.01, -0.01, 0.05), &m, m.elbows()).unwrap();
        let traj = simulate(
            &s,
            |_, s, t| ctrl.wrench(s, t),
            |_, _, _| ExternalLoad::default(),
            &m,
            SimSpec::new(1e-3, 300).unwrap(),
        );
        assert!(traj.truncated.is_none());
        let mut obs = ObserverState::start(&traj.samples[0].state, &traj.samples[0].f_m, &m).unwrap();
        let mut worst: f64 = 0.0;
        for smp in &traj.samples[1..] {
            let (next, out) = observer_step(&obs, &smp.state, &smp.f_m, 1e-3, &m).unwrap();
            obs = next;
            worst = worst.max(out.f_hat.amax());
        }
        assert!(worst < 0.05, "{worst}");
    }
}
