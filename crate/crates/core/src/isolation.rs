//! Contact isolation after classification: line-of-action clipping against
//! the platform hull, and a particle filter over (abscissa, force) on a
//! second link.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::classifiers::BodyLabel;
use crate::dynamics::Wrench;
use crate::error::{Error, Result};
use crate::features::LineOfAction;
use crate::kinematics::{contact_dq, jacobians, ContactLocation, KinState, Pose};
use crate::model::RobotModel;
use crate::planar::{cross, perp, unit, Vec2};

/// Parameter gap below which the two hull crossings count as one.
const TANGENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatformContact {
    /// Push point, platform body frame.
    pub point: Vec2,
    /// Entry and exit parameters of the body-frame line, `lambda_in <= lambda_out`.
    pub lambda_in: f64,
    pub lambda_out: f64,
    pub force: Wrench,
}

/// Parameter interval of a body-frame line inside a CCW convex polygon.
pub fn clip_line(loa: &LineOfAction, hull: &[Vec2]) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let n = hull.len();
    for k in 0..n {
        let a = hull[k];
        let e = hull[(k + 1) % n] - a;
        let outward = Vec2::new(e.y, -e.x);
        let num = outward.dot(&(a - loa.lever));
        let den = outward.dot(&loa.dir);
        if den.abs() < 1e-15 {
            if num < 0.0 {
                return Err(Error::NoIntersection);
            }
            continue;
        }
        let t = num / den;
        if den > 0.0 {
            hi = hi.min(t);
        } else {
            lo = lo.max(t);
        }
    }
    if lo > hi + TANGENT_TOL {
        return Err(Error::NoIntersection);
    }
    Ok((lo, hi.max(lo)))
}

/// Intersects the line of action with the hull and returns the push point,
/// the crossing where the force direction enters the hull.
pub fn platform_isolate(loa: &LineOfAction, f_hat: &Wrench, hull: &[Vec2], pose: &Pose) -> Result<PlatformContact> {
    let body = loa.to_body(pose[2]);
    let (lambda_in, lambda_out) = clip_line(&body, hull)?;
    let point = body.point(lambda_in);
    if lambda_out - lambda_in < TANGENT_TOL {
        return Err(Error::TangentLine {
            point: [point.x, point.y],
            lambda: lambda_in,
        });
    }
    Ok(PlatformContact {
        point,
        lambda_in,
        lambda_out,
        force: *f_hat,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfConfig {
    pub particles: usize,
    /// Diffusion standard deviations of (abscissa, force).
    pub sigma_motion: [f64; 2],
    /// Measurement noise standard deviation per drive torque.
    pub sigma_meas: [f64; 3],
    pub f_max: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        PfConfig {
            particles: 50,
            sigma_motion: [0.02, 2.0],
            sigma_meas: [0.1; 3],
            f_max: 140.0,
        }
    }
}

impl PfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidArgument("particle filter needs at least 2 particles".into()));
        }
        if self.sigma_motion.iter().any(|s| !(*s >= 0.0)) || self.sigma_meas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("particle filter covariances must be non-negative (measurement: positive)".into()));
        }
        if !(self.f_max > 0.0) {
            return Err(Error::InvalidArgument("force bound must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    /// Normalized abscissa on the second link.
    pub l: f64,
    /// Signed force along the link normal.
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub chain: usize,
    pub particles: Vec<Particle>,
    pub weights: Vec<f64>,
    pub cfg: PfConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfEstimate {
    pub l: f64,
    pub f: f64,
    pub ess: f64,
    /// Every likelihood underflowed and the weights were reset to uniform.
    pub all_weights_zero: bool,
}

pub fn pf_init(chain: usize, cfg: &PfConfig, rng: &mut impl Rng) -> Result<ParticleSet> {
    cfg.validate()?;
    if chain >= 3 {
        return Err(Error::InvalidArgument(format!("no chain {chain}")));
    }
    let ul = Uniform::new_inclusive(0.0, 1.0).expect("valid range");
    let uf = Uniform::new_inclusive(-cfg.f_max, cfg.f_max).expect("valid range");
    let particles = (0..cfg.particles)
        .map(|_| Particle {
            l: ul.sample(rng),
            f: uf.sample(rng),
        })
        .collect();
    Ok(ParticleSet {
        chain,
        particles,
        weights: vec![1.0 / cfg.particles as f64; cfg.particles],
        cfg: cfg.clone(),
    })
}

/// Per-state linear map from a particle to its predicted drive torques:
/// `tau = f * (a + l b)`.
#[derive(Debug, Clone, Copy)]
pub struct TorqueModel {
    a: Vector3<f64>,
    b: Vector3<f64>,
}

impl TorqueModel {
    pub fn new(state: &KinState, chain: usize, model: &RobotModel) -> Result<Self> {
        let jac = jacobians(state, model)?;
        let body = BodyLabel::from_chain_link(chain, 2);
        let t2 = state.q[3 * chain] + state.q[3 * chain + 1];
        let n = perp(&unit(t2));
        let map = |l: f64| {
            let j = contact_dq(&state.q, body, ContactLocation::Abscissa(l), model) * jac.j_q_x * jac.j_x_qa;
            j.transpose() * n
        };
        let a = map(0.0);
        Ok(TorqueModel { a, b: map(1.0) - a })
    }

    pub fn predict(&self, p: &Particle) -> Vector3<f64> {
        (self.a + self.b * p.l) * p.f
    }
}

impl ParticleSet {
    pub fn diffuse(&mut self, rng: &mut impl Rng) {
        let [sl, sf] = self.cfg.sigma_motion;
        let nl = Normal::new(0.0, sl).expect("finite sigma");
        let nf = Normal::new(0.0, sf).expect("finite sigma");
        for p in &mut self.particles {
            p.l = (p.l + nl.sample(rng)).clamp(0.0, 1.0);
            p.f += nf.sample(rng);
        }
    }

    /// Multiplies the weights by the measurement likelihood and normalizes.
    /// Returns `false` when every weight vanished and uniform weights were restored.
    pub fn weigh(&mut self, tau_hat: &Vector3<f64>, tm: &TorqueModel) -> bool {
        let s = self.cfg.sigma_meas;
        for (p, w) in self.particles.iter().zip(self.weights.iter_mut()) {
            let e = tau_hat - tm.predict(p);
            let m2: f64 = (0..3).map(|k| (e[k] / s[k]).powi(2)).sum();
            *w *= (-0.5 * m2).exp();
        }
        let total: f64 = self.weights.iter().sum();
        if total > 0.0 && total.is_finite() {
            self.weights.iter_mut().for_each(|w| *w /= total);
            true
        } else {
            let u = 1.0 / self.weights.len() as f64;
            self.weights.iter_mut().for_each(|w| *w = u);
            false
        }
    }

    pub fn estimate(&self) -> (f64, f64) {
        self.particles
            .iter()
            .zip(&self.weights)
            .fold((0.0, 0.0), |(l, f), (p, w)| (l + w * p.l, f + w * p.f))
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Systematic resampling; weights become uniform.
    pub fn resample(&mut self, rng: &mut impl Rng) {
        let n = self.particles.len();
        let step = 1.0 / n as f64;
        let mut u = rng.random_range(0.0..step);
        let mut cum = self.weights[0];
        let mut i = 0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            while u > cum && i + 1 < n {
                i += 1;
                cum += self.weights[i];
            }
            out.push(self.particles[i]);
            u += step;
        }
        self.particles = out;
        self.weights = vec![step; n];
    }
}

/// One filter cycle: diffuse, weigh, estimate (weighted mean before
/// resampling), resample.
pub fn pf_step(
    ps: &ParticleSet,
    tau_hat: &Vector3<f64>,
    state: &KinState,
    model: &RobotModel,
    rng: &mut impl Rng,
) -> Result<(ParticleSet, PfEstimate)> {
    let tm = TorqueModel::new(state, ps.chain, model)?;
    let mut next = ps.clone();
    next.diffuse(rng);
    let ok = next.weigh(tau_hat, &tm);
    if !ok {
        log::debug!("all particle weights vanished on chain {}; weights reset", ps.chain);
    }
    let (l, f) = next.estimate();
    let ess = next.ess();
    next.resample(rng);
    Ok((
        next,
        PfEstimate {
            l,
            f,
            ess,
            all_weights_zero: !ok,
        },
    ))
}

pub const HIST_BINS: usize = 20;

/// Weight mass per abscissa bin over [0, 1].
pub fn pf_histogram(ps: &ParticleSet) -> [f64; HIST_BINS] {
    let mut h = [0.0; HIST_BINS];
    for (p, w) in ps.particles.iter().zip(&ps.weights) {
        let k = ((p.l * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
        h[k] += w;
    }
    h
}

/// Distance from a platform-frame point to a line; used to check isolation results.
pub fn line_point_distance(loa: &LineOfAction, p: &Vec2) -> f64 {
    cross(&(p - loa.lever), &loa.dir).abs()
}
