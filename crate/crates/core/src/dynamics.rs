//! Operational-space dynamics `M_x ddx + c_x + g_x + F_fr = F_m + F_ext`,
//! wrench projections, and a fixed-step RK4 simulator.
//!
//! Links are uniform rods and the platform is a rigid body with its COM at
//! the platform frame origin. With planar bodies the body inertia is constant
//! in the world frame, so `C_x = sum J_b^T M_b dJ_b/dt` and
//! `dM_x/dt = C_x + C_x^T` hold exactly.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::classifiers::BodyLabel;
use crate::error::{Error, Result};
use crate::kinematics::{
    contact_jacobians_with, inverse_kinematics, jacobians, Branch, ContactLocation, ContactSpec, JacobianSet, Joints,
    KinState, Matrix9, Matrix9x3, Pose,
};
use crate::model::{RobotModel, N_CHAINS};
use crate::planar::{perp, rot, unit, Vec2};

type Matrix3x9 = SMatrix<f64, 3, 9>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WrenchFrame {
    /// Force in world axes, moment about the platform frame origin.
    Platform,
    /// Pure force at a world contact point.
    ContactPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub f: Vec2,
    pub m: f64,
    pub frame: WrenchFrame,
}

impl Wrench {
    pub fn platform(v: Vector3<f64>) -> Self {
        Wrench {
            f: Vec2::new(v[0], v[1]),
            m: v[2],
            frame: WrenchFrame::Platform,
        }
    }

    pub fn contact(f: Vec2) -> Self {
        Wrench {
            f,
            m: 0.0,
            frame: WrenchFrame::ContactPoint,
        }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.f.x, self.f.y, self.m)
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().all(|v| v.is_finite()) && self.m.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct DynTerms {
    pub m_x: Matrix3<f64>,
    pub c_mat: Matrix3<f64>,
    /// `C_x dx`.
    pub c_x: Vector3<f64>,
    pub g_x: Vector3<f64>,
    pub f_fr: Vector3<f64>,
    pub jac: JacobianSet,
}

impl DynTerms {
    /// `beta = g_x + F_fr - C_x^T dx`, the observer's model-based drift term.
    pub fn beta(&self, dx: &Vector3<f64>) -> Vector3<f64> {
        self.g_x + self.f_fr - self.c_mat.transpose() * dx
    }

    pub fn kinetic_energy(&self, dx: &Vector3<f64>) -> f64 {
        0.5 * dx.dot(&(self.m_x * dx))
    }
}

/// Actuator friction torques with tanh-smoothed Coulomb term.
pub fn joint_friction(model: &RobotModel, dqa: &Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let f = &model.chains[i].friction;
        f.viscous * dqa[i] + f.coulomb * (dqa[i] / model.coulomb_smoothing).tanh()
    })
}

fn res_dq_dot(q: &Joints, dq: &Joints, model: &RobotModel) -> Matrix9 {
    let mut m = Matrix9::zeros();
    for i in 0..N_CHAINS {
        let c = &model.chains[i];
        let t1 = q[3 * i];
        let t2 = t1 + q[3 * i + 1];
        let w1 = dq[3 * i];
        let w2 = w1 + dq[3 * i + 1];
        let a = -unit(t1) * (c.link1.length * w1) - unit(t2) * (c.link2.length * w2);
        let b = -unit(t2) * (c.link2.length * w2);
        let o = 3 * i;
        m[(o, o)] = a.x;
        m[(o + 1, o)] = a.y;
        m[(o, o + 1)] = b.x;
        m[(o + 1, o + 1)] = b.y;
    }
    m
}

fn res_dx_dot(x: &Pose, dx: &Pose, model: &RobotModel) -> Matrix9x3 {
    let mut m = Matrix9x3::zeros();
    let r = rot(x[2]);
    for i in 0..N_CHAINS {
        let v = r * model.attach(i) * dx[2];
        m[(3 * i, 2)] = v.x;
        m[(3 * i + 1, 2)] = v.y;
    }
    m
}

/// Time derivative of `J_q_x` along `(q, x, dx)`.
pub fn j_q_x_dot(state: &KinState, jac: &JacobianSet, model: &RobotModel) -> Matrix9x3 {
    let dq = jac.j_q_x * state.dx;
    let rq = crate::kinematics::res_dq(&state.q, model);
    let rhs = res_dq_dot(&state.q, &dq, model) * jac.j_q_x + res_dx_dot(&state.x, &state.dx, model);
    let mut out = Matrix9x3::zeros();
    for i in 0..N_CHAINS {
        let blk: Matrix3<f64> = rq.fixed_view::<3, 3>(3 * i, 3 * i).into_owned();
        let r: Matrix3<f64> = rhs.fixed_view::<3, 3>(3 * i, 0).into_owned();
        let sol = -blk.lu().solve(&r).unwrap_or_else(|| Matrix3::from_element(f64::NAN));
        out.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&sol);
    }
    out
}

/// Twist Jacobians (COM velocity, angular rate) of both links of chain `i`
/// w.r.t. `q`, and their time derivatives.
fn link_jacobians(q: &Joints, dq: &Joints, model: &RobotModel, i: usize) -> [(f64, f64, Matrix3x9, Matrix3x9); 2] {
    let c = &model.chains[i];
    let t1 = q[3 * i];
    let t2 = t1 + q[3 * i + 1];
    let w1 = dq[3 * i];
    let w2 = w1 + dq[3 * i + 1];
    let (u1, u2) = (unit(t1), unit(t2));
    let (n1, n2) = (perp(&u1), perp(&u2));
    let (qa, qp) = (3 * i, 3 * i + 1);

    let mut j1 = Matrix3x9::zeros();
    let mut j1d = Matrix3x9::zeros();
    let v = n1 * c.link1.com;
    j1[(0, qa)] = v.x;
    j1[(1, qa)] = v.y;
    j1[(2, qa)] = 1.0;
    let v = -u1 * (c.link1.com * w1);
    j1d[(0, qa)] = v.x;
    j1d[(1, qa)] = v.y;

    let mut j2 = Matrix3x9::zeros();
    let mut j2d = Matrix3x9::zeros();
    let a = n1 * c.link1.length + n2 * c.link2.com;
    let b = n2 * c.link2.com;
    j2[(0, qa)] = a.x;
    j2[(1, qa)] = a.y;
    j2[(2, qa)] = 1.0;
    j2[(0, qp)] = b.x;
    j2[(1, qp)] = b.y;
    j2[(2, qp)] = 1.0;
    let ad = -u1 * (c.link1.length * w1) - u2 * (c.link2.com * w2);
    let bd = -u2 * (c.link2.com * w2);
    j2d[(0, qa)] = ad.x;
    j2d[(1, qa)] = ad.y;
    j2d[(0, qp)] = bd.x;
    j2d[(1, qp)] = bd.y;

    [
        (c.link1.mass, c.link1.inertia, j1, j1d),
        (c.link2.mass, c.link2.inertia, j2, j2d),
    ]
}

/// Operational-space dynamic terms at a consistent state. Joint rates are
/// recomputed from `dx`, so `state.dq` is not read.
pub fn dyn_terms(state: &KinState, model: &RobotModel) -> Result<DynTerms> {
    let jac = jacobians(state, model)?;
    dyn_terms_with(state, jac, model)
}

pub fn dyn_terms_with(state: &KinState, jac: JacobianSet, model: &RobotModel) -> Result<DynTerms> {
    let dq = jac.j_q_x * state.dx;
    let jd = j_q_x_dot(state, &jac, model);
    let g = model.gravity_vec();

    let mp = model.platform.mass;
    let mut m_x = Matrix3::from_diagonal(&Vector3::new(mp, mp, model.platform.inertia));
    let mut c_mat = Matrix3::zeros();
    let mut g_x = -Vector3::new(mp * g.x, mp * g.y, 0.0);

    for i in 0..N_CHAINS {
        for (mass, inertia, jb, jbd) in link_jacobians(&state.q, &dq, model, i) {
            let mb = Matrix3::from_diagonal(&Vector3::new(mass, mass, inertia));
            let jbx = jb * jac.j_q_x;
            let jbx_dot = jbd * jac.j_q_x + jb * jd;
            m_x += jbx.transpose() * mb * jbx;
            c_mat += jbx.transpose() * mb * jbx_dot;
            g_x -= jbx.transpose() * Vector3::new(mass * g.x, mass * g.y, 0.0);
        }
    }
    m_x = 0.5 * (m_x + m_x.transpose());

    let dqa = Vector3::new(dq[0], dq[3], dq[6]);
    let f_fr = jac.j_qa_x().transpose() * joint_friction(model, &dqa);
    Ok(DynTerms {
        m_x,
        c_x: c_mat * state.dx,
        c_mat,
        g_x,
        f_fr,
        jac,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkProjection {
    pub f_mp: Wrench,
    pub tau_a: Vector3<f64>,
}

/// Projects a pure contact force onto platform coordinates and actuators.
pub fn project_contact(state: &KinState, contact: &ContactSpec, model: &RobotModel) -> Result<LinkProjection> {
    let jac = jacobians(state, model)?;
    Ok(project_contact_with(&jac, state, contact.body, contact.location, contact.force(), model))
}

pub fn project_contact_with(
    jac: &JacobianSet,
    state: &KinState,
    body: BodyLabel,
    location: ContactLocation,
    force: Vec2,
    model: &RobotModel,
) -> LinkProjection {
    let cj = contact_jacobians_with(jac, state, body, location, model);
    LinkProjection {
        f_mp: Wrench::platform(cj.j_xc_x.transpose() * force),
        tau_a: cj.j_xc_qa.transpose() * force,
    }
}

/// Link contact projection; `F_link` must be a pure force at the contact point.
pub fn project_link_wrench(
    state: &KinState,
    contact: &ContactSpec,
    f_link: &Wrench,
    model: &RobotModel,
) -> Result<(Wrench, Vector3<f64>)> {
    if contact.body == BodyLabel::MP {
        return Err(Error::InvalidArgument("project_link_wrench needs a link contact".into()));
    }
    if f_link.frame != WrenchFrame::ContactPoint || f_link.m != 0.0 {
        return Err(Error::InvalidArgument("link wrench must be a pure contact force".into()));
    }
    let jac = jacobians(state, model)?;
    let p = project_contact_with(&jac, state, contact.body, contact.location, f_link.f, model);
    Ok((p.f_mp, p.tau_a))
}

/// `tau_a = J_x_qa^T F`.
pub fn actuator_projection(state: &KinState, f_mp: &Wrench, model: &RobotModel) -> Result<Vector3<f64>> {
    let jac = jacobians(state, model)?;
    Ok(jac.j_x_qa.transpose() * f_mp.to_vector())
}

/// Platform-coordinate wrench equivalent to actuator torques, `J_x_qa^-T tau`.
pub fn wrench_from_torques(jac: &JacobianSet, tau: &Vector3<f64>) -> Vector3<f64> {
    jac.j_qa_x().transpose() * tau
}

/// Impedance-held platform: `F_m = K (x_d - x) - D dx + g_x`, diagonal `D`
/// from the damping ratio and the inertia at `x_d`.
#[derive(Debug, Clone)]
pub struct ImpedanceHold {
    pub x_d: Pose,
    pub stiffness: Vector3<f64>,
    pub damping: Vector3<f64>,
}

impl ImpedanceHold {
    pub fn new(x_d: Pose, model: &RobotModel, branch: Branch) -> Result<Self> {
        let s = KinState::at_pose(x_d, model, branch)?;
        let terms = dyn_terms(&s, model)?;
        let k = Vector3::from(model.stiffness);
        let damping = Vector3::from_fn(|i, _| 2.0 * model.damping_ratio * (k[i] * terms.m_x[(i, i)]).sqrt());
        Ok(ImpedanceHold {
            x_d,
            stiffness: k,
            damping,
        })
    }

    pub fn wrench(&self, state: &KinState, terms: &DynTerms) -> Vector3<f64> {
        let mut e = self.x_d - state.x;
        e[2] = crate::planar::wrap_angle(e[2]);
        self.stiffness.component_mul(&e) - self.damping.component_mul(&state.dx) + terms.g_x
    }

    /// Static deflection `x = x_d + K^-1 F`.
    pub fn deflected(&self, f_ext: &Vector3<f64>) -> Pose {
        self.x_d + f_ext.component_div(&self.stiffness)
    }
}

/// External load at a sample, in platform coordinates and actuator torques.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExternalLoad {
    pub wrench: Vector3<f64>,
    pub tau: Vector3<f64>,
}

impl ExternalLoad {
    pub fn platform(w: Vector3<f64>, jac: &JacobianSet) -> Self {
        ExternalLoad {
            wrench: w,
            tau: jac.j_x_qa.transpose() * w,
        }
    }

    /// Contact force fixed in the world frame at a body-fixed location.
    pub fn contact(jac: &JacobianSet, state: &KinState, contact: &ContactSpec, scale: f64, model: &RobotModel) -> Self {
        let p = project_contact_with(jac, state, contact.body, contact.location, contact.force() * scale, model);
        ExternalLoad {
            wrench: p.f_mp.to_vector(),
            tau: p.tau_a,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub state: KinState,
    pub f_m: Vector3<f64>,
    pub ext: ExternalLoad,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Set when the rollout stopped early at a singular or unreachable state.
    pub truncated: Option<String>,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,phi,dx,dy,dphi");
        for i in 1..=3 {
            out.push_str(&format!(",qa{i},qp{i},qc{i}"));
        }
        out.push_str(",Fm_x,Fm_y,Fm_m,Fext_x,Fext_y,Fext_m\n");
        for s in &self.samples {
            let mut row = vec![s.t];
            row.extend(s.state.x.iter());
            row.extend(s.state.dx.iter());
            row.extend(s.state.q.iter());
            row.extend(s.f_m.iter());
            row.extend(s.ext.wrench.iter());
            out.push_str(&crate::report::csv_row(&row));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimSpec {
    pub dt: f64,
    pub steps: usize,
}

impl SimSpec {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt <= 1e-3) {
            return Err(Error::InvalidArgument(format!("time step {dt} s outside (0, 1 ms]")));
        }
        Ok(SimSpec { dt, steps })
    }
}

/// Consistent state and dynamic terms reconstructed from `(x, dx)`.
pub fn state_from(x: Pose, dx: Pose, model: &RobotModel, branch: Branch) -> Result<(KinState, DynTerms)> {
    let q = inverse_kinematics(&x, model, branch)?;
    let mut s = KinState {
        q,
        x,
        dq: Joints::zeros(),
        dx,
    };
    let terms = dyn_terms(&s, model)?;
    s.dq = terms.jac.j_q_x * dx;
    Ok((s, terms))
}

/// RK4 rollout. `motor` and `external` are evaluated at every stage so the
/// inputs are continuous in time; joint coordinates are recovered from the
/// pose by inverse kinematics on the initial branch.
pub fn simulate<M, E>(initial: &KinState, motor: M, external: E, model: &RobotModel, spec: SimSpec) -> Trajectory
where
    M: FnMut(f64, &KinState, &DynTerms) -> Vector3<f64>,
    E: FnMut(f64, &KinState, &JacobianSet) -> ExternalLoad,
{
    simulate_until(initial, motor, external, |_| false, model, spec)
}

/// As [`simulate`], stopping after the first sample for which `stop` is true.
pub fn simulate_until<M, E, S>(
    initial: &KinState,
    mut motor: M,
    mut external: E,
    mut stop: S,
    model: &RobotModel,
    spec: SimSpec,
) -> Trajectory
where
    M: FnMut(f64, &KinState, &DynTerms) -> Vector3<f64>,
    E: FnMut(f64, &KinState, &JacobianSet) -> ExternalLoad,
    S: FnMut(&Sample) -> bool,
{
    let branch = initial.branch();
    let mut samples = Vec::with_capacity(spec.steps + 1);
    let mut eval = |t: f64, x: Pose, dx: Pose| -> Result<(Pose, KinState, Vector3<f64>, ExternalLoad)> {
        let (s, terms) = state_from(x, dx, model, branch)?;
        let f_m = motor(t, &s, &terms);
        let ext = external(t, &s, &terms.jac);
        let rhs = f_m + ext.wrench - terms.c_x - terms.g_x - terms.f_fr;
        let acc = terms.m_x.cholesky().ok_or(Error::SingularConfiguration {
            what: "operational-space inertia",
            cond: f64::INFINITY,
        })?;
        Ok((acc.solve(&rhs), s, f_m, ext))
    };

    let (mut x, mut dx) = (initial.x, initial.dx);
    let mut truncated = None;
    for k in 0..=spec.steps {
        let t = k as f64 * spec.dt;
        let (a1, s, f_m, ext) = match eval(t, x, dx) {
            Ok(v) => v,
            Err(e) => {
                truncated = Some(format!("t = {t:.4} s: {e}"));
                break;
            }
        };
        let sample = Sample { t, state: s, f_m, ext };
        let done = stop(&sample);
        samples.push(sample);
        if done || k == spec.steps {
            break;
        }
        let h = spec.dt;
        let mut stage = |tt: f64, xx: Pose, vv: Pose| eval(tt, xx, vv).map(|r| r.0);
        let res = (|| -> Result<(Pose, Pose)> {
            let (k1x, k1v) = (dx, a1);
            let k2x = dx + k1v * (0.5 * h);
            let k2v = stage(t + 0.5 * h, x + k1x * (0.5 * h), k2x)?;
            let k3x = dx + k2v * (0.5 * h);
            let k3v = stage(t + 0.5 * h, x + k2x * (0.5 * h), k3x)?;
            let k4x = dx + k3v * h;
            let k4v = stage(t + h, x + k3x * h, k4x)?;
            Ok((
                x + (k1x + 2.0 * k2x + 2.0 * k3x + k4x) * (h / 6.0),
                dx + (k1v + 2.0 * k2v + 2.0 * k3v + k4v) * (h / 6.0),
            ))
        })();
        match res {
            Ok((nx, nv)) => {
                x = nx;
                dx = nv;
            }
            Err(e) => {
                truncated = Some(format!("t = {t:.4} s: {e}"));
                break;
            }
        }
    }
    Trajectory { samples, truncated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_model;

    fn moving_state(m: &RobotModel) -> KinState {
        KinState::with_velocity(Pose::new(0.02, -0.01, 0.15), Pose::new(0.3, -0.2, 1.1), m, m.elbows()).unwrap()
    }

    #[test]
    fn static_state_has_no_velocity_terms() {
        let m = default_model();
        let s = KinState::at_pose(Pose::new(0.01, 0.02, -0.1), &m, m.elbows()).unwrap();
        let t = dyn_terms(&s, &m).unwrap();
        assert_eq!(t.c_x, Vector3::zeros());
        assert_eq!(t.f_fr, Vector3::zeros());
        assert_eq!(t.g_x, Vector3::zeros());
    }

    #[test]
    fn inertia_is_spd() {
        let m = default_model();
        let t = dyn_terms(&moving_state(&m), &m).unwrap();
        assert!((t.m_x - t.m_x.transpose()).amax() < 1e-12);
        assert!(t.m_x.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn inertia_rate_matches_coriolis_identity() {
        let m = default_model();
        let s = moving_state(&m);
        let t = dyn_terms(&s, &m).unwrap();
        let h = 1e-6;
        let at = |sign: f64| {
            let x = s.x + s.dx * (sign * h);
            let st = KinState::at_pose(x, &m, s.branch()).unwrap();
            dyn_terms(&st, &m).unwrap().m_x
        };
        let mdot = (at(1.0) - at(-1.0)) / (2.0 * h);
        let skew = mdot - (t.c_mat + t.c_mat.transpose());
        assert!(skew.amax() < 1e-6 * mdot.amax().max(1.0), "{skew}");
    }

    #[test]
    fn gravity_maps_through_body_jacobians() {
        let mut m = default_model();
        m.gravity = [0.0, -9.81];
        let s = KinState::at_pose(Pose::new(0.0, 0.0, 0.0), &m, m.elbows()).unwrap();
        let t = dyn_terms(&s, &m).unwrap();
        // Potential energy finite difference along y.
        let pot = |y: f64| -> f64 {
            let st = KinState::at_pose(Pose::new(0.0, y, 0.0), &m, m.elbows()).unwrap();
            let mut u = m.platform.mass * 9.81 * y;
            for i in 0..3 {
                let p = crate::kinematics::chain_points(&st.q, &m, i);
                let c = &m.chains[i];
                let c1 = p.active + (p.passive - p.active) * (c.link1.com / c.link1.length);
                let c2 = p.passive + (p.coupling - p.passive) * (c.link2.com / c.link2.length);
                u += 9.81 * (c.link1.mass * c1.y + c.link2.mass * c2.y);
            }
            u
        };
        let h = 1e-6;
        let fd = (pot(h) - pot(-h)) / (2.0 * h);
        assert!((t.g_x[1] - fd).abs() < 1e-6, "{} vs {fd}", t.g_x[1]);
    }

    #[test]
    fn link_one_contact_excites_one_drive() {
        let m = default_model();
        let s = moving_state(&m);
        for i in 0..3 {
            let c = ContactSpec::link(BodyLabel::from_chain_link(i, 1), 0.6, Vec2::new(0.6, 0.8), 40.0).unwrap();
            let (_, tau) = project_link_wrench(&s, &c, &Wrench::contact(c.force()), &m).unwrap();
            for k in 0..3 {
                if k == i {
                    assert!(tau[k].abs() > 1e-3);
                } else {
                    assert!(tau[k].abs() < 1e-12, "{tau}");
                }
            }
        }
    }

    #[test]
    fn coupling_contact_line_passes_through_coupling_joint() {
        let m = default_model();
        let s = moving_state(&m);
        let c = ContactSpec::link(BodyLabel::from_chain_link(1, 2), 1.0, Vec2::new(0.28, -0.96), 70.0).unwrap();
        let (w, _) = project_link_wrench(&s, &c, &Wrench::contact(c.force()), &m).unwrap();
        let r = crate::kinematics::chain_points(&s.q, &m, 1).coupling - Vec2::new(s.x[0], s.x[1]);
        let moment_about_cj = w.m - crate::planar::cross(&r, &w.f);
        assert!(moment_about_cj.abs() < 1e-12, "{moment_about_cj}");
    }

    #[test]
    fn zero_force_projects_to_zero() {
        let m = default_model();
        let s = moving_state(&m);
        let c = ContactSpec::link(BodyLabel::from_chain_link(0, 2), 0.3, Vec2::new(1.0, 0.0), 0.0).unwrap();
        let (w, tau) = project_link_wrench(&s, &c, &Wrench::contact(c.force()), &m).unwrap();
        assert_eq!(w.to_vector(), Vector3::zeros());
        assert_eq!(tau, Vector3::zeros());
        assert_eq!(actuator_projection(&s, &Wrench::platform(Vector3::zeros()), &m).unwrap(), Vector3::zeros());
    }

    #[test]
    fn platform_contact_factorization() {
        let m = default_model();
        let s = moving_state(&m);
        let c = ContactSpec::platform(Vec2::new(0.0, 0.15), Vec2::new(0.0, -1.0), 25.0).unwrap();
        let p = project_contact(&s, &c, &m).unwrap();
        let via_platform = actuator_projection(&s, &p.f_mp, &m).unwrap();
        assert!((p.tau_a - via_platform).amax() < 1e-10);
    }

    #[test]
    fn virtual_power_balance() {
        let m = default_model();
        let s = moving_state(&m);
        let f = Wrench::platform(Vector3::new(12.0, -7.0, 0.8));
        let tau = actuator_projection(&s, &f, &m).unwrap();
        let lhs = tau.dot(&s.active_rates());
        let rhs = f.to_vector().dot(&s.dx);
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn dt_above_one_ms_is_rejected() {
        assert!(SimSpec::new(2e-3, 10).is_err());
        assert!(SimSpec::new(1e-3, 10).is_ok());
    }

    #[test]
    fn equilibrium_stays_put() {
        let m = default_model();
        let s = KinState::at_pose(Pose::new(0.01, 0.0, 0.05), &m, m.elbows()).unwrap();
        let traj = simulate(
            &s,
            |_, _, t| t.g_x + t.f_fr,
            |_, _, _| ExternalLoad::default(),
            &m,
            SimSpec::new(1e-3, 200).unwrap(),
        );
        assert!(traj.truncated.is_none());
        let last = traj.samples.last().unwrap();
        assert!((last.state.x - s.x).amax() < 1e-9);
    }

    #[test]
    fn constant_force_starts_along_inverse_inertia() {
        let m = default_model();
        let s = KinState::at_pose(Pose::new(0.0, 0.0, 0.0), &m, m.elbows()).unwrap();
        let f = Vector3::new(10.0, 4.0, 0.3);
        let spec = SimSpec::new(1e-4, 20).unwrap();
        let traj = simulate(&s, |_, _, _| Vector3::zeros(), |_, _, j| ExternalLoad::platform(f, j), &m, spec);
        let t_end = 20.0 * 1e-4;
        let dx = traj.samples.last().unwrap().state.x - s.x;
        let expected = dyn_terms(&s, &m).unwrap().m_x.cholesky().unwrap().solve(&f) * (0.5 * t_end * t_end);
        assert!((dx - expected).norm() < 0.05 * expected.norm(), "{dx} vs {expected}");
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let m = default_model();
        let s = KinState::at_pose(Pose::zeros(), &m, m.elbows()).unwrap();
        let traj = simulate(&s, |_, _, _| Vector3::zeros(), |_, _, _| ExternalLoad::default(), &m, SimSpec::new(1e-3, 3).unwrap());
        let csv = traj.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0].split(',').count(), 22);
        assert_eq!(lines[1].split(',').count(), 22);
    }
}
