//! Closed-loop kinematics of the planar 3-RRR robot.
//!
//! Joint vector layout: `q[3 i + 0]` active angle (absolute, world frame),
//! `q[3 i + 1]` passive angle (relative to link 1), `q[3 i + 2]` coupling
//! angle (platform orientation relative to link 2). Link 2 of chain `i`
//! therefore points along `q_a + q_p` and the platform orientation satisfies
//! `phi = q_a + q_p + q_c` for every chain.
//!
//! Per chain the full constraint set is the 2D loop closure plus the rotation
//! closure; `constraints_full` returns the six positional rows, the Jacobians
//! use all nine so that `Res_q` is square.

use nalgebra::{Matrix2x3, Matrix3, SMatrix, SVector, Vector3};

use crate::classifiers::BodyLabel;
use crate::error::{Error, Result};
use crate::model::{RobotModel, N_CHAINS};
use crate::planar::{perp, rot, unit, wrap_angle, Vec2};

pub type Pose = Vector3<f64>;
pub type Joints = SVector<f64, 9>;
pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Matrix9x3 = SMatrix<f64, 9, 3>;
pub type Matrix2x9 = SMatrix<f64, 2, 9>;

/// Default loop-closure tolerance for a state to count as consistent.
pub const EPS_LOOP: f64 = 1e-9;
/// Condition number beyond which a matrix is treated as singular.
pub const SINGULAR_COND: f64 = 1e12;
pub const FK_MAX_ITER: usize = 50;

pub type Branch = [i8; N_CHAINS];

#[derive(Debug, Clone, PartialEq)]
pub struct KinState {
    pub q: Joints,
    pub x: Pose,
    pub dq: Joints,
    pub dx: Pose,
}

impl KinState {
    /// Static consistent state at pose `x` on the given IK branch.
    pub fn at_pose(x: Pose, model: &RobotModel, branch: Branch) -> Result<Self> {
        let q = inverse_kinematics(&x, model, branch)?;
        Ok(KinState {
            q,
            x,
            dq: Joints::zeros(),
            dx: Pose::zeros(),
        })
    }

    /// Consistent state with platform velocity `dx`; joint rates follow from `J_q_x`.
    pub fn with_velocity(x: Pose, dx: Pose, model: &RobotModel, branch: Branch) -> Result<Self> {
        let mut s = Self::at_pose(x, model, branch)?;
        let j = jacobians(&s, model)?;
        s.dx = dx;
        s.dq = j.j_q_x * dx;
        Ok(s)
    }

    pub fn active(&self) -> Vector3<f64> {
        Vector3::new(self.q[0], self.q[3], self.q[6])
    }

    pub fn active_rates(&self) -> Vector3<f64> {
        Vector3::new(self.dq[0], self.dq[3], self.dq[6])
    }

    /// Elbow sign of each chain, read from the passive angles.
    pub fn branch(&self) -> Branch {
        std::array::from_fn(|i| if self.q[3 * i + 1].sin() >= 0.0 { 1 } else { -1 })
    }

    pub fn is_consistent(&self, model: &RobotModel, tol: f64) -> bool {
        loop_residual(&self.q, &self.x, model).amax() < tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactLocation {
    /// Normalized abscissa along the link axis, 0 at the proximal joint.
    Abscissa(f64),
    /// Point on the hull boundary, platform frame.
    PlatformPoint(Vec2),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSpec {
    pub body: BodyLabel,
    pub location: ContactLocation,
    /// Unit force direction, world frame.
    pub direction: Vec2,
    /// Signed force magnitude along `direction`.
    pub magnitude: f64,
}

impl ContactSpec {
    pub fn link(body: BodyLabel, abscissa: f64, direction: Vec2, magnitude: f64) -> Result<Self> {
        if body == BodyLabel::MP {
            return Err(Error::InvalidArgument("link contact on the platform label".into()));
        }
        if !(0.0..=1.0).contains(&abscissa) {
            return Err(Error::InvalidArgument(format!("abscissa {abscissa} outside [0, 1]")));
        }
        Self::checked(body, ContactLocation::Abscissa(abscissa), direction, magnitude)
    }

    pub fn platform(point: Vec2, direction: Vec2, magnitude: f64) -> Result<Self> {
        Self::checked(BodyLabel::MP, ContactLocation::PlatformPoint(point), direction, magnitude)
    }

    fn checked(body: BodyLabel, location: ContactLocation, direction: Vec2, magnitude: f64) -> Result<Self> {
        if (direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("contact direction must be a unit vector".into()));
        }
        if !magnitude.is_finite() {
            return Err(Error::InvalidArgument("non-finite contact magnitude".into()));
        }
        Ok(ContactSpec {
            body,
            location,
            direction,
            magnitude,
        })
    }

    pub fn force(&self) -> Vec2 {
        self.direction * self.magnitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainPoints {
    pub active: Vec2,
    pub passive: Vec2,
    pub coupling: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactJacobians {
    pub j_xc_q: Matrix2x9,
    pub j_xc_x: Matrix2x3<f64>,
    pub j_xc_qa: Matrix2x3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSet {
    /// `dq = J_q_x dx`.
    pub j_q_x: Matrix9x3,
    /// `dx = J_x_qa dq_a`.
    pub j_x_qa: Matrix3<f64>,
    pub contact: Option<ContactJacobians>,
}

impl JacobianSet {
    /// Rows of `J_q_x` belonging to the active joints, i.e. `J_x_qa^-1`.
    pub fn j_qa_x(&self) -> Matrix3<f64> {
        Matrix3::from_rows(&[
            self.j_q_x.row(0).into_owned(),
            self.j_q_x.row(3).into_owned(),
            self.j_q_x.row(6).into_owned(),
        ])
    }
}

#[inline]
fn angles(q: &Joints, i: usize) -> (f64, f64) {
    let qa = q[3 * i];
    (qa, qa + q[3 * i + 1])
}

/// Platform-side coupling point of chain `i` in the world frame.
pub fn platform_coupling(x: &Pose, model: &RobotModel, i: usize) -> Vec2 {
    Vec2::new(x[0], x[1]) + rot(x[2]) * model.attach(i)
}

pub fn chain_points(q: &Joints, model: &RobotModel, i: usize) -> ChainPoints {
    let c = &model.chains[i];
    let (t1, t2) = angles(q, i);
    let active = model.base(i);
    let passive = active + unit(t1) * c.link1.length;
    let coupling = passive + unit(t2) * c.link2.length;
    ChainPoints {
        active,
        passive,
        coupling,
    }
}

/// Stacked 2D loop-closure residuals (serial chain end minus platform attach point).
pub fn constraints_full(q: &Joints, x: &Pose, model: &RobotModel) -> SVector<f64, 6> {
    let mut r = SVector::<f64, 6>::zeros();
    for i in 0..N_CHAINS {
        let d = chain_points(q, model, i).coupling - platform_coupling(x, model, i);
        r[2 * i] = d.x;
        r[2 * i + 1] = d.y;
    }
    r
}

/// Positional and rotational closures, three rows per chain.
pub fn loop_residual(q: &Joints, x: &Pose, model: &RobotModel) -> Joints {
    let pos = constraints_full(q, x, model);
    let mut r = Joints::zeros();
    for i in 0..N_CHAINS {
        r[3 * i] = pos[2 * i];
        r[3 * i + 1] = pos[2 * i + 1];
        r[3 * i + 2] = wrap_angle(q[3 * i] + q[3 * i + 1] + q[3 * i + 2] - x[2]);
    }
    r
}

/// `d Res / d q`, block diagonal.
pub fn res_dq(q: &Joints, model: &RobotModel) -> Matrix9 {
    let mut m = Matrix9::zeros();
    for i in 0..N_CHAINS {
        let c = &model.chains[i];
        let (t1, t2) = angles(q, i);
        let d1 = perp(&unit(t1)) * c.link1.length;
        let d2 = perp(&unit(t2)) * c.link2.length;
        let o = 3 * i;
        m[(o, o)] = d1.x + d2.x;
        m[(o + 1, o)] = d1.y + d2.y;
        m[(o, o + 1)] = d2.x;
        m[(o + 1, o + 1)] = d2.y;
        m[(o + 2, o)] = 1.0;
        m[(o + 2, o + 1)] = 1.0;
        m[(o + 2, o + 2)] = 1.0;
    }
    m
}

/// `d Res / d x`.
pub fn res_dx(x: &Pose, model: &RobotModel) -> Matrix9x3 {
    let mut m = Matrix9x3::zeros();
    let r = rot(x[2]);
    for i in 0..N_CHAINS {
        let lever = perp(&(r * model.attach(i)));
        let o = 3 * i;
        m[(o, 0)] = -1.0;
        m[(o + 1, 1)] = -1.0;
        m[(o, 2)] = -lever.x;
        m[(o + 1, 2)] = -lever.y;
        m[(o + 2, 2)] = -1.0;
    }
    m
}

/// Reduced constraints with the passive angles eliminated:
/// `|C_i(x) - A_i(q_a)|^2 - L2^2` per chain.
pub fn reduced_constraints(q_a: &Vector3<f64>, x: &Pose, model: &RobotModel) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let c = &model.chains[i];
        let a = model.base(i) + unit(q_a[i]) * c.link1.length;
        let d = platform_coupling(x, model, i) - a;
        d.norm_squared() - c.link2.length * c.link2.length
    })
}

/// `(d Res_red / d x, d Res_red / d q_a)`; the latter is diagonal.
pub fn reduced_partials(q_a: &Vector3<f64>, x: &Pose, model: &RobotModel) -> (Matrix3<f64>, Matrix3<f64>) {
    let r = rot(x[2]);
    let mut dx = Matrix3::zeros();
    let mut dqa = Matrix3::zeros();
    for i in 0..N_CHAINS {
        let c = &model.chains[i];
        let a = model.base(i) + unit(q_a[i]) * c.link1.length;
        let d = platform_coupling(x, model, i) - a;
        let lever = perp(&(r * model.attach(i)));
        dx[(i, 0)] = 2.0 * d.x;
        dx[(i, 1)] = 2.0 * d.y;
        dx[(i, 2)] = 2.0 * d.dot(&lever);
        dqa[(i, i)] = -2.0 * d.dot(&(perp(&unit(q_a[i])) * c.link1.length));
    }
    (dx, dqa)
}

pub(crate) fn cond3(m: &Matrix3<f64>) -> f64 {
    let sv = m.singular_values();
    let (mx, mn) = (sv.max(), sv.min());
    if mn <= 0.0 || !mn.is_finite() {
        f64::INFINITY
    } else {
        mx / mn
    }
}

fn res_dq_cond(res_q: &Matrix9) -> f64 {
    let mut mx: f64 = 0.0;
    let mut mn = f64::INFINITY;
    for i in 0..N_CHAINS {
        let b: Matrix3<f64> = res_q.fixed_view::<3, 3>(3 * i, 3 * i).into_owned();
        let sv = b.singular_values();
        mx = mx.max(sv.max());
        mn = mn.min(sv.min());
    }
    if mn <= 0.0 {
        f64::INFINITY
    } else {
        mx / mn
    }
}

/// Closed-form two-link inverse kinematics for every chain.
pub fn inverse_kinematics(x: &Pose, model: &RobotModel, branch: Branch) -> Result<Joints> {
    let mut q = Joints::zeros();
    for i in 0..N_CHAINS {
        let c = &model.chains[i];
        let (l1, l2) = (c.link1.length, c.link2.length);
        let d = platform_coupling(x, model, i) - model.base(i);
        let dist2 = d.norm_squared();
        let cos_p = (dist2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        if !(-1.0..=1.0).contains(&cos_p) {
            return Err(Error::UnreachablePose { chain: i });
        }
        let qp = f64::from(branch[i].signum()) * cos_p.acos();
        let qa = d.y.atan2(d.x) - (l2 * qp.sin()).atan2(l1 + l2 * qp.cos());
        let qa = wrap_angle(qa);
        q[3 * i] = qa;
        q[3 * i + 1] = qp;
        q[3 * i + 2] = wrap_angle(x[2] - qa - qp);
    }
    Ok(q)
}

/// Passive and coupling angles implied by `(q_a, x)`; unique for any pose
/// satisfying the reduced constraints.
pub fn complete_joints(q_a: &Vector3<f64>, x: &Pose, model: &RobotModel) -> Joints {
    let mut q = Joints::zeros();
    for i in 0..N_CHAINS {
        let c = &model.chains[i];
        let a = model.base(i) + unit(q_a[i]) * c.link1.length;
        let d = platform_coupling(x, model, i) - a;
        let t2 = d.y.atan2(d.x);
        q[3 * i] = q_a[i];
        q[3 * i + 1] = wrap_angle(t2 - q_a[i]);
        q[3 * i + 2] = wrap_angle(x[2] - t2);
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkReport {
    pub pose: Pose,
    pub iterations: usize,
    pub residual: f64,
}

/// Newton-Raphson on the reduced constraints.
pub fn forward_kinematics(q_a: &Vector3<f64>, x_guess: &Pose, model: &RobotModel) -> Result<Pose> {
    forward_kinematics_report(q_a, x_guess, model).map(|r| r.pose)
}

pub fn forward_kinematics_report(q_a: &Vector3<f64>, x_guess: &Pose, model: &RobotModel) -> Result<FkReport> {
    let mut x = *x_guess;
    let mut res = reduced_constraints(q_a, &x, model);
    for it in 1..=FK_MAX_ITER {
        let (jx, _) = reduced_partials(q_a, &x, model);
        let cond = cond3(&jx);
        if cond > SINGULAR_COND {
            return Err(Error::SingularConfiguration {
                what: "reduced-constraint Jacobian",
                cond,
            });
        }
        let step = jx.lu().solve(&res).ok_or(Error::SingularConfiguration {
            what: "reduced-constraint Jacobian",
            cond: f64::INFINITY,
        })?;
        x -= step;
        res = reduced_constraints(q_a, &x, model);
        if step.norm() < 1e-12 && res.amax() < 1e-10 {
            return Ok(FkReport {
                pose: x,
                iterations: it,
                residual: res.amax(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: FK_MAX_ITER,
        residual: res.amax(),
    })
}

/// `J_q_x` and `J_x_qa` from analytic partials.
pub fn jacobians(state: &KinState, model: &RobotModel) -> Result<JacobianSet> {
    let rq = res_dq(&state.q, model);
    let cond = res_dq_cond(&rq);
    if cond > SINGULAR_COND {
        return Err(Error::SingularConfiguration {
            what: "Res_q (serial singularity)",
            cond,
        });
    }
    let rx = res_dx(&state.x, model);
    let j_q_x = -solve_block_diag(&rq, &rx);

    let (red_x, red_qa) = reduced_partials(&state.active(), &state.x, model);
    let cond = cond3(&red_x);
    if cond > SINGULAR_COND {
        return Err(Error::SingularConfiguration {
            what: "reduced-constraint Jacobian (parallel singularity)",
            cond,
        });
    }
    let j_x_qa = -red_x.lu().solve(&red_qa).ok_or(Error::SingularConfiguration {
        what: "reduced-constraint Jacobian (parallel singularity)",
        cond: f64::INFINITY,
    })?;
    Ok(JacobianSet {
        j_q_x,
        j_x_qa,
        contact: None,
    })
}

fn solve_block_diag(a: &Matrix9, b: &Matrix9x3) -> Matrix9x3 {
    let mut out = Matrix9x3::zeros();
    for i in 0..N_CHAINS {
        let blk: Matrix3<f64> = a.fixed_view::<3, 3>(3 * i, 3 * i).into_owned();
        let rhs: Matrix3<f64> = b.fixed_view::<3, 3>(3 * i, 0).into_owned();
        let sol = blk.lu().solve(&rhs).unwrap_or_else(|| Matrix3::from_element(f64::NAN));
        out.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&sol);
    }
    out
}

/// World position of a contact location at configuration `(q, x)`.
pub fn contact_point(q: &Joints, x: &Pose, body: BodyLabel, location: ContactLocation, model: &RobotModel) -> Vec2 {
    match (body.chain_link(), location) {
        (Some((i, link)), ContactLocation::Abscissa(l)) => {
            let p = chain_points(q, model, i);
            if link == 1 {
                p.active + (p.passive - p.active) * l
            } else {
                p.passive + (p.coupling - p.passive) * l
            }
        }
        (None, ContactLocation::PlatformPoint(c)) => Vec2::new(x[0], x[1]) + rot(x[2]) * c,
        _ => panic!("contact location does not match body {body:?}"),
    }
}

/// Serial-chain Jacobian `d x_C / d q` of a contact location.
///
/// Platform points are reached through chain 0's serial kinematics using the
/// rotation closure `phi = q_a + q_p + q_c`.
pub fn contact_dq(q: &Joints, body: BodyLabel, location: ContactLocation, model: &RobotModel) -> Matrix2x9 {
    let mut j = Matrix2x9::zeros();
    match (body.chain_link(), location) {
        (Some((i, link)), ContactLocation::Abscissa(l)) => {
            let c = &model.chains[i];
            let (t1, t2) = angles(q, i);
            if link == 1 {
                j.set_column(3 * i, &(perp(&unit(t1)) * (l * c.link1.length)));
            } else {
                let d2 = perp(&unit(t2)) * (l * c.link2.length);
                j.set_column(3 * i, &(perp(&unit(t1)) * c.link1.length + d2));
                j.set_column(3 * i + 1, &d2);
            }
        }
        (None, ContactLocation::PlatformPoint(p)) => {
            let c = &model.chains[0];
            let (t1, t2) = angles(q, 0);
            let phi = t2 + q[2];
            let off = perp(&(rot(phi) * (p - model.attach(0))));
            let d1 = perp(&unit(t1)) * c.link1.length;
            let d2 = perp(&unit(t2)) * c.link2.length;
            j.set_column(0, &(d1 + d2 + off));
            j.set_column(1, &(d2 + off));
            j.set_column(2, &off);
        }
        _ => panic!("contact location does not match body {body:?}"),
    }
    j
}

/// Jacobians of a contact point, factored through the closed-chain Jacobians.
pub fn contact_jacobians(state: &KinState, contact: &ContactSpec, model: &RobotModel) -> Result<JacobianSet> {
    let mut set = jacobians(state, model)?;
    set.contact = Some(contact_jacobians_with(&set, state, contact.body, contact.location, model));
    Ok(set)
}

/// Contact rows given already-computed closed-chain Jacobians.
pub fn contact_jacobians_with(
    base: &JacobianSet,
    state: &KinState,
    body: BodyLabel,
    location: ContactLocation,
    model: &RobotModel,
) -> ContactJacobians {
    let j_xc_q = contact_dq(&state.q, body, location, model);
    let j_xc_x = j_xc_q * base.j_q_x;
    let j_xc_qa = j_xc_x * base.j_x_qa;
    ContactJacobians {
        j_xc_q,
        j_xc_x,
        j_xc_qa,
    }
}

/// Rigid-body point map `[I, (R c)^perp]` for a platform-frame point.
pub fn platform_point_map(x: &Pose, point: &Vec2) -> Matrix2x3<f64> {
    let lever = perp(&(rot(x[2]) * point));
    Matrix2x3::new(1.0, 0.0, lever.x, 0.0, 1.0, lever.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_model;

    fn home() -> (RobotModel, KinState) {
        let m = default_model();
        let s = KinState::at_pose(Pose::new(0.01, -0.02, 0.1), &m, m.elbows()).unwrap();
        (m, s)
    }

    #[test]
    fn ik_is_consistent() {
        let (m, s) = home();
        assert!(loop_residual(&s.q, &s.x, &m).amax() < 1e-12);
        assert!(constraints_full(&s.q, &s.x, &m).amax() < EPS_LOOP);
    }

    #[test]
    fn other_branch_is_also_consistent() {
        let m = default_model();
        let x = Pose::new(0.0, 0.0, 0.0);
        let a = inverse_kinematics(&x, &m, [1, 1, 1]).unwrap();
        let b = inverse_kinematics(&x, &m, [-1, -1, -1]).unwrap();
        assert!((a - b).amax() > 0.1);
        assert!(loop_residual(&b, &x, &m).amax() < 1e-12);
    }

    #[test]
    fn unreachable_pose_names_the_chain() {
        let m = default_model();
        // Chain 0 base sits at (0, 1); pulling the platform far down stretches it.
        let err = inverse_kinematics(&Pose::new(0.0, -1.0, 0.0), &m, [1, 1, 1]).unwrap_err();
        assert!(matches!(err, Error::UnreachablePose { chain: 0 }), "{err}");
    }

    #[test]
    fn first_order_residual_growth() {
        let (m, s) = home();
        let mut q = s.q;
        let h = 1e-3;
        q[0] += h;
        let r = constraints_full(&q, &s.x, &m);
        let c = &m.chains[0];
        let (t1, t2) = (s.q[0], s.q[0] + s.q[1]);
        let d = (perp(&unit(t1)) * c.link1.length + perp(&unit(t2)) * c.link2.length) * h;
        assert!((r.fixed_rows::<2>(0) - d).norm() < 0.5 * (c.link1.length + c.link2.length) * h * h);
        assert!(r.fixed_rows::<4>(2).amax() < 1e-15);
    }

    #[test]
    fn fk_recovers_pose_from_perturbed_guess() {
        let (m, s) = home();
        let guess = s.x + Pose::new(1e-3, 1e-3, 0.01);
        let x = forward_kinematics(&s.active(), &guess, &m).unwrap();
        assert!((x - s.x).amax() < 1e-9);
    }

    #[test]
    fn fk_fixed_point_takes_at_most_two_iterations() {
        let (m, s) = home();
        let r = forward_kinematics_report(&s.active(), &s.x, &m).unwrap();
        assert!(r.iterations <= 2, "{}", r.iterations);
    }

    #[test]
    fn fk_far_guess_is_flagged_or_lands_on_a_valid_mode() {
        let (m, s) = home();
        let guess = Pose::new(0.3, -0.3, 2.5);
        match forward_kinematics(&s.active(), &guess, &m) {
            Ok(x) => {
                let res = reduced_constraints(&s.active(), &x, &m);
                assert!(res.amax() < 1e-10);
            }
            Err(e) => assert!(matches!(
                e,
                Error::NoConvergence { .. } | Error::SingularConfiguration { .. }
            )),
        }
    }

    #[test]
    fn complete_joints_matches_ik() {
        let (m, s) = home();
        let q = complete_joints(&s.active(), &s.x, &m);
        assert!((q - s.q).amax() < 1e-12);
    }

    #[test]
    fn chain_points_are_rigid() {
        let (m, s) = home();
        for i in 0..3 {
            let p = chain_points(&s.q, &m, i);
            assert_eq!(p.active, m.base(i));
            assert!(((p.passive - p.active).norm() - 0.6).abs() < 1e-14);
            assert!(((p.coupling - p.passive).norm() - 0.6).abs() < 1e-14);
            assert!((p.coupling - platform_coupling(&s.x, &m, i)).norm() < EPS_LOOP);
        }
    }

    #[test]
    fn active_rows_invert_j_x_qa() {
        let (m, s) = home();
        let j = jacobians(&s, &m).unwrap();
        let id = j.j_x_qa * j.j_qa_x();
        assert!((id - Matrix3::identity()).amax() < 1e-10);
    }

    #[test]
    fn radial_forearms_are_parallel_singular() {
        // cos(phi) = 0.8 puts every passive joint on the ray through its coupling
        // joint, so all forearm lines meet at the platform origin.
        let m = default_model();
        let x = Pose::new(0.0, 0.0, 0.8f64.acos());
        let mut hit = false;
        for branch in [[1, 1, 1], [-1, -1, -1]] {
            let s = KinState::at_pose(x, &m, branch).unwrap();
            let p = chain_points(&s.q, &m, 0);
            if crate::planar::cross(&p.passive, &p.coupling).abs() < 1e-12 {
                let err = jacobians(&s, &m).unwrap_err();
                assert!(matches!(err, Error::SingularConfiguration { .. }), "{err}");
                hit = true;
            }
        }
        assert!(hit);
    }

    #[test]
    fn base_contact_has_zero_actuator_rows() {
        let (m, s) = home();
        let c = ContactSpec::link(BodyLabel::from_chain_link(1, 1), 0.0, Vec2::new(1.0, 0.0), 10.0).unwrap();
        let j = contact_jacobians(&s, &c, &m).unwrap().contact.unwrap();
        assert_eq!(j.j_xc_qa.amax(), 0.0);
    }

    #[test]
    fn coupling_contact_moves_with_platform() {
        let m = default_model();
        let s = KinState::with_velocity(Pose::new(0.02, 0.01, -0.1), Pose::new(0.1, -0.2, 0.7), &m, m.elbows()).unwrap();
        for i in 0..3 {
            let c = ContactSpec::link(BodyLabel::from_chain_link(i, 2), 1.0, Vec2::new(0.0, 1.0), 1.0).unwrap();
            let j = contact_jacobians(&s, &c, &m).unwrap().contact.unwrap();
            let v_chain = j.j_xc_x * s.dx;
            let v_rigid = platform_point_map(&s.x, &m.attach(i)) * s.dx;
            assert!((v_chain - v_rigid).norm() < 1e-10 * v_rigid.norm());
        }
    }

    #[test]
    fn platform_contact_matches_rigid_map() {
        let (m, s) = home();
        let p = Vec2::new(0.05, -0.075);
        let c = ContactSpec::platform(p, Vec2::new(0.0, 1.0), 1.0).unwrap();
        let j = contact_jacobians(&s, &c, &m).unwrap().contact.unwrap();
        assert!((j.j_xc_x - platform_point_map(&s.x, &p)).amax() < 1e-12);
    }
}
