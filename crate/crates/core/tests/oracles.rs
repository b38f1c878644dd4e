//! Closed-form and finite-difference oracles, independent of the library's own derivations.

use contactiso::dynamics::{j_q_x_dot, project_contact};
use contactiso::experiments::normal_link_contact;
use contactiso::isolation::{Particle, TorqueModel};
use contactiso::kinematics::{complete_joints, contact_point, ContactLocation};
use contactiso::observer::observer_step_with;
use contactiso::{
    default_model, dyn_terms, forward_kinematics, jacobians, line_of_action, BodyLabel, ContactSpec, KinState,
    ObserverState, Pose, Vec2, Wrench,
};
use nalgebra::{Matrix2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn min_lever_solves_the_moment_and_orthogonality_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let f = Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let m = rng.random_range(-10.0..10.0);
        // r x f = m and r . f = 0 as a 2x2 system.
        let a = Matrix2::new(f.y, -f.x, f.x, f.y);
        let r = a.lu().solve(&Vec2::new(m, 0.0)).unwrap();
        let loa = line_of_action(&Wrench::platform(Vector3::new(f.x, f.y, m))).unwrap();
        assert!((loa.lever - r).norm() < 1e-12 * (1.0 + r.norm()));
    }
}

#[test]
fn actuator_torques_equal_virtual_work_of_the_contact_force() {
    let m = default_model();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    for k in 0..60 {
        let x = Pose::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.2..0.2));
        let s = KinState::at_pose(x, &m, m.elbows()).unwrap();
        let body = BodyLabel::ALL[k % 6];
        let dir = contactiso::planar::unit(rng.random_range(-3.0..3.0));
        let c = ContactSpec::link(body, rng.random_range(0.0..1.0), dir, rng.random_range(-40.0..40.0)).unwrap();
        let tau = project_contact(&s, &c, &m).unwrap().tau_a;
        let qa = s.active();
        for j in 0..3 {
            let mut e = Vector3::zeros();
            e[j] = h;
            let at = |qa: Vector3<f64>| {
                let xp = forward_kinematics(&qa, &s.x, &m).unwrap();
                contact_point(&complete_joints(&qa, &xp, &m), &xp, c.body, c.location, &m)
            };
            let work = c.force().dot(&((at(qa + e) - at(qa - e)) / (2.0 * h)));
            assert!((tau[j] - work).abs() < 1e-6 * (1.0 + tau.norm()), "{body} drive {j}: {} vs {work}", tau[j]);
        }
    }
}

#[test]
fn torque_model_matches_kinetostatic_projection() {
    let m = default_model();
    let x = Pose::new(0.04, 0.08, -0.1);
    let s = KinState::at_pose(x, &m, m.elbows()).unwrap();
    for chain in 0..3 {
        let tm = TorqueModel::new(&s, chain, &m).unwrap();
        for (l, f) in [(0.0, 10.0), (0.3, -25.0), (0.77, 40.0), (1.0, 5.0)] {
            let c = normal_link_contact(&x, chain, l, f, &m).unwrap();
            let want = project_contact(&s, &c, &m).unwrap().tau_a;
            let got = tm.predict(&Particle { l, f });
            assert!((got - want).norm() < 1e-9 * (1.0 + want.norm()), "chain {chain} l {l}");
        }
    }
}

#[test]
fn jacobian_rate_matches_central_difference_along_the_motion() {
    let m = default_model();
    let h = 1e-6;
    for dx in [Pose::new(0.2, -0.1, 0.5), Pose::new(-0.3, 0.05, -1.0)] {
        let s = KinState::with_velocity(Pose::new(0.03, -0.02, 0.1), dx, &m, m.elbows()).unwrap();
        let jac = jacobians(&s, &m).unwrap();
        let at = |sign: f64| {
            let st = KinState::at_pose(s.x + dx * (sign * h), &m, m.elbows()).unwrap();
            jacobians(&st, &m).unwrap().j_q_x
        };
        let fd = (at(1.0) - at(-1.0)) / (2.0 * h);
        let an = j_q_x_dot(&s, &jac, &m);
        assert!((an - fd).norm() < 1e-6 * (1.0 + an.norm()), "{}", (an - fd).norm());
    }
}

#[test]
fn static_observer_follows_the_discrete_first_order_law() {
    let m = default_model();
    let s = KinState::at_pose(Pose::new(0.0, 0.05, 0.0), &m, m.elbows()).unwrap();
    let terms = dyn_terms(&s, &m).unwrap();
    let f_ext = Vector3::new(12.0, -7.0, 1.5);
    // Drives hold the load, so momentum stays zero.
    let f_m = -f_ext;
    let gain = Vector3::from(m.observer_gain);
    let dt = 1e-3;
    let mut obs = ObserverState::start_with(&s, &f_m, &terms, gain);
    for k in 1..=200 {
        let (next, out) = observer_step_with(&obs, &s, &f_m, dt, &terms);
        obs = next;
        for i in 0..3 {
            let rho = (1.0 - gain[i] * dt / 2.0) / (1.0 + gain[i] * dt / 2.0);
            let want = f_ext[i] * (1.0 - rho.powi(k));
            assert!((out.f_hat[i] - want).abs() < 1e-10, "step {k}");
        }
    }
}

#[test]
fn link_two_line_of_action_meets_the_coupling_joint() {
    let m = default_model();
    let s = KinState::at_pose(Pose::new(-0.05, 0.02, 0.15), &m, m.elbows()).unwrap();
    for chain in 0..3 {
        let c = ContactSpec::link(
            BodyLabel::from_chain_link(chain, 2),
            0.4,
            contactiso::planar::unit(0.7 + chain as f64),
            25.0,
        )
        .unwrap();
        let w = project_contact(&s, &c, &m).unwrap().f_mp;
        let loa = line_of_action(&w).unwrap();
        let cj = contact_point(&s.q, &s.x, c.body, ContactLocation::Abscissa(1.0), &m) - Vec2::new(s.x[0], s.x[1]);
        let dist = contactiso::planar::cross(&(cj - loa.lever), &loa.dir).abs();
        assert!(dist < 1e-9, "chain {chain}: {dist}");
    }
}
