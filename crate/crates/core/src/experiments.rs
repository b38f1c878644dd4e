//! Scenario generation, labelled datasets and the end-to-end studies.
//!
//! Every scenario draws from its own ChaCha stream keyed by
//! `(seed, id, attempt)`, so a single dataset row can be regenerated without
//! the rest of the run and parallel generation is order independent.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::fnn::{fnn_train, Arch, FnnModel, TrainConfig, TrainReport};
use crate::classifiers::{dt_classify, evaluate, BodyLabel, Classifier, ConfusionMatrix, DtParams};
use crate::dynamics::{dyn_terms, project_contact, simulate_until, ExternalLoad, ImpedanceHold, SimSpec, Wrench};
use crate::error::{Error, Result};
use crate::features::{compute_features, line_of_action, FeatureVector, FEATURE_CSV_HEADER};
use crate::isolation::{pf_histogram, pf_init, pf_step, platform_isolate, PfConfig, HIST_BINS};
use crate::kinematics::{chain_points, jacobians, reduced_partials, res_dq, ContactLocation, ContactSpec, KinState, Pose};
use crate::model::{RobotModel, N_CHAINS};
use crate::observer::{detect, observer_step, ObserverState};
use crate::planar::{perp, rot, unit, Vec2};
use crate::report::{csv_row, fmt_f64};

/// Per-scenario random stream. Stream 0 draws the scenario, stream 1 the sensor noise.
pub fn scenario_rng(seed: u64, id: u64, attempt: u32, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&id.to_le_bytes());
    key[16..20].copy_from_slice(&attempt.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Axis-aligned box of desired platform poses (m, m, rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub phi: [f64; 2],
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            x: [-0.16, 0.16],
            y: [-0.16, 0.16],
            phi: [-0.3, 0.3],
        }
    }
}

impl Workspace {
    pub fn sample(&self, rng: &mut impl Rng) -> Pose {
        Pose::new(
            rng.random_range(self.x[0]..=self.x[1]),
            rng.random_range(self.y[0]..=self.y[1]),
            rng.random_range(self.phi[0]..=self.phi[1]),
        )
    }

    /// `n` equal slabs along x.
    pub fn split_x(&self, n: usize) -> Vec<Workspace> {
        let w = (self.x[1] - self.x[0]) / n as f64;
        (0..n)
            .map(|k| Workspace {
                x: [self.x[0] + k as f64 * w, self.x[0] + (k + 1) as f64 * w],
                ..*self
            })
            .collect()
    }
}

/// Rejection thresholds keeping sampled poses away from both singularity types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularityFilter {
    /// Smallest singular value of each chain's block of `Res_q`.
    pub min_sv_res_q: f64,
    /// Smallest singular value of `J_x_qa`.
    pub min_sv_j_x_qa: f64,
    /// Largest condition number of the reduced-constraint Jacobian.
    pub max_cond_reduced: f64,
}

impl Default for SingularityFilter {
    fn default() -> Self {
        SingularityFilter {
            min_sv_res_q: 0.05,
            min_sv_j_x_qa: 0.05,
            max_cond_reduced: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityMargins {
    pub sv_res_q: f64,
    pub sv_j_x_qa: f64,
    pub cond_reduced: f64,
}

pub fn singularity_margins(state: &KinState, model: &RobotModel) -> Result<SingularityMargins> {
    let rq = res_dq(&state.q, model);
    let sv_res_q = (0..N_CHAINS)
        .map(|i| {
            let b: Matrix3<f64> = rq.fixed_view::<3, 3>(3 * i, 3 * i).into_owned();
            b.singular_values().min()
        })
        .fold(f64::INFINITY, f64::min);
    let (red_x, _) = reduced_partials(&state.active(), &state.x, model);
    let sv = red_x.singular_values();
    let cond_reduced = sv.max() / sv.min();
    let sv_j_x_qa = jacobians(state, model)?.j_x_qa.singular_values().min();
    Ok(SingularityMargins {
        sv_res_q,
        sv_j_x_qa,
        cond_reduced,
    })
}

impl SingularityFilter {
    pub fn accepts(&self, state: &KinState, model: &RobotModel) -> bool {
        match singularity_margins(state, model) {
            Ok(m) => {
                m.sv_res_q > self.min_sv_res_q
                    && m.sv_j_x_qa > self.min_sv_j_x_qa
                    && m.cond_reduced < self.max_cond_reduced
            }
            Err(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub workspace: Workspace,
    pub filter: SingularityFilter,
    pub f_max: f64,
    /// Contacts with a smaller force magnitude are not generated.
    pub f_min: f64,
    pub max_pose_tries: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            workspace: Workspace::default(),
            filter: SingularityFilter::default(),
            f_max: 140.0,
            f_min: 5.0,
            max_pose_tries: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub id: u64,
    pub attempt: u32,
    pub seed: u64,
    pub x_d: Pose,
    pub contact: ContactSpec,
}

/// Point uniformly distributed on the hull perimeter and the edge's outward normal.
fn sample_perimeter(hull: &[Vec2], rng: &mut impl Rng) -> (Vec2, Vec2) {
    let n = hull.len();
    let lens: Vec<f64> = (0..n).map(|k| (hull[(k + 1) % n] - hull[k]).norm()).collect();
    let mut s = rng.random_range(0.0..lens.iter().sum::<f64>());
    for k in 0..n {
        if s <= lens[k] || k == n - 1 {
            let e = hull[(k + 1) % n] - hull[k];
            let t = (s / lens[k]).clamp(0.0, 1.0);
            return (hull[k] + e * t, Vec2::new(e.y, -e.x) / lens[k]);
        }
        s -= lens[k];
    }
    unreachable!()
}

impl Scenario {
    /// Draws the scenario for `(seed, id, attempt)` with a prescribed contact body.
    /// Returns the scenario and the number of pose samples consumed.
    pub fn draw(
        seed: u64,
        id: u64,
        attempt: u32,
        body: BodyLabel,
        model: &RobotModel,
        cfg: &ScenarioConfig,
    ) -> Result<(Scenario, usize)> {
        let mut rng = scenario_rng(seed, id, attempt, 0);
        let mut tries = 0;
        let x_d = loop {
            if tries >= cfg.max_pose_tries {
                return Err(Error::WorkspaceTooTight { accepted: 0, tried: tries });
            }
            tries += 1;
            let x = cfg.workspace.sample(&mut rng);
            if let Ok(s) = KinState::at_pose(x, model, model.elbows()) {
                if cfg.filter.accepts(&s, model) {
                    break x;
                }
            }
        };
        let mag = loop {
            let m = rng.random_range(-cfg.f_max..=cfg.f_max);
            if m.abs() >= cfg.f_min {
                break m;
            }
        };
        let mut dir = unit(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let contact = match body.chain_link() {
            Some(_) => ContactSpec::link(body, rng.random_range(0.0..=1.0), dir, mag)?,
            None => {
                let (point, outward) = sample_perimeter(&model.hull(), &mut rng);
                if (dir * mag).dot(&(rot(x_d[2]) * outward)) > 0.0 {
                    dir = -dir;
                }
                ContactSpec::platform(point, dir, mag)?
            }
        };
        Ok((
            Scenario {
                id,
                attempt,
                seed,
                x_d,
                contact,
            },
            tries,
        ))
    }
}

/// Balanced scenario list: slot `k` gets class `k mod 7`.
pub fn sample_scenarios(n: usize, model: &RobotModel, cfg: &ScenarioConfig, seed: u64) -> Result<Vec<Scenario>> {
    if n < BodyLabel::ALL.len() {
        return Err(Error::InvalidArgument(format!("need at least 7 scenarios, got {n}")));
    }
    let drawn: Vec<Result<(Scenario, usize)>> = (0..n as u64)
        .into_par_iter()
        .map(|id| Scenario::draw(seed, id, 0, class_of(id), model, cfg))
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut tried = 0;
    for d in drawn {
        let (s, t) = d.map_err(|e| match e {
            Error::WorkspaceTooTight { tried: t, .. } => Error::WorkspaceTooTight {
                accepted: out.len(),
                tried: tried + t,
            },
            e => e,
        })?;
        tried += t;
        out.push(s);
    }
    if out.len() * 100 < tried {
        return Err(Error::WorkspaceTooTight {
            accepted: out.len(),
            tried,
        });
    }
    Ok(out)
}

pub fn class_of(id: u64) -> BodyLabel {
    BodyLabel::ALL[(id % BodyLabel::ALL.len() as u64) as usize]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: u64,
    pub attempt: u32,
    pub seed: u64,
    pub label: BodyLabel,
    pub features: FeatureVector,
    pub contact: ContactSpec,
    pub x_d: Pose,
    /// Pose at which the features were taken.
    pub x: Pose,
    /// Detection time for observer-based samples.
    pub t_detect: Option<f64>,
}

/// Excitation threshold used when features are stored; the classifier recounts with its own.
pub const FEATURE_EPS_TAU: f64 = 2.5;

/// Exact features at the statically deflected pose `x_d + K^-1 F_ext`.
pub fn kinetostatic_label(s: &Scenario, model: &RobotModel) -> Result<LabeledSample> {
    let branch = model.elbows();
    let at_d = KinState::at_pose(s.x_d, model, branch)?;
    let f0 = project_contact(&at_d, &s.contact, model)?.f_mp.to_vector();
    let x = s.x_d + f0.component_div(&Vector3::from(model.stiffness));
    let state = KinState::at_pose(x, model, branch)?;
    let p = project_contact(&state, &s.contact, model)?;
    let features = compute_features(&p.f_mp, &p.tau_a, &state, model, FEATURE_EPS_TAU)?;
    Ok(LabeledSample {
        id: s.id,
        attempt: s.attempt,
        seed: s.seed,
        label: s.contact.body,
        features,
        contact: s.contact,
        x_d: s.x_d,
        x,
        t_detect: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Velocity noise standard deviation (m/s, m/s, rad/s).
    pub sigma_dx: [f64; 3],
    /// Motor wrench noise standard deviation (N, N, N*m).
    pub sigma_fm: [f64; 3],
    /// Relative inertia error of the observer model.
    pub mass_mismatch: f64,
    /// Relative friction error of the observer model.
    pub friction_mismatch: f64,
    /// Time between detection and the feature snapshot (s).
    pub dwell: f64,
    /// Contact force rise time (s).
    pub ramp: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_dx: [0.0; 3],
            sigma_fm: [0.0; 3],
            mass_mismatch: 0.0,
            friction_mismatch: 0.0,
            dwell: 0.02,
            ramp: 0.01,
            horizon: 0.5,
            dt: 1e-3,
        }
    }
}

impl NoiseConfig {
    /// Sensor noise and model mismatch used for the noisy classifier studies.
    pub fn noisy() -> Self {
        NoiseConfig {
            sigma_dx: [0.005, 0.005, 0.02],
            sigma_fm: [2.0, 2.0, 0.2],
            mass_mismatch: 0.1,
            friction_mismatch: 0.3,
            ..Self::default()
        }
    }

    pub fn model_hat(&self, model: &RobotModel) -> RobotModel {
        if self.mass_mismatch == 0.0 && self.friction_mismatch == 0.0 {
            model.clone()
        } else {
            model.perturbed(1.0 + self.mass_mismatch, 1.0 + self.friction_mismatch)
        }
    }
}

fn gaussian(sigma: &[f64; 3], rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        if sigma[i] > 0.0 {
            Normal::new(0.0, sigma[i]).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    })
}

/// Observer output at one sample of a monitored rollout.
#[derive(Debug, Clone)]
pub struct Monitored {
    pub t: f64,
    /// State as measured (noisy velocity).
    pub state: KinState,
    pub f_hat: Vector3<f64>,
    pub tau_hat: Vector3<f64>,
    pub detected: bool,
    pub true_ext: ExternalLoad,
}

/// Impedance-held platform at `x_d` under a ramped contact, monitored by the
/// observer running on `model_hat` with noisy velocity and motor wrench.
/// `visit` sees every observer sample and returns true to stop the rollout.
pub fn monitored_rollout<V>(
    x_d: Pose,
    contact: &ContactSpec,
    model: &RobotModel,
    noise: &NoiseConfig,
    rng: &mut impl Rng,
    mut visit: V,
) -> Result<()>
where
    V: FnMut(&Monitored) -> bool,
{
    let model_hat = noise.model_hat(model);
    let branch = model.elbows();
    let ctrl = ImpedanceHold::new(x_d, model, branch)?;
    let initial = KinState::at_pose(x_d, model, branch)?;
    let thresholds = Vector3::from(model.detection_thresholds);
    let steps = (noise.horizon / noise.dt).round() as usize;
    let spec = SimSpec::new(noise.dt, steps)?;
    let ramp = noise.ramp;
    let mut obs: Option<ObserverState> = None;
    let mut failure: Option<Error> = None;
    let traj = simulate_until(
        &initial,
        |_, s, terms| ctrl.wrench(s, terms),
        |t, s, jac| {
            let scale = if ramp > 0.0 { (t / ramp).min(1.0) } else { 1.0 };
            ExternalLoad::contact(jac, s, contact, scale, model)
        },
        |smp| {
            let mut meas = smp.state.clone();
            meas.dx += gaussian(&noise.sigma_dx, rng);
            let f_m = smp.f_m + gaussian(&noise.sigma_fm, rng);
            let step = match &obs {
                None => ObserverState::start(&meas, &f_m, &model_hat).map(|o| {
                    let tau = Vector3::zeros();
                    (o, Vector3::zeros(), tau)
                }),
                Some(o) => observer_step(o, &meas, &f_m, noise.dt, &model_hat).map(|(o, out)| (o, out.f_hat, out.tau_hat)),
            };
            match step {
                Ok((o, f_hat, tau_hat)) => {
                    obs = Some(o);
                    visit(&Monitored {
                        t: smp.t,
                        state: meas,
                        f_hat,
                        tau_hat,
                        detected: detect(&f_hat, &thresholds),
                        true_ext: smp.ext,
                    })
                }
                Err(e) => {
                    failure = Some(e);
                    true
                }
            }
        },
        model,
        spec,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(msg) = traj.truncated {
        return Err(Error::InvalidArgument(format!("rollout stopped early: {msg}")));
    }
    Ok(())
}

/// Features from the observer estimate `dwell` seconds after detection.
pub fn observer_label(s: &Scenario, model: &RobotModel, noise: &NoiseConfig, rng: &mut impl Rng) -> Result<LabeledSample> {
    let mut t_det: Option<f64> = None;
    let mut snap: Option<Monitored> = None;
    monitored_rollout(s.x_d, &s.contact, model, noise, rng, |m| {
        if t_det.is_none() && m.detected {
            t_det = Some(m.t);
        }
        match t_det {
            Some(td) if m.t >= td + noise.dwell - 1e-9 => {
                snap = Some(m.clone());
                true
            }
            _ => false,
        }
    })?;
    let m = snap.ok_or(Error::DetectionNeverTriggers { horizon_s: noise.horizon })?;
    let features = compute_features(&Wrench::platform(m.f_hat), &m.tau_hat, &m.state, model, FEATURE_EPS_TAU)?;
    Ok(LabeledSample {
        id: s.id,
        attempt: s.attempt,
        seed: s.seed,
        label: s.contact.body,
        features,
        contact: s.contact,
        x_d: s.x_d,
        x: m.state.x,
        t_detect: t_det,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LabelMode {
    Ideal,
    Observer(NoiseConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n: usize,
    pub seed: u64,
    pub mode: LabelMode,
    pub scenario: ScenarioConfig,
    /// Redraws per slot before giving up on it.
    pub max_attempts: u32,
}

impl DatasetConfig {
    pub fn ideal(n: usize, seed: u64) -> Self {
        DatasetConfig {
            n,
            seed,
            mode: LabelMode::Ideal,
            scenario: ScenarioConfig::default(),
            max_attempts: 50,
        }
    }
}

/// Counts of scenario draws that were replaced, by cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DropCounts {
    pub unreachable: usize,
    pub singular: usize,
    pub degenerate_force: usize,
    pub no_detection: usize,
    pub other: usize,
}

impl DropCounts {
    fn record(&mut self, e: &Error) {
        match e {
            Error::UnreachablePose { .. } => self.unreachable += 1,
            Error::SingularConfiguration { .. } => self.singular += 1,
            Error::DegenerateForce { .. } => self.degenerate_force += 1,
            Error::DetectionNeverTriggers { .. } => self.no_detection += 1,
            _ => self.other += 1,
        }
    }

    fn merge(&mut self, o: &DropCounts) {
        self.unreachable += o.unreachable;
        self.singular += o.singular;
        self.degenerate_force += o.degenerate_force;
        self.no_detection += o.no_detection;
        self.other += o.other;
    }

    pub fn total(&self) -> usize {
        self.unreachable + self.singular + self.degenerate_force + self.no_detection + self.other
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub drops: DropCounts,
}

impl Dataset {
    pub fn labeled(&self) -> impl Iterator<Item = (&FeatureVector, BodyLabel)> {
        self.samples.iter().map(|s| (&s.features, s.label))
    }

    pub fn inputs(&self) -> (Vec<[f64; crate::features::N_INPUTS]>, Vec<BodyLabel>) {
        (
            self.samples.iter().map(|s| s.features.inputs()).collect(),
            self.samples.iter().map(|s| s.label).collect(),
        )
    }

    pub fn class_counts(&self) -> [usize; 7] {
        let mut c = [0; 7];
        for s in &self.samples {
            c[s.label.index()] += 1;
        }
        c
    }
}

/// Labels one slot, redrawing the scenario after every failure.
pub fn label_slot(id: u64, model: &RobotModel, cfg: &DatasetConfig) -> Result<(LabeledSample, DropCounts)> {
    let mut drops = DropCounts::default();
    for attempt in 0..cfg.max_attempts {
        let (s, _) = Scenario::draw(cfg.seed, id, attempt, class_of(id), model, &cfg.scenario)?;
        let r = match &cfg.mode {
            LabelMode::Ideal => kinetostatic_label(&s, model),
            LabelMode::Observer(noise) => observer_label(&s, model, noise, &mut scenario_rng(cfg.seed, id, attempt, 1)),
        };
        match r {
            Ok(l) => return Ok((l, drops)),
            Err(e) => drops.record(&e),
        }
    }
    Err(Error::InvalidArgument(format!(
        "slot {id}: no usable scenario in {} attempts ({drops:?})",
        cfg.max_attempts
    )))
}

pub fn generate_dataset(cfg: &DatasetConfig, model: &RobotModel) -> Result<Dataset> {
    if cfg.n < BodyLabel::ALL.len() {
        return Err(Error::InvalidArgument(format!("need at least 7 samples, got {}", cfg.n)));
    }
    let rows: Vec<Result<(LabeledSample, DropCounts)>> =
        (0..cfg.n as u64).into_par_iter().map(|id| label_slot(id, model, cfg)).collect();
    let mut samples = Vec::with_capacity(cfg.n);
    let mut drops = DropCounts::default();
    for r in rows {
        let (s, d) = r?;
        drops.merge(&d);
        samples.push(s);
    }
    Ok(Dataset { samples, drops })
}

pub const DATASET_CSV_PREFIX: &str = "id,attempt,seed,label";
pub const DATASET_CSV_SUFFIX: &str = "loc,cx,cy,dir_x,dir_y,mag,xd_x,xd_y,xd_phi,x,y,phi,t_detect";

pub fn dataset_csv_header() -> String {
    format!("{DATASET_CSV_PREFIX},{FEATURE_CSV_HEADER},{DATASET_CSV_SUFFIX}")
}

pub fn dataset_to_csv(samples: &[LabeledSample]) -> String {
    let mut out = dataset_csv_header();
    out.push('\n');
    for s in samples {
        let (loc, c) = match s.contact.location {
            ContactLocation::Abscissa(l) => ("L", Vec2::new(l, 0.0)),
            ContactLocation::PlatformPoint(p) => ("P", p),
        };
        out.push_str(&format!("{},{},{},{},", s.id, s.attempt, s.seed, s.label));
        out.push_str(csv_row(&s.features.csv_fields()).trim_end());
        out.push_str(&format!(",{loc},"));
        let mut tail = vec![c.x, c.y, s.contact.direction.x, s.contact.direction.y, s.contact.magnitude];
        tail.extend(s.x_d.iter());
        tail.extend(s.x.iter());
        out.push_str(csv_row(&tail).trim_end());
        out.push(',');
        if let Some(t) = s.t_detect {
            out.push_str(&fmt_f64(t));
        }
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<Vec<LabeledSample>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty dataset".into()))?;
    if header.trim() != dataset_csv_header() {
        return Err(Error::Parse("unexpected dataset header".into()));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let perr = |m: String| Error::Parse(format!("dataset row {}: {m}", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 + 13 + 13 {
            return Err(perr(format!("{} fields", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| perr(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| perr(format!("{s:?}: {e}")));
        let label: BodyLabel = f[3].parse()?;
        let feats: Vec<f64> = f[4..17].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let tail: Vec<f64> = f[18..29].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let dir = Vec2::new(tail[2], tail[3]);
        let contact = match f[17] {
            "L" => ContactSpec::link(label, tail[0], dir, tail[4])?,
            "P" => ContactSpec::platform(Vec2::new(tail[0], tail[1]), dir, tail[4])?,
            other => return Err(perr(format!("location kind {other:?}"))),
        };
        out.push(LabeledSample {
            id: int(f[0])?,
            attempt: int(f[1])? as u32,
            seed: int(f[2])?,
            label,
            features: FeatureVector::from_csv_fields(&feats)?,
            contact,
            x_d: Pose::new(tail[5], tail[6], tail[7]),
            x: Pose::new(tail[8], tail[9], tail[10]),
            t_detect: if f[29].is_empty() { None } else { Some(num(f[29])?) },
        });
    }
    Ok(out)
}

pub fn run_classification_study<C: Classifier + ?Sized>(samples: &[LabeledSample], classifier: &C) -> ConfusionMatrix {
    evaluate(classifier, samples.iter().map(|s| (&s.features, s.label)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub n_hl: usize,
    pub n_neu: usize,
    pub lambda: f64,
    pub max_epochs: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            n_train: 2100,
            n_test: 1400,
            seed: 1,
            noise: NoiseConfig::noisy(),
            n_hl: 4,
            n_neu: 17,
            lambda: 0.5,
            max_epochs: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub dt: ConfusionMatrix,
    pub fnn: ConfusionMatrix,
    pub train: TrainReport,
    pub model: FnnModel,
    pub train_set: Dataset,
    pub test_set: Dataset,
}

/// Noisy datasets from three x-slabs of the workspace: the network trains on
/// the first slab, both classifiers are scored on the other two.
pub fn compare_fnn_dt(model: &RobotModel, cfg: &CompareConfig) -> Result<CompareReport> {
    let base = ScenarioConfig::default();
    let slabs = base.workspace.split_x(3);
    let make = |ws: Workspace, n: usize, seed: u64| {
        generate_dataset(
            &DatasetConfig {
                n,
                seed,
                mode: LabelMode::Observer(cfg.noise),
                scenario: ScenarioConfig { workspace: ws, ..base },
                max_attempts: 50,
            },
            model,
        )
    };
    let train_set = make(slabs[0], cfg.n_train, cfg.seed)?;
    let mut test_set = make(slabs[1], cfg.n_test / 2, cfg.seed + 1)?;
    let c = make(slabs[2], cfg.n_test - cfg.n_test / 2, cfg.seed + 2)?;
    test_set.samples.extend(c.samples);
    test_set.drops.merge(&c.drops);

    let (xs, ys) = train_set.inputs();
    let tc = TrainConfig {
        lambda: cfg.lambda,
        max_epochs: cfg.max_epochs,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let (fnn, train) = fnn_train(&xs, &ys, &tc, Arch {
        n_hl: cfg.n_hl,
        n_neu: cfg.n_neu,
    })?;
    Ok(CompareReport {
        dt: run_classification_study(&test_set.samples, &DtParams::default()),
        fnn: run_classification_study(&test_set.samples, &fnn),
        train,
        model: fnn,
        train_set,
        test_set,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PfFeed {
    /// Exact static torques at the commanded pose.
    Exact,
    /// Observer estimates from a simulated contact, starting at detection.
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfStudyConfig {
    pub x_d: [f64; 3],
    /// Zero-based chain carrying the contact on its second link.
    pub chain: usize,
    pub abscissa: f64,
    /// Signed force along the link-2 normal (N).
    pub force: f64,
    pub steps: usize,
    pub feed: PfFeed,
    /// Run the filter on this chain instead of the true one.
    pub forced_chain: Option<usize>,
    pub seed: u64,
    pub particles: usize,
    pub sigma_motion: [f64; 2],
    pub sigma_meas: [f64; 3],
    pub f_max: f64,
}

impl Default for PfStudyConfig {
    fn default() -> Self {
        let pf = PfConfig::default();
        PfStudyConfig {
            // Off the home pose: there the link-2 normal at the passive joint
            // is nearly parallel to link 1, so force and abscissa are only
            // observable through their product.
            x_d: [0.0, 0.1, 0.0],
            chain: 0,
            abscissa: 0.5,
            force: 30.0,
            steps: 50,
            feed: PfFeed::Exact,
            forced_chain: None,
            seed: 0,
            particles: pf.particles,
            sigma_motion: pf.sigma_motion,
            sigma_meas: pf.sigma_meas,
            f_max: pf.f_max,
        }
    }
}

impl PfStudyConfig {
    pub fn pf(&self) -> PfConfig {
        PfConfig {
            particles: self.particles,
            sigma_motion: self.sigma_motion,
            sigma_meas: self.sigma_meas,
            f_max: self.f_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfTraceRow {
    pub t: f64,
    pub l: f64,
    pub f: f64,
    pub dl: f64,
    pub df: f64,
    pub ess: f64,
    pub all_weights_zero: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfTrace {
    pub rows: Vec<PfTraceRow>,
    pub histograms: Vec<[f64; HIST_BINS]>,
    pub zero_weight_events: usize,
    pub chain: usize,
    /// Detection time for observer-fed runs.
    pub t_detect: Option<f64>,
}

impl PfTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,l_hat,f_hat,dl,df,ess\n");
        for r in &self.rows {
            s.push_str(&csv_row(&[r.t, r.l, r.f, r.dl, r.df, r.ess]));
        }
        s
    }

    pub fn histograms_csv(&self) -> String {
        let mut s = String::from("step");
        for k in 0..HIST_BINS {
            s.push_str(&format!(",b{k}"));
        }
        s.push('\n');
        for (i, h) in self.histograms.iter().enumerate() {
            s.push_str(&i.to_string());
            s.push(',');
            s.push_str(&csv_row(h));
        }
        s
    }

    /// Whether `|dl| < dl_max` and `|df| < df_max` at step `k` (1-based).
    pub fn within(&self, k: usize, dl_max: f64, df_max: f64) -> bool {
        self.rows
            .get(k.saturating_sub(1))
            .is_some_and(|r| r.dl.abs() < dl_max && r.df.abs() < df_max)
    }
}

/// Contact on the second link of `chain`, orthogonal to it at `x_d`.
pub fn normal_link_contact(x_d: &Pose, chain: usize, abscissa: f64, force: f64, model: &RobotModel) -> Result<ContactSpec> {
    let s = KinState::at_pose(*x_d, model, model.elbows())?;
    let p = chain_points(&s.q, model, chain);
    let n = perp(&(p.coupling - p.passive).normalize());
    ContactSpec::link(BodyLabel::from_chain_link(chain, 2), abscissa, n, force)
}

pub fn run_pf_study(model: &RobotModel, cfg: &PfStudyConfig) -> Result<PfTrace> {
    let x_d = Pose::from(cfg.x_d);
    let contact = normal_link_contact(&x_d, cfg.chain, cfg.abscissa, cfg.force, model)?;
    let chain = cfg.forced_chain.unwrap_or(cfg.chain);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ps = pf_init(chain, &cfg.pf(), &mut rng)?;
    let mut trace = PfTrace {
        rows: Vec::with_capacity(cfg.steps),
        histograms: vec![pf_histogram(&ps)],
        zero_weight_events: 0,
        chain,
        t_detect: None,
    };
    let dt = 1e-3;
    let mut push = |ps: &mut crate::isolation::ParticleSet, t: f64, tau: &Vector3<f64>, st: &KinState, rng: &mut ChaCha8Rng| -> Result<()> {
        let (next, est) = pf_step(ps, tau, st, model, rng)?;
        *ps = next;
        trace.zero_weight_events += est.all_weights_zero as usize;
        trace.rows.push(PfTraceRow {
            t,
            l: est.l,
            f: est.f,
            dl: est.l - cfg.abscissa,
            df: est.f - cfg.force,
            ess: est.ess,
            all_weights_zero: est.all_weights_zero,
        });
        trace.histograms.push(pf_histogram(ps));
        Ok(())
    };
    match cfg.feed {
        PfFeed::Exact => {
            let st = KinState::at_pose(x_d, model, model.elbows())?;
            let tau = project_contact(&st, &contact, model)?.tau_a;
            for k in 1..=cfg.steps {
                push(&mut ps, k as f64 * dt, &tau, &st, &mut rng)?;
            }
        }
        PfFeed::Observer => {
            let noise = NoiseConfig {
                ramp: 0.0,
                horizon: 2.0,
                ..NoiseConfig::default()
            };
            let mut t_det = None;
            let mut err = None;
            let mut taken = 0;
            let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
            monitored_rollout(x_d, &contact, model, &noise, &mut noise_rng, |m| {
                if t_det.is_none() && m.detected {
                    t_det = Some(m.t);
                }
                let Some(td) = t_det else { return false };
                if let Err(e) = push(&mut ps, m.t - td + dt, &m.tau_hat, &m.state, &mut rng) {
                    err = Some(e);
                    return true;
                }
                taken += 1;
                taken >= cfg.steps
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            if t_det.is_none() {
                return Err(Error::DetectionNeverTriggers { horizon_s: noise.horizon });
            }
            trace.t_detect = t_det;
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub n: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub pf_steps: usize,
    pub scenario: ScenarioConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n: 14,
            seed: 0,
            noise: NoiseConfig::default(),
            pf_steps: 150,
            scenario: ScenarioConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRow {
    pub id: u64,
    pub truth: BodyLabel,
    pub predicted: BodyLabel,
    pub t_detect: f64,
    /// Platform contacts: distance of the recovered push point to the true point (m).
    pub point_error: Option<f64>,
    /// Second-link contacts: filter estimate of abscissa and normal force.
    pub pf_estimate: Option<(f64, f64)>,
    pub true_abscissa: Option<f64>,
    pub true_normal_force: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub rows: Vec<PipelineRow>,
    pub drops: DropCounts,
    pub confusion: ConfusionMatrix,
}

impl PipelineReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,truth,predicted,t_detect,point_error,l_hat,f_hat,l_true,f_true,note\n");
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.id,
                r.truth,
                r.predicted,
                fmt_f64(r.t_detect),
                opt(r.point_error),
                opt(r.pf_estimate.map(|p| p.0)),
                opt(r.pf_estimate.map(|p| p.1)),
                opt(r.true_abscissa),
                opt(r.true_normal_force),
                r.note
            ));
        }
        s
    }
}

/// simulate, detect, classify with the decision tree, then isolate: hull
/// clipping for the platform, the particle filter for second links and the
/// chain index alone for first links.
pub fn run_pipeline(model: &RobotModel, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let dt_params = DtParams::default();
    let results: Vec<Result<(Option<PipelineRow>, DropCounts)>> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|id| -> Result<(Option<PipelineRow>, DropCounts)> {
            let mut drops = DropCounts::default();
            for attempt in 0..50u32 {
                let (s, _) = Scenario::draw(cfg.seed, id, attempt, class_of(id), model, &cfg.scenario)?;
                match pipeline_one(&s, model, cfg, &dt_params) {
                    Ok(row) => return Ok((Some(row), drops)),
                    Err(e) => drops.record(&e),
                }
            }
            Ok((None, drops))
        })
        .collect();
    let mut rows = Vec::new();
    let mut drops = DropCounts::default();
    let mut confusion = ConfusionMatrix::default();
    for r in results {
        let (row, d) = r?;
        drops.merge(&d);
        if let Some(row) = row {
            confusion.add(row.truth, row.predicted);
            rows.push(row);
        }
    }
    Ok(PipelineReport { rows, drops, confusion })
}

fn pipeline_one(s: &Scenario, model: &RobotModel, cfg: &PipelineConfig, dt_params: &DtParams) -> Result<PipelineRow> {
    let noise = &cfg.noise;
    let mut rng = scenario_rng(s.seed, s.id, s.attempt, 1);
    let mut t_det: Option<f64> = None;
    let mut predicted: Option<BodyLabel> = None;
    let mut snap: Option<Monitored> = None;
    let mut pf: Option<crate::isolation::ParticleSet> = None;
    let mut pf_rng = scenario_rng(s.seed, s.id, s.attempt, 2);
    let mut pf_est: Option<(f64, f64)> = None;
    let mut pf_steps = 0;
    let mut err: Option<Error> = None;
    let mut last_state: Option<KinState> = None;
    monitored_rollout(s.x_d, &s.contact, model, noise, &mut rng, |m| {
        if t_det.is_none() && m.detected {
            t_det = Some(m.t);
        }
        let Some(td) = t_det else { return false };
        if predicted.is_none() {
            if m.t < td + noise.dwell - 1e-9 {
                return false;
            }
            let fv = match compute_features(&Wrench::platform(m.f_hat), &m.tau_hat, &m.state, model, dt_params.eps_tau) {
                Ok(fv) => fv,
                Err(e) => {
                    err = Some(e);
                    return true;
                }
            };
            let label = dt_classify(&fv, dt_params);
            predicted = Some(label);
            snap = Some(m.clone());
            match label.chain_link() {
                Some((chain, 2)) => match pf_init(chain, &PfConfig::default(), &mut pf_rng) {
                    Ok(p) => pf = Some(p),
                    Err(e) => {
                        err = Some(e);
                        return true;
                    }
                },
                _ => return true,
            }
        }
        if let Some(p) = pf.as_mut() {
            match pf_step(p, &m.tau_hat, &m.state, model, &mut pf_rng) {
                Ok((next, est)) => {
                    *p = next;
                    pf_est = Some((est.l, est.f));
                }
                Err(e) => {
                    err = Some(e);
                    return true;
                }
            }
            pf_steps += 1;
            last_state = Some(m.state.clone());
        }
        pf_steps >= cfg.pf_steps
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let (Some(td), Some(label), Some(snap)) = (t_det, predicted, snap) else {
        return Err(Error::DetectionNeverTriggers { horizon_s: noise.horizon });
    };
    let mut row = PipelineRow {
        id: s.id,
        truth: s.contact.body,
        predicted: label,
        t_detect: td,
        point_error: None,
        pf_estimate: None,
        true_abscissa: None,
        true_normal_force: None,
        note: String::new(),
    };
    match label.chain_link() {
        None => {
            let w = Wrench::platform(snap.f_hat);
            match line_of_action(&w).and_then(|loa| platform_isolate(&loa, &w, &model.hull(), &snap.state.x)) {
                Ok(c) => {
                    if let ContactLocation::PlatformPoint(p) = s.contact.location {
                        row.point_error = Some((c.point - p).norm());
                    }
                }
                Err(e) => row.note = e.to_string(),
            }
        }
        Some((chain, 1)) => row.note = format!("first link of chain {}", chain + 1),
        Some((chain, _)) => {
            row.pf_estimate = pf_est;
            if s.contact.body == label {
                if let (ContactLocation::Abscissa(l), Some(st)) = (s.contact.location, last_state) {
                    row.true_abscissa = Some(l);
                    let t2 = st.q[3 * chain] + st.q[3 * chain + 1];
                    row.true_normal_force = Some(s.contact.force().dot(&perp(&unit(t2))));
                }
            }
        }
    }
    Ok(row)
}

/// Observer step-response rollout: a constant platform wrench applied from
/// `t = 0` to the impedance-held platform, estimate sampled every step.
pub fn observer_step_response(model: &RobotModel, x_d: Pose, wrench: Vector3<f64>, duration: f64) -> Result<Vec<(f64, Vector3<f64>)>> {
    let branch = model.elbows();
    let ctrl = ImpedanceHold::new(x_d, model, branch)?;
    let initial = KinState::at_pose(x_d, model, branch)?;
    let dt = 1e-3;
    let spec = SimSpec::new(dt, (duration / dt).round() as usize)?;
    let traj = crate::dynamics::simulate(
        &initial,
        |_, s, terms| ctrl.wrench(s, terms),
        |_, _, jac| ExternalLoad::platform(wrench, jac),
        model,
        spec,
    );
    if let Some(msg) = traj.truncated {
        return Err(Error::InvalidArgument(format!("rollout stopped early: {msg}")));
    }
    let first = &traj.samples[0];
    let mut obs = ObserverState::start(&first.state, &first.f_m, model)?;
    let mut out = vec![(0.0, Vector3::zeros())];
    for smp in &traj.samples[1..] {
        let terms = dyn_terms(&smp.state, model)?;
        let (next, o) = crate::observer::observer_step_with(&obs, &smp.state, &smp.f_m, dt, &terms);
        obs = next;
        out.push((smp.t, o.f_hat));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_model;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = scenario_rng(1, 2, 0, 0).random();
        let b: u64 = scenario_rng(1, 2, 0, 0).random();
        let c: u64 = scenario_rng(1, 2, 1, 0).random();
        let d: u64 = scenario_rng(1, 2, 0, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn slabs_tile_the_box() {
        let w = Workspace::default();
        let s = w.split_x(3);
        assert_eq!(s[0].x[0], w.x[0]);
        assert!((s[2].x[1] - w.x[1]).abs() < 1e-15);
        assert_eq!(s[1].x[0], s[0].x[1]);
    }

    #[test]
    fn scenarios_are_balanced_and_filtered() {
        let m = default_model();
        let cfg = ScenarioConfig::default();
        let sc = sample_scenarios(70, &m, &cfg, 3).unwrap();
        let mut counts = [0; 7];
        for s in &sc {
            counts[s.contact.body.index()] += 1;
            let st = KinState::at_pose(s.x_d, &m, m.elbows()).unwrap();
            assert!(cfg.filter.accepts(&st, &m));
            assert!(s.contact.magnitude.abs() >= 5.0 && s.contact.magnitude.abs() <= 140.0);
        }
        assert_eq!(counts, [10; 7]);
        assert_eq!(sample_scenarios(70, &m, &cfg, 3).unwrap(), sc);
    }

    #[test]
    fn platform_scenarios_push_into_the_hull() {
        let m = default_model();
        let cfg = ScenarioConfig::default();
        for id in (6..300).step_by(7) {
            let (s, _) = Scenario::draw(9, id, 0, BodyLabel::MP, &m, &cfg).unwrap();
            let ContactLocation::PlatformPoint(p) = s.contact.location else { panic!() };
            // A small step along the force from the contact point enters the hull.
            let f_body = rot(-s.x_d[2]) * s.contact.force().normalize();
            let inner = p + f_body * 1e-6;
            assert!(crate::planar::distance_to_boundary(&inner, &m.hull()) > 0.0);
            let hull = m.hull();
            let inside = (0..hull.len()).all(|k| {
                crate::planar::cross(&(hull[(k + 1) % hull.len()] - hull[k]), &(inner - hull[k])) >= 0.0
            });
            assert!(inside);
        }
    }

    #[test]
    fn too_few_scenarios_is_an_error() {
        let m = default_model();
        assert!(sample_scenarios(6, &m, &ScenarioConfig::default(), 0).is_err());
    }

    #[test]
    fn impossible_workspace_is_reported() {
        let m = default_model();
        let cfg = ScenarioConfig {
            workspace: Workspace {
                x: [2.0, 2.1],
                y: [2.0, 2.1],
                phi: [0.0, 0.1],
            },
            max_pose_tries: 50,
            ..ScenarioConfig::default()
        };
        assert!(matches!(sample_scenarios(7, &m, &cfg, 0), Err(Error::WorkspaceTooTight { .. })));
    }

    #[test]
    fn kinetostatic_link_two_line_hits_coupling_joint() {
        let m = default_model();
        for id in [1u64, 3, 5, 8, 10] {
            let (s, _) = Scenario::draw(4, id, 0, class_of(id), &m, &ScenarioConfig::default()).unwrap();
            let l = kinetostatic_label(&s, &m).unwrap();
            let (chain, _) = l.label.chain_link().unwrap();
            assert!(l.features.d[chain] < 1e-9, "{:?}", l.features.d);
        }
    }

    #[test]
    fn dataset_csv_round_trips() {
        let m = default_model();
        let ds = generate_dataset(&DatasetConfig::ideal(14, 2), &m).unwrap();
        let csv = dataset_to_csv(&ds.samples);
        let back = dataset_from_csv(&csv).unwrap();
        assert_eq!(back, ds.samples);
        assert_eq!(ds.class_counts(), [2; 7]);
    }
}
