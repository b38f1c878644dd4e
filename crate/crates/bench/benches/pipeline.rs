use contactiso::experiments::{kinetostatic_label, run_pf_study, PfStudyConfig, Scenario, ScenarioConfig};
use contactiso::{default_model, dt_classify, pf_init, pf_step, BodyLabel, DtParams, KinState, PfConfig, Pose};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn pipeline(c: &mut Criterion) {
    let m = default_model();
    let cfg = ScenarioConfig::default();
    let (s, _) = Scenario::draw(0, 3, 0, BodyLabel::ALL[3], &m, &cfg).unwrap();
    c.bench_function("kinetostatic_label", |b| b.iter(|| kinetostatic_label(black_box(&s), &m)));
    let smp = kinetostatic_label(&s, &m).unwrap();
    let dt = DtParams::default();
    c.bench_function("dt_classify", |b| b.iter(|| dt_classify(black_box(&smp.features), &dt)));

    let state = KinState::at_pose(Pose::new(0.0, 0.1, 0.0), &m, m.elbows()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ps = pf_init(0, &PfConfig::default(), &mut rng).unwrap();
    let tau = Vector3::new(4.0, -1.0, 0.5);
    c.bench_function("pf_step", |b| b.iter(|| pf_step(black_box(&ps), &tau, &state, &m, &mut rng)));

    let mut group = c.benchmark_group("studies");
    group.sample_size(10);
    group.bench_function("pf_study_exact_50", |b| b.iter(|| run_pf_study(&m, &PfStudyConfig::default())));
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
