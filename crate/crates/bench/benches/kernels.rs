use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use crossnorm::agents::{Agent, AgentConfig};
use crossnorm::envs::{build_fixed_buffer, BufferPolicy, PendulumEnv, ACT_DIM, OBS_DIM};
use crossnorm::linlab::{
    build_baird, expected_td0_step, phase_sweep, recenter, PolicyEvalConfig, RecenterParams,
    SweepConfig,
};
use crossnorm::norm::{cross_forward_dual, NormLayer, NormMode, NormSpec};
use crossnorm::numcore::rng::seeded;
use crossnorm::numcore::{mat_mul, Mat};
use std::hint::black_box;

fn filled(rows: usize, cols: usize, seed: u64) -> Mat {
    let data = (0..rows * cols)
        .map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0)
        .collect();
    Mat::new(rows, cols, data).unwrap()
}

fn mat_mul_bench(c: &mut Criterion) {
    let a = filled(256, 64, 1);
    let b = filled(64, 64, 2);
    c.bench_function("mat_mul 256x64 * 64x64", |bench| {
        bench.iter(|| mat_mul(black_box(&a), black_box(&b)).unwrap())
    });
}

fn crossnorm_bench(c: &mut Criterion) {
    let off = filled(256, 64, 3);
    let on = filled(256, 64, 4);
    let layer = NormLayer::new(NormSpec::cross(0.5), 64).unwrap();
    c.bench_function("cross_forward_dual 2x256x64", |bench| {
        bench.iter_batched(
            || layer.clone(),
            |mut l| cross_forward_dual(&off, &on, &mut l, NormMode::TRAIN).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn update_bench(c: &mut Criterion) {
    let buffer =
        build_fixed_buffer(&mut PendulumEnv::new(0), BufferPolicy::Random, 5000, 0).unwrap();
    for preset in ["ddpg-crossnorm", "td3", "td3-crossrenorm"] {
        let cfg = AgentConfig::preset(preset).unwrap();
        let mut agent = Agent::new(&cfg, OBS_DIM, ACT_DIM).unwrap();
        let mut replay = seeded(0, 4);
        c.bench_function(&format!("update {}", preset), |bench| {
            bench.iter(|| agent.update(&buffer, &mut replay).unwrap())
        });
    }
}

fn linlab_bench(c: &mut Criterion) {
    let mdp = build_baird();
    let (phi, phi_next) = recenter(&mdp, RecenterParams::new(0.5, 0.5));
    c.bench_function("expected_td0_step baird", |bench| {
        bench.iter(|| expected_td0_step(black_box(&mdp.theta0), &mdp, &phi, &phi_next, 1e-3, 0.99))
    });
    let sweep = SweepConfig {
        resolution: 8,
        eval: PolicyEvalConfig {
            iterations: 5000,
            ..SweepConfig::default().eval
        },
        ..SweepConfig::default()
    };
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("baird 8x8 x 5000 iterations", |bench| {
        bench.iter(|| phase_sweep(&mdp, &sweep).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    mat_mul_bench,
    crossnorm_bench,
    update_bench,
    linlab_bench
);
criterion_main!(benches);
