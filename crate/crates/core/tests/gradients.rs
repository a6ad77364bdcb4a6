//! Finite-difference checks of whole-network gradients, including
//! normalization moments that depend on both halves of a stacked batch.

use crossnorm::norm::{Layout, NormCtx, NormMode, NormSpec};
use crossnorm::numcore::gradcheck::{gradient_suite, LayerCase, FD_TOLERANCE};
use crossnorm::numcore::{Activation, Mat, Mlp, MlpSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::new(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect(),
    )
    .unwrap()
}

fn critic(norm: NormSpec, input_norm: bool, late: usize, seed: u64) -> Mlp {
    let spec = MlpSpec {
        input_dim: 4,
        hidden: vec![5, 5],
        output_dim: 1,
        hidden_activation: Activation::Tanh,
        output_activation: Activation::Identity,
        norm,
        input_norm,
        late_inputs: late,
    };
    let mut net = Mlp::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    for n in net.norm_layers_mut() {
        for v in n.state.scale.iter_mut() {
            *v = rng.random_range(0.5..1.5);
        }
        for v in n.state.shift.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    net
}

/// Relative error with an absolute floor: central differences at h = 1e-6
/// carry ~1e-10 of rounding noise, which swamps gradients far below 1e-4.
fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Squared TD loss on the off half of a stacked batch against constant
/// targets, differentiated w.r.t. every parameter and the input.
fn check_dual_loss(norm: NormSpec, input_norm: bool, late: usize, seed: u64) -> f64 {
    let n = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_mat(&mut rng, 2 * n, 4);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ctx = NormCtx::new(NormMode::TRAIN_FROZEN, Layout::Dual { off_rows: n });
    let loss = |net: &mut Mlp, x: &Mat| {
        let (q, _) = net.forward(x, ctx).unwrap();
        (0..n).map(|r| (q.get(r, 0) - y[r]).powi(2)).sum::<f64>() / n as f64
    };

    let mut net = critic(norm, input_norm, late, seed);
    let (q, cache) = net.forward(&x, ctx).unwrap();
    let mut g = Mat::zeros(2 * n, 1);
    for r in 0..n {
        g.set(r, 0, 2.0 * (q.get(r, 0) - y[r]) / n as f64);
    }
    let grads = net.backward(&cache, &g).unwrap();

    let mut worst: f64 = 0.0;
    let flat: Vec<Vec<f64>> = grads.flat().iter().map(|p| p.to_vec()).collect();
    for (pi, analytic) in flat.iter().enumerate() {
        for (j, a) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[pi][j] += 1e-6;
            let mut minus = net.clone();
            minus.params_mut()[pi][j] -= 1e-6;
            let numeric = (loss(&mut plus, &x) - loss(&mut minus, &x)) / 2e-6;
            worst = worst.max(rel(*a, numeric));
        }
    }
    for i in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += 1e-6;
        let mut xm = x.clone();
        xm.data_mut()[i] -= 1e-6;
        let numeric = (loss(&mut net.clone(), &xp) - loss(&mut net.clone(), &xm)) / 2e-6;
        let a = grads.input.data()[i];
        worst = worst.max(rel(a, numeric));
    }
    worst
}

#[test]
fn dual_batch_critic_loss_gradients() {
    let specs = [
        ("none", NormSpec::none(), false),
        ("batch", NormSpec::batch(), true),
        ("layer", NormSpec::layer(), false),
        ("cross", NormSpec::cross(0.5), true),
        ("cross_alpha_0.8", NormSpec::cross(0.8), true),
        (
            "cross_mean_only",
            NormSpec::cross(0.5).with_mean_only(true),
            true,
        ),
    ];
    for (name, spec, input_norm) in specs {
        for seed in 0..5 {
            let err = check_dual_loss(spec, input_norm, 0, seed);
            assert!(
                err < 1e-5,
                "{} seed {}: relative error {:.3e}",
                name,
                seed,
                err
            );
        }
    }
}

#[test]
fn late_inputs_receive_gradients() {
    for (spec, input_norm) in [(NormSpec::none(), false), (NormSpec::cross(0.5), true)] {
        for seed in 0..3 {
            let err = check_dual_loss(spec, input_norm, 1, seed);
            assert!(
                err < 1e-5,
                "{:?} seed {}: relative error {:.3e}",
                spec.kind,
                seed,
                err
            );
        }
    }
}

#[test]
fn layer_suite_has_no_failures() {
    let reports = gradient_suite(200, 0).unwrap();
    assert_eq!(reports.len(), 200);
    for case in LayerCase::ALL {
        assert_eq!(reports.iter().filter(|r| r.case == case).count(), 25);
    }
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).collect();
    assert!(
        failed.is_empty(),
        "{} cases above {:e}: {:?}",
        failed.len(),
        FD_TOLERANCE,
        failed
    );
}
