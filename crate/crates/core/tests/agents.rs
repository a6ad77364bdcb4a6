//! Behaviour of the TD target, critic/actor steps, soft updates and the
//! training loop on small hand-built cases.

use crossnorm::agents::{
    actor_update, compute_critic_target, critic_update, soft_update, train, Agent, AgentConfig,
    AgentNets, AgentOpts, Algorithm,
};
use crossnorm::envs::{Batch, ReplayBuffer, Transition};
use crossnorm::norm::{Layout, NormCtx, NormMode, NormSpec};
use crossnorm::numcore::rng::seeded;
use crossnorm::numcore::{Activation, Dense, Mat, Mlp, OptimizerKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plain(alg: Algorithm, targets: bool) -> AgentConfig {
    AgentConfig {
        algorithm: alg,
        use_target_networks: targets,
        policy_delay: if alg == Algorithm::Td3 { 2 } else { 1 },
        late_action: false,
        hidden: vec![8, 8],
        ..AgentConfig::default()
    }
}

fn random_batch(n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = |c: usize, lo: f64, hi: f64| {
        Mat::new(n, c, (0..n * c).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    };
    let s = m(3, -1.0, 1.0);
    let a = m(1, -1.0, 1.0);
    let s_next = m(3, -1.0, 1.0);
    let r = m(1, -5.0, 0.0).into_data();
    Batch {
        s,
        a,
        r,
        s_next,
        done: vec![0.0; n],
    }
}

fn nets(cfg: &AgentConfig) -> AgentNets {
    AgentNets::new(cfg, 3, 1, &mut seeded(cfg.seed, 1)).unwrap()
}

/// Sets the output layer to the constant `c`.
fn make_constant(net: &mut Mlp, c: f64) {
    let last = net.layers.last_mut().unwrap();
    last.weight = Mat::zeros(last.weight.rows(), last.weight.cols());
    last.bias = vec![c];
}

/// Turns an RMSprop state into plain gradient descent with rate 1, so the
/// parameter change is exactly minus the gradient.
fn as_unit_descent(opt: &mut crossnorm::numcore::OptState) {
    opt.config.kind = OptimizerKind::RmsProp;
    opt.config.rms_decay = 1.0;
    opt.config.eps = 1.0;
    opt.config.lr = 1.0;
}

fn flat(net: &Mlp) -> Vec<f64> {
    net.params()
        .iter()
        .flat_map(|p| p.iter().copied())
        .collect()
}

#[test]
fn myopic_target_is_the_reward() {
    let mut cfg = plain(Algorithm::Ddpg, true);
    cfg.gamma = 0.0;
    let b = random_batch(6, 1);
    let mut n = nets(&cfg);
    let y = compute_critic_target(&b, &mut n, &cfg, &mut seeded(0, 3)).unwrap();
    assert_eq!(y, b.r);
}

#[test]
fn terminal_target_is_the_reward() {
    let cfg = plain(Algorithm::Td3, false);
    let mut b = random_batch(6, 2);
    b.done = vec![1.0; 6];
    let mut n = nets(&cfg);
    let y = compute_critic_target(&b, &mut n, &cfg, &mut seeded(0, 3)).unwrap();
    assert_eq!(y, b.r);
}

#[test]
fn td3_takes_the_smaller_critic() {
    let cfg = plain(Algorithm::Td3, true);
    let b = random_batch(5, 3);
    let mut n = nets(&cfg);
    let t = n.targets.as_mut().unwrap();
    make_constant(&mut t.critics[0], 2.0);
    make_constant(&mut t.critics[1], 3.0);
    let y = compute_critic_target(&b, &mut n, &cfg, &mut seeded(0, 3)).unwrap();
    for (yi, ri) in y.iter().zip(&b.r) {
        assert_eq!(*yi, ri + 0.99 * 2.0);
    }
}

#[test]
fn no_target_storage_and_live_bootstrap() {
    let cfg = plain(Algorithm::Ddpg, false);
    let mut n = nets(&cfg);
    assert!(n.targets.is_none());
    let b = random_batch(4, 4);
    let y = compute_critic_target(&b, &mut n, &cfg, &mut seeded(0, 3)).unwrap();
    let a_next = n.actor.predict(&b.s_next).unwrap();
    let q = n.critics[0]
        .predict(&Mat::hstack(&b.s_next, &a_next).unwrap())
        .unwrap();
    for i in 0..4 {
        assert!((y[i] - (b.r[i] + 0.99 * q.get(i, 0))).abs() < 1e-12);
    }
}

#[test]
fn perfect_critic_is_a_fixed_point() {
    let mut cfg = plain(Algorithm::Ddpg, true);
    cfg.gamma = 0.0;
    let mut b = random_batch(1, 5);
    b.r = vec![-1.5];
    let mut n = nets(&cfg);
    make_constant(&mut n.critics[0], -1.5);
    let before = n.critics[0].clone();
    let mut opts = AgentOpts::new(&cfg);
    let step = critic_update(&b, None, &mut n, &mut opts, &cfg, &mut seeded(0, 3)).unwrap();
    assert_eq!(step.loss, 0.0);
    assert_eq!(flat(&n.critics[0]), flat(&before));
}

#[test]
fn critic_loss_matches_hand_computation() {
    let cfg = plain(Algorithm::Ddpg, true);
    let b = random_batch(2, 6);
    let mut n = nets(&cfg);
    let t = n.targets.as_ref().unwrap();
    let a_next = t.actor.predict(&b.s_next).unwrap();
    let q_next = t.critics[0]
        .predict(&Mat::hstack(&b.s_next, &a_next).unwrap())
        .unwrap();
    let q = n.critics[0]
        .predict(&Mat::hstack(&b.s, &b.a).unwrap())
        .unwrap();
    let expect = (0..2)
        .map(|i| (q.get(i, 0) - (b.r[i] + 0.99 * q_next.get(i, 0))).powi(2))
        .sum::<f64>()
        / 2.0;
    let mut opts = AgentOpts::new(&cfg);
    let step = critic_update(&b, None, &mut n, &mut opts, &cfg, &mut seeded(0, 3)).unwrap();
    assert!((step.loss - expect).abs() <= 1e-12 * expect);
}

#[test]
fn crossnorm_loss_equals_batchnorm_of_the_stacked_batch() {
    let cfg = AgentConfig {
        norm: NormSpec::cross(0.5),
        ..plain(Algorithm::Ddpg, false)
    };
    let b = random_batch(16, 7);
    let mut n = nets(&cfg);

    // Reference: a batch-norm copy of the critic on the stacked batch.
    let mut reference = n.critics[0].clone();
    for l in reference.norm_layers_mut() {
        l.spec.kind = crossnorm::norm::NormKind::Batch;
    }
    let a_next = n.actor.predict(&b.s_next).unwrap();
    let x = Mat::vstack(&[
        &Mat::hstack(&b.s, &b.a).unwrap(),
        &Mat::hstack(&b.s_next, &a_next).unwrap(),
    ])
    .unwrap();
    let (q, _) = reference
        .forward(&x, NormCtx::new(NormMode::TRAIN, Layout::Single))
        .unwrap();
    let expect = (0..16)
        .map(|i| (q.get(i, 0) - (b.r[i] + 0.99 * q.get(16 + i, 0))).powi(2))
        .sum::<f64>()
        / 16.0;

    let mut opts = AgentOpts::new(&cfg);
    let step = critic_update(&b, None, &mut n, &mut opts, &cfg, &mut seeded(0, 3)).unwrap();
    assert!(step.moments_shared);
    assert!(
        (step.loss - expect).abs() <= 1e-15 * expect,
        "{} vs {}",
        step.loss,
        expect
    );
}

#[test]
fn naive_dual_batchnorm_does_not_share_moments() {
    let cfg = AgentConfig {
        norm: NormSpec::batch(),
        ..plain(Algorithm::Ddpg, false)
    };
    let mut n = nets(&cfg);
    let mut opts = AgentOpts::new(&cfg);
    let step = critic_update(
        &random_batch(8, 8),
        None,
        &mut n,
        &mut opts,
        &cfg,
        &mut seeded(0, 3),
    )
    .unwrap();
    assert!(!step.moments_shared);
}

#[test]
fn every_cross_update_shares_moments() {
    for (norm, alg) in [
        (NormSpec::cross(0.5), Algorithm::Ddpg),
        (NormSpec::cross(0.5).with_mean_only(true), Algorithm::Ddpg),
        (
            NormSpec::cross_renorm(0.99).with_switch_step(3),
            Algorithm::Td3,
        ),
    ] {
        let cfg = AgentConfig {
            norm,
            batch_size: 8,
            ..plain(alg, false)
        };
        let mut n = nets(&cfg);
        let mut opts = AgentOpts::new(&cfg);
        for k in 0..6 {
            let step = critic_update(
                &random_batch(8, 20 + k),
                None,
                &mut n,
                &mut opts,
                &cfg,
                &mut seeded(k, 3),
            )
            .unwrap();
            assert!(step.moments_shared);
        }
    }
}

#[test]
fn target_branch_carries_no_gradient() {
    let cfg = plain(Algorithm::Ddpg, false);
    let b = random_batch(4, 9);
    let mut n = nets(&cfg);
    let y = compute_critic_target(&b, &mut n.clone(), &cfg, &mut seeded(0, 3)).unwrap();
    let x = Mat::hstack(&b.s, &b.a).unwrap();
    let semi = |net: &Mlp| {
        let q = net.predict(&x).unwrap();
        (0..4).map(|i| (q.get(i, 0) - y[i]).powi(2)).sum::<f64>() / 4.0
    };
    let base = n.clone();
    let full = |net: &Mlp| {
        let mut nn = base.clone();
        nn.critics[0] = net.clone();
        let y = compute_critic_target(&b, &mut nn, &cfg, &mut seeded(0, 3)).unwrap();
        let q = net.predict(&x).unwrap();
        (0..4).map(|i| (q.get(i, 0) - y[i]).powi(2)).sum::<f64>() / 4.0
    };

    let before = n.critics[0].clone();
    let mut opts = AgentOpts::new(&cfg);
    as_unit_descent(&mut opts.critics[0]);
    critic_update(&b, None, &mut n, &mut opts, &cfg, &mut seeded(0, 3)).unwrap();
    let after = flat(&n.critics[0]);

    let mut worst_semi: f64 = 0.0;
    let mut worst_full: f64 = 0.0;
    let h = 1e-6;
    let count = before.params().len();
    let mut k = 0;
    for pi in 0..count {
        for j in 0..before.params()[pi].len() {
            let g = before.params()[pi][j] - after[k];
            k += 1;
            let mut p = before.clone();
            p.params_mut()[pi][j] += h;
            let mut m = before.clone();
            m.params_mut()[pi][j] -= h;
            let fd_semi = (semi(&p) - semi(&m)) / (2.0 * h);
            let fd_full = (full(&p) - full(&m)) / (2.0 * h);
            worst_semi = worst_semi.max((g - fd_semi).abs());
            worst_full = worst_full.max((g - fd_full).abs());
        }
    }
    assert!(worst_semi < 1e-6, "semi-gradient mismatch {}", worst_semi);
    assert!(
        worst_full > 1e-3,
        "full gradient unexpectedly matched ({})",
        worst_full
    );
}

#[test]
fn constant_critic_gives_zero_actor_gradient() {
    let cfg = plain(Algorithm::Ddpg, true);
    let mut n = nets(&cfg);
    make_constant(&mut n.critics[0], 4.0);
    let before = flat(&n.actor);
    let mut opts = AgentOpts::new(&cfg);
    let obj = actor_update(&random_batch(8, 10), &mut n, &mut opts).unwrap();
    assert_eq!(obj, 4.0);
    assert_eq!(flat(&n.actor), before);
}

#[test]
fn actor_climbs_toward_the_critic_maximum() {
    // Q(s, a) = −relu(a) − relu(−a) = −|a|, maximized at a = 0.
    let cfg = plain(Algorithm::Ddpg, true);
    let mut n = nets(&cfg);
    let mut w1 = Mat::zeros(4, 2);
    w1.set(3, 0, 1.0);
    w1.set(3, 1, -1.0);
    let l1 = Dense::new(w1, vec![0.0; 2], Activation::Relu).unwrap();
    let l2 = Dense::new(
        Mat::new(2, 1, vec![-1.0, -1.0]).unwrap(),
        vec![0.0],
        Activation::Identity,
    )
    .unwrap();
    n.critics[0] = Mlp::from_layers(None, vec![l1, l2]).unwrap();
    // Start the actor far from zero.
    n.actor.layers.last_mut().unwrap().bias = vec![1.5];
    let b = random_batch(32, 11);
    let mean_abs = |n: &AgentNets| {
        let a = n.actor.predict(&b.s).unwrap();
        a.data().iter().map(|v| v.abs()).sum::<f64>() / 32.0
    };
    let start = mean_abs(&n);
    let mut opts = AgentOpts::new(&cfg);
    opts.actor.config.lr = 1e-2;
    for _ in 0..300 {
        actor_update(&b, &mut n, &mut opts).unwrap();
    }
    let end = mean_abs(&n);
    assert!(start > 0.7, "start {}", start);
    assert!(end < 0.25 * start, "{} -> {}", start, end);
}

#[test]
fn actor_step_leaves_critic_statistics_alone() {
    let cfg = AgentConfig {
        norm: NormSpec::cross(0.5),
        ..plain(Algorithm::Ddpg, false)
    };
    let mut n = nets(&cfg);
    let mut opts = AgentOpts::new(&cfg);
    let b = random_batch(8, 12);
    critic_update(&b, None, &mut n, &mut opts, &cfg, &mut seeded(0, 3)).unwrap();
    let critic = n.critics[0].clone();
    actor_update(&random_batch(8, 13), &mut n, &mut opts).unwrap();
    assert_eq!(n.critics[0], critic);
}

#[test]
fn soft_update_examples() {
    let cfg = plain(Algorithm::Ddpg, true);
    let n = nets(&cfg);
    let mut ones = n.critics[0].clone();
    for p in ones.params_mut() {
        p.fill(1.0);
    }
    let mut zeros = n.critics[0].clone();
    for p in zeros.params_mut() {
        p.fill(0.0);
    }

    let mut t = zeros.clone();
    soft_update(&ones, &mut t, 0.005).unwrap();
    assert!(flat(&t).iter().all(|&v| v == 0.005));

    let mut t = zeros.clone();
    soft_update(&ones, &mut t, 1.0).unwrap();
    assert_eq!(flat(&t), flat(&ones));

    let mut t = zeros.clone();
    soft_update(&ones, &mut t, 0.0).unwrap();
    assert_eq!(flat(&t), flat(&zeros));

    assert!(soft_update(&n.actor, &mut t, 0.5).is_err());
}

fn filled_buffer(n: usize) -> ReplayBuffer {
    let b = random_batch(n, 14);
    let mut buf = ReplayBuffer::new(n, 3, 1).unwrap();
    for i in 0..n {
        buf.push(Transition {
            s: b.s.row(i).to_vec(),
            a: b.a.row(i).to_vec(),
            r: b.r[i],
            s_next: b.s_next.row(i).to_vec(),
            done: false,
        })
        .unwrap();
    }
    buf
}

#[test]
fn td3_delays_actor_updates() {
    let cfg = AgentConfig {
        batch_size: 8,
        ..plain(Algorithm::Td3, true)
    };
    let buf = filled_buffer(32);
    let mut agent = Agent::new(&cfg, 3, 1).unwrap();
    let mut rng = seeded(0, 4);
    let mut actor = flat(&agent.nets.actor);
    for k in 1..=6 {
        agent.update(&buf, &mut rng).unwrap();
        let now = flat(&agent.nets.actor);
        assert_eq!(now != actor, k % 2 == 0, "critic step {}", k);
        actor = now;
    }
    assert_eq!(agent.critic_updates(), 6);
    assert_eq!(agent.actor_updates(), 3);
}

#[test]
fn moment_batch_pins_the_update_moments() {
    let cfg = AgentConfig {
        norm: NormSpec::cross(0.5),
        batch_size: 8,
        moment_batch: Some(32),
        ..plain(Algorithm::Td3, false)
    };
    let buf = filled_buffer(64);
    let mut agent = Agent::new(&cfg, 3, 1).unwrap();
    let step = agent.update(&buf, &mut seeded(0, 4)).unwrap();
    assert!(step.moments_shared && step.loss.is_finite());
}

#[test]
fn training_is_a_function_of_the_config() {
    let cfg = AgentConfig {
        total_steps: 700,
        warmup: 300,
        eval_interval: 350,
        eval_episodes: 1,
        seed: 5,
        ..AgentConfig::preset("ddpg-crossnorm").unwrap()
    };
    let a = train(&cfg).unwrap();
    let b = train(&cfg).unwrap();
    assert!(a.same_trajectory(&b));
    assert_eq!(a.rows.len(), 2);
    let c = train(&AgentConfig { seed: 6, ..cfg }).unwrap();
    assert!(!a.same_trajectory(&c));
}
