//! Central finite differences, plus a suite that checks the hand-written
//! backward pass of every layer type against them.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::mat::Mat;
use super::mlp::{Activation, Dense, Mlp};
use super::rng::{seeded, streams};
use crate::error::Result;
use crate::norm::{norm_backward, Layout, NormCtx, NormLayer, NormMode, NormSpec};

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between two gradient vectors.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n, floor))
        .fold(0.0, f64::max)
}

/// Step used by [`check_layer`].
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error in [`check_layer`].
pub const FD_FLOOR: f64 = 1e-4;
/// A case passes when its largest relative error is below this.
pub const FD_TOLERANCE: f64 = 1e-5;

const ROWS: usize = 4;
const WIDTH: usize = 3;

/// Layer types covered by [`gradient_suite`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerCase {
    Affine,
    Relu,
    Tanh,
    BatchNorm,
    LayerNorm,
    /// CrossNorm on a dual batch, moments from the batch.
    CrossNorm,
    /// CrossRenorm past its switch step, moments from running statistics.
    CrossRenormSwitched,
    /// Mean-only CrossNorm on a dual batch.
    MeanOnly,
}

impl LayerCase {
    pub const ALL: [LayerCase; 8] = [
        LayerCase::Affine,
        LayerCase::Relu,
        LayerCase::Tanh,
        LayerCase::BatchNorm,
        LayerCase::LayerNorm,
        LayerCase::CrossNorm,
        LayerCase::CrossRenormSwitched,
        LayerCase::MeanOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerCase::Affine => "affine",
            LayerCase::Relu => "relu",
            LayerCase::Tanh => "tanh",
            LayerCase::BatchNorm => "batchnorm",
            LayerCase::LayerNorm => "layernorm",
            LayerCase::CrossNorm => "crossnorm",
            LayerCase::CrossRenormSwitched => "crossrenorm-switched",
            LayerCase::MeanOnly => "crossnorm-mean-only",
        }
    }
}

/// Outcome of one finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub case: LayerCase,
    pub seed: u64,
    /// Largest relative error over input and parameter gradients.
    pub max_rel_error: f64,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < FD_TOLERANCE
    }
}

fn gaussian(rng: &mut super::rng::Rng, rows: usize, cols: usize) -> Mat {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Mat::new(rows, cols, data).expect("shape matches data")
}

enum Subject {
    Dense(Mlp),
    Norm(NormLayer, NormCtx),
}

impl Subject {
    fn output(&self, x: &Mat) -> Result<Mat> {
        match self {
            Subject::Dense(m) => m.predict(x),
            Subject::Norm(l, ctx) => Ok(l.clone().forward(x, *ctx)?.0),
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            Subject::Dense(m) => m.params().concat(),
            Subject::Norm(l, _) => [l.state.scale.clone(), l.state.shift.clone()].concat(),
        }
    }

    fn set_params(&mut self, p: &[f64]) {
        let mut k = 0;
        let slots: Vec<&mut [f64]> = match self {
            Subject::Dense(m) => m.params_mut(),
            Subject::Norm(l, _) => vec![&mut l.state.scale[..], &mut l.state.shift[..]],
        };
        for s in slots {
            s.copy_from_slice(&p[k..k + s.len()]);
            k += s.len();
        }
    }

    /// Analytic `(d/dx, d/dparams)` of `Σ G⊙Y`.
    fn analytic(&self, x: &Mat, g: &Mat) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Subject::Dense(m) => {
                let (_, cache) = m
                    .clone()
                    .forward(x, NormCtx::new(NormMode::TRAIN_FROZEN, Layout::Single))?;
                let grads = m.backward(&cache, g)?;
                Ok((grads.input.data().to_vec(), grads.flat().concat()))
            }
            Subject::Norm(l, ctx) => {
                let (_, cache) = l.clone().forward(x, *ctx)?;
                let grads = norm_backward(&cache, g)?;
                Ok((
                    grads.input.data().to_vec(),
                    [grads.scale, grads.shift].concat(),
                ))
            }
        }
    }
}

fn loss(y: &Mat, g: &Mat) -> f64 {
    y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
}

fn subject(case: LayerCase, rng: &mut super::rng::Rng) -> Result<(Subject, usize)> {
    let dense = |act, rng: &mut super::rng::Rng| -> Result<(Subject, usize)> {
        let w = gaussian(rng, WIDTH, WIDTH);
        let b = gaussian(rng, 1, WIDTH).data().to_vec();
        let mlp = Mlp::from_layers(None, vec![Dense::new(w, b, act)?])?;
        Ok((Subject::Dense(mlp), ROWS))
    };
    let norm =
        |spec: NormSpec, dual: bool, rng: &mut super::rng::Rng| -> Result<(Subject, usize)> {
            let mut layer = NormLayer::new(spec, WIDTH)?;
            layer.state.scale = (0..WIDTH).map(|_| rng.random_range(0.5..1.5)).collect();
            layer.state.shift = gaussian(rng, 1, WIDTH).data().to_vec();
            let (layout, rows) = if dual {
                (Layout::Dual { off_rows: ROWS }, 2 * ROWS)
            } else {
                (Layout::Single, ROWS)
            };
            Ok((
                Subject::Norm(layer, NormCtx::new(NormMode::TRAIN_FROZEN, layout)),
                rows,
            ))
        };
    match case {
        LayerCase::Affine => dense(Activation::Identity, rng),
        LayerCase::Relu => dense(Activation::Relu, rng),
        LayerCase::Tanh => dense(Activation::Tanh, rng),
        LayerCase::BatchNorm => norm(NormSpec::batch(), false, rng),
        LayerCase::LayerNorm => norm(NormSpec::layer(), false, rng),
        LayerCase::CrossNorm => norm(NormSpec::cross(rng.random_range(0.1..0.9)), true, rng),
        LayerCase::MeanOnly => norm(NormSpec::cross(0.5).with_mean_only(true), true, rng),
        LayerCase::CrossRenormSwitched => {
            let spec = NormSpec::cross_renorm(0.99)
                .with_switch_step(1)
                .with_momentum(0.5);
            let (mut s, rows) = norm(spec, true, rng)?;
            if let Subject::Norm(layer, ctx) = &mut s {
                // two statistics updates put the layer past its switch step
                for _ in 0..2 {
                    let warm = gaussian(rng, rows, WIDTH);
                    layer.forward(&warm, NormCtx::new(NormMode::TRAIN, ctx.layout))?;
                }
            }
            Ok((s, rows))
        }
    }
}

/// Compares the analytic input and parameter gradients of one randomly drawn
/// layer with central differences of the loss `Σ G⊙Y` for a random `G`.
pub fn check_layer(case: LayerCase, seed: u64) -> Result<CaseReport> {
    let mut rng = seeded(seed, streams::PROBE);
    let (mut subject, rows) = subject(case, &mut rng)?;
    let x = gaussian(&mut rng, rows, WIDTH);
    let g = gaussian(&mut rng, rows, WIDTH);
    let (ana_x, ana_p) = subject.analytic(&x, &g)?;

    let mut failure = None;
    let num_x = central_difference(
        |d| match Mat::new(rows, WIDTH, d.to_vec()).and_then(|xp| subject.output(&xp)) {
            Ok(y) => loss(&y, &g),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        x.data(),
        FD_STEP,
    );
    let p0 = subject.params();
    let num_p = central_difference(
        |p| {
            subject.set_params(p);
            match subject.output(&x) {
                Ok(y) => loss(&y, &g),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &p0,
        FD_STEP,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let err = max_relative_error(&ana_x, &num_x, FD_FLOOR)
        .max(max_relative_error(&ana_p, &num_p, FD_FLOOR));
    Ok(CaseReport {
        case,
        seed,
        max_rel_error: if err.is_nan() { f64::INFINITY } else { err },
    })
}

/// `cases` checks cycling through [`LayerCase::ALL`], case `i` drawn from
/// seed `seed + i`.
pub fn gradient_suite(cases: usize, seed: u64) -> Result<Vec<CaseReport>> {
    (0..cases)
        .map(|i| check_layer(LayerCase::ALL[i % LayerCase::ALL.len()], seed + i as u64))
        .collect()
}
