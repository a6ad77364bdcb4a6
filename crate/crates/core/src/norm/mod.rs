//! Feature normalization layers for critics trained by off-policy TD.
//!
//! Besides the usual batch and layer normalization this module implements
//! cross-normalization: when a critic evaluates `Q(s, a)` on replayed pairs
//! and `Q(s', π(s'))` on policy pairs in the same update, both streams are
//! normalized with a *single* set of moments built from a mixture of the two
//! streams,
//!
//! ```text
//! mean = α · E[f(s, a)] + (1 − α) · E[f(s', π(s'))]
//! ```
//!
//! so the TD error compares predictions that were centered identically.
//! `CrossRenorm` additionally switches to running (moving-average) moments
//! after a warm-up number of optimization steps.
//!
//! Moments are computed as weighted column sums in row order. With α = 0.5
//! the per-row weights `α/N` and `1/(2N)` are the same float, so a dual
//! forward is bit-identical to batch normalization of the row-concatenation.

mod layer;

pub use layer::{
    cross_forward_dual, norm_backward, Layout, NormCache, NormCtx, NormGrads, NormLayer, NormMode,
    Stream,
};

use crate::error::{config, contract, Result};
use crate::numcore::Mat;

/// Normalization family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormKind {
    None,
    Batch,
    Layer,
    Cross,
    CrossRenorm,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::None => "none",
            NormKind::Batch => "batch",
            NormKind::Layer => "layer",
            NormKind::Cross => "cross",
            NormKind::CrossRenorm => "cross_renorm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => NormKind::None,
            "batch" => NormKind::Batch,
            "layer" => NormKind::Layer,
            "cross" => NormKind::Cross,
            "cross_renorm" => NormKind::CrossRenorm,
            _ => return None,
        })
    }

    /// Kinds that normalize per feature column across the batch.
    pub fn is_columnwise(self) -> bool {
        matches!(
            self,
            NormKind::Batch | NormKind::Cross | NormKind::CrossRenorm
        )
    }

    pub fn is_cross(self) -> bool {
        matches!(self, NormKind::Cross | NormKind::CrossRenorm)
    }
}

/// Variance estimator used for the batch moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarianceMode {
    /// Divide by `M`.
    Population,
    /// Divide by `M − 1`, taken about the balanced mean of all rows.
    Bessel,
    /// Cross kinds only: `[(x̄_on − c)² + (x̄_off − c)²] / (2N − 1)` over the
    /// two stream means `x̄`, with `c` their midpoint. Kept for comparison.
    StreamMeans,
}

impl VarianceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceMode::Population => "population",
            VarianceMode::Bessel => "bessel",
            VarianceMode::StreamMeans => "stream_means",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "population" => VarianceMode::Population,
            "bessel" => VarianceMode::Bessel,
            "stream_means" => VarianceMode::StreamMeans,
            _ => return None,
        })
    }
}

/// Configuration of one normalization layer.
///
/// The weight of the on-policy stream is always `1 − alpha` in deep layers;
/// [`NormSpec::beta`] exposes it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSpec {
    pub kind: NormKind,
    pub alpha: f64,
    pub mean_only: bool,
    /// Weight `ρ` of the newest batch in the running moments.
    pub momentum: f64,
    pub renorm_switch_step: u64,
    pub epsilon: f64,
    pub affine: bool,
    pub variance: VarianceMode,
}

impl Default for NormSpec {
    fn default() -> Self {
        NormSpec::none()
    }
}

impl NormSpec {
    pub const DEFAULT_EPSILON: f64 = 1e-5;
    pub const DEFAULT_SWITCH_STEP: u64 = 5000;
    pub const DEFAULT_RENORM_MOMENTUM: f64 = 0.01;

    fn base(kind: NormKind) -> Self {
        NormSpec {
            kind,
            alpha: 0.5,
            mean_only: false,
            momentum: 1.0,
            renorm_switch_step: Self::DEFAULT_SWITCH_STEP,
            epsilon: Self::DEFAULT_EPSILON,
            affine: true,
            variance: VarianceMode::Population,
        }
    }

    pub fn none() -> Self {
        Self::base(NormKind::None)
    }

    /// Plain batch normalization; running moments replaced by each batch.
    pub fn batch() -> Self {
        Self::base(NormKind::Batch)
    }

    pub fn layer() -> Self {
        Self::base(NormKind::Layer)
    }

    /// CrossNorm with mixing weight `alpha` on the off-policy stream.
    pub fn cross(alpha: f64) -> Self {
        NormSpec {
            alpha,
            variance: VarianceMode::Bessel,
            ..Self::base(NormKind::Cross)
        }
    }

    /// CrossRenorm: CrossNorm until the switch step, running moments after.
    pub fn cross_renorm(alpha: f64) -> Self {
        NormSpec {
            alpha,
            momentum: Self::DEFAULT_RENORM_MOMENTUM,
            variance: VarianceMode::Bessel,
            ..Self::base(NormKind::CrossRenorm)
        }
    }

    pub fn with_mean_only(mut self, mean_only: bool) -> Self {
        self.mean_only = mean_only;
        self
    }

    pub fn with_affine(mut self, affine: bool) -> Self {
        self.affine = affine;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn with_variance(mut self, variance: VarianceMode) -> Self {
        self.variance = variance;
        self
    }

    pub fn with_switch_step(mut self, step: u64) -> Self {
        self.renorm_switch_step = step;
        self
    }

    pub fn beta(&self) -> f64 {
        1.0 - self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.momentum) {
            return config(format!("momentum {} outside [0, 1]", self.momentum));
        }
        if !(self.epsilon >= 0.0) {
            return config(format!("epsilon {} must be non-negative", self.epsilon));
        }
        if self.kind.is_cross() && !(0.0..=1.0).contains(&self.alpha) {
            return config(format!("cross alpha {} outside [0, 1]", self.alpha));
        }
        if self.variance == VarianceMode::StreamMeans && !self.kind.is_cross() {
            return config("stream_means variance is only defined for cross kinds");
        }
        Ok(())
    }
}

/// Per-feature first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Moments {
    pub fn width(&self) -> usize {
        self.mean.len()
    }
}

/// Running moments plus the learnable affine parameters of a layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Number of running updates performed.
    pub step: u64,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    /// Batch moments of the latest training forward, for pinned reuse.
    pub last_batch: Option<Moments>,
}

impl NormState {
    pub fn new(width: usize) -> Self {
        NormState {
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            step: 0,
            scale: vec![1.0; width],
            shift: vec![0.0; width],
            last_batch: None,
        }
    }

    pub fn width(&self) -> usize {
        self.scale.len()
    }

    pub fn has_statistics(&self) -> bool {
        self.step > 0
    }

    pub fn running(&self) -> Moments {
        Moments {
            mean: self.running_mean.clone(),
            var: self.running_var.clone(),
        }
    }
}

/// How a column of `M` rows is reduced to a mean and a variance.
///
/// Rows `[0, split)` get mean weight `w_first`, rows `[split, M)` get
/// `w_second`. The variance is taken about the uniform mean of all rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct MomentPlan {
    pub len: usize,
    pub split: usize,
    pub w_first: f64,
    pub w_second: f64,
    pub var: VarPlan,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum VarPlan {
    Rows { divisor: f64 },
    StreamMeans { divisor: f64 },
}

impl MomentPlan {
    /// Uniform weights over `m` rows.
    pub fn uniform(m: usize, mode: VarianceMode) -> Self {
        let w = 1.0 / m as f64;
        MomentPlan {
            len: m,
            split: m,
            w_first: w,
            w_second: w,
            var: VarPlan::Rows {
                divisor: rows_divisor(m, mode),
            },
        }
    }

    /// α-weighted mixture of two equally sized streams stacked as
    /// `[off; on]`.
    pub fn cross(n: usize, alpha: f64, mode: VarianceMode) -> Self {
        let m = 2 * n;
        let nf = n as f64;
        let var = match mode {
            VarianceMode::StreamMeans => VarPlan::StreamMeans {
                divisor: (m - 1) as f64,
            },
            _ => VarPlan::Rows {
                divisor: rows_divisor(m, mode),
            },
        };
        MomentPlan {
            len: m,
            split: n,
            w_first: alpha / nf,
            w_second: (1.0 - alpha) / nf,
            var,
        }
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i < self.split {
            self.w_first
        } else {
            self.w_second
        }
    }

    /// Mean and variance of every column of `x` (which has `len` rows).
    pub fn moments(&self, x: &Mat) -> Moments {
        debug_assert_eq!(x.rows(), self.len);
        let k = x.cols();
        let mut mean = vec![0.0; k];
        for i in 0..self.len {
            let w = self.weight(i);
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += w * v;
            }
        }
        let center = self.center(x);
        let var = match self.var {
            VarPlan::Rows { divisor } => {
                let mut ss = vec![0.0; k];
                for i in 0..self.len {
                    for ((s, v), c) in ss.iter_mut().zip(x.row(i)).zip(&center) {
                        let d = v - c;
                        *s += d * d;
                    }
                }
                if divisor > 0.0 {
                    ss.iter().map(|s| s / divisor).collect()
                } else {
                    vec![0.0; k]
                }
            }
            VarPlan::StreamMeans { divisor } => {
                let (m_off, m_on) = self.stream_means(x);
                (0..k)
                    .map(|j| {
                        let a = m_on[j] - center[j];
                        let b = m_off[j] - center[j];
                        (a * a + b * b) / divisor
                    })
                    .collect()
            }
        };
        Moments { mean, var }
    }

    /// Uniform mean of all rows; the point the variance is measured about.
    pub fn center(&self, x: &Mat) -> Vec<f64> {
        let w = 1.0 / self.len as f64;
        let mut c = vec![0.0; x.cols()];
        for i in 0..self.len {
            for (m, v) in c.iter_mut().zip(x.row(i)) {
                *m += w * v;
            }
        }
        c
    }

    fn stream_means(&self, x: &Mat) -> (Vec<f64>, Vec<f64>) {
        let k = x.cols();
        let n_off = self.split as f64;
        let n_on = (self.len - self.split) as f64;
        let mut off = vec![0.0; k];
        let mut on = vec![0.0; k];
        for i in 0..self.len {
            let (acc, w) = if i < self.split {
                (&mut off, 1.0 / n_off)
            } else {
                (&mut on, 1.0 / n_on)
            };
            for (m, v) in acc.iter_mut().zip(x.row(i)) {
                *m += w * v;
            }
        }
        (off, on)
    }

    /// Derivative of the variance of column `j` w.r.t. every row entry.
    pub fn var_grad(&self, x: &Mat, j: usize, center: f64) -> Vec<f64> {
        match self.var {
            VarPlan::Rows { divisor } => {
                if divisor <= 0.0 {
                    return vec![0.0; self.len];
                }
                let b = 1.0 / self.len as f64;
                let total: f64 = (0..self.len).map(|i| x.get(i, j) - center).sum();
                (0..self.len)
                    .map(|i| 2.0 / divisor * ((x.get(i, j) - center) - b * total))
                    .collect()
            }
            VarPlan::StreamMeans { divisor } => {
                let n = self.split as f64;
                let (mut m_off, mut m_on) = (0.0, 0.0);
                for i in 0..self.len {
                    if i < self.split {
                        m_off += x.get(i, j) / n;
                    } else {
                        m_on += x.get(i, j) / (self.len - self.split) as f64;
                    }
                }
                let g = (m_off - m_on) / (divisor * n);
                (0..self.len)
                    .map(|i| if i < self.split { g } else { -g })
                    .collect()
            }
        }
    }
}

fn rows_divisor(m: usize, mode: VarianceMode) -> f64 {
    match mode {
        VarianceMode::Population => m as f64,
        // a single sample has zero spread; keep the divisor from vanishing
        _ => (m.max(2) - 1) as f64,
    }
}

/// Per-column mean and population variance of a batch.
pub fn batch_moments(x: &Mat) -> Result<Moments> {
    batch_moments_with(x, VarianceMode::Population)
}

pub fn batch_moments_with(x: &Mat, mode: VarianceMode) -> Result<Moments> {
    if x.rows() == 0 {
        return contract("batch moments of an empty batch");
    }
    if mode == VarianceMode::StreamMeans {
        return config("stream_means variance needs two streams");
    }
    Ok(MomentPlan::uniform(x.rows(), mode).moments(x))
}

/// Cross moments of an off-policy and an on-policy feature batch, using the
/// Bessel-corrected variance of the `2N` stacked samples about their
/// balanced mean.
pub fn cross_moments(f_off: &Mat, f_on: &Mat, alpha: f64) -> Result<Moments> {
    cross_moments_with(f_off, f_on, alpha, VarianceMode::Bessel)
}

pub fn cross_moments_with(
    f_off: &Mat,
    f_on: &Mat,
    alpha: f64,
    mode: VarianceMode,
) -> Result<Moments> {
    if f_off.cols() != f_on.cols() {
        return config(format!(
            "feature widths differ: {} vs {}",
            f_off.cols(),
            f_on.cols()
        ));
    }
    if f_off.rows() != f_on.rows() || f_off.rows() == 0 {
        return contract(format!(
            "cross moments need equal non-empty streams, got {} and {} rows",
            f_off.rows(),
            f_on.rows()
        ));
    }
    let stacked = Mat::vstack(&[f_off, f_on])?;
    Ok(MomentPlan::cross(f_off.rows(), alpha, mode).moments(&stacked))
}

/// `running ← (1 − ρ)·running + ρ·batch` for both moments; bumps the step.
pub fn running_update(state: &mut NormState, batch: &Moments, rho: f64) -> Result<()> {
    if batch.width() != state.width() || batch.var.len() != state.width() {
        return config(format!(
            "running update width {} vs state width {}",
            batch.width(),
            state.width()
        ));
    }
    for (r, b) in state.running_mean.iter_mut().zip(&batch.mean) {
        *r = (1.0 - rho) * *r + rho * b;
    }
    for (r, b) in state.running_var.iter_mut().zip(&batch.var) {
        *r = (1.0 - rho) * *r + rho * b;
    }
    state.step += 1;
    Ok(())
}

/// Normalizes every row of `x` with the given per-column moments, then
/// applies the state's affine parameters if the spec enables them.
pub fn normalize_apply(
    x: &Mat,
    mean: &[f64],
    var: &[f64],
    spec: &NormSpec,
    state: &NormState,
) -> Result<Mat> {
    let k = x.cols();
    if mean.len() != k || var.len() != k || state.width() != k {
        return config(format!(
            "normalize: {} columns vs moments {} / {} / state {}",
            k,
            mean.len(),
            var.len(),
            state.width()
        ));
    }
    if let Some(v) = var.iter().find(|v| **v < 0.0 || v.is_nan()) {
        return contract(format!("negative variance {}", v));
    }
    let (x_hat, _) = standardize_columns(x, mean, var, spec);
    Ok(apply_affine(&x_hat, spec, state))
}

/// `(x − mean) / sqrt(var + ε)` (or `x − mean` when mean-only). Returns the
/// standardized matrix and the per-column inverse standard deviations.
pub(crate) fn standardize_columns(
    x: &Mat,
    mean: &[f64],
    var: &[f64],
    spec: &NormSpec,
) -> (Mat, Vec<f64>) {
    let inv_std: Vec<f64> = if spec.mean_only {
        vec![1.0; var.len()]
    } else {
        var.iter()
            .map(|v| 1.0 / (v + spec.epsilon).sqrt())
            .collect()
    };
    let mut out = x.clone();
    for r in 0..out.rows() {
        for ((y, m), s) in out.row_mut(r).iter_mut().zip(mean).zip(&inv_std) {
            *y = (*y - m) * s;
        }
    }
    (out, inv_std)
}

pub(crate) fn apply_affine(x_hat: &Mat, spec: &NormSpec, state: &NormState) -> Mat {
    if !spec.affine {
        return x_hat.clone();
    }
    let mut y = x_hat.clone();
    for r in 0..y.rows() {
        for (j, v) in y.row_mut(r).iter_mut().enumerate() {
            if spec.mean_only {
                *v += state.shift[j];
            } else {
                *v = *v * state.scale[j] + state.shift[j];
            }
        }
    }
    y
}

/// Standalone layer normalization: each row standardized across its
/// features, then affine.
pub fn layer_norm(x: &Mat, spec: &NormSpec, state: &NormState) -> Result<Mat> {
    if state.width() != x.cols() {
        return config(format!(
            "layer norm width {} vs state {}",
            x.cols(),
            state.width()
        ));
    }
    let (x_hat, _) = layer::standardize_rows(x, spec);
    Ok(apply_affine(&x_hat, spec, state))
}
