use super::{
    apply_affine, running_update, standardize_columns, MomentPlan, Moments, NormKind, NormSpec,
    NormState, VarianceMode,
};
use crate::error::{config, contract, Result};
use crate::numcore::Mat;

/// Row layout of a batch entering a normalization layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Single,
    /// `[off; on]`: the first `off_rows` rows are replayed `(s, a)` features,
    /// the remaining `off_rows` rows are `(s', π(s'))` features.
    Dual {
        off_rows: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Off,
    On,
}

/// Where the moments of a forward pass come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Batch moments (running moments for CrossRenorm after its switch
    /// step). Running statistics are updated only if `update_running`.
    Train { update_running: bool },
    /// Running moments, no state change, no gradients.
    Eval,
    /// Running moments as constants, no state change; the cache supports
    /// backward (gradients reach the input but not the moments).
    Running,
    /// Moments of the most recent training forward, as constants.
    Pinned,
}

impl NormMode {
    pub const TRAIN: NormMode = NormMode::Train {
        update_running: true,
    };
    pub const TRAIN_FROZEN: NormMode = NormMode::Train {
        update_running: false,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormCtx {
    pub mode: NormMode,
    pub layout: Layout,
}

impl NormCtx {
    pub fn new(mode: NormMode, layout: Layout) -> Self {
        NormCtx { mode, layout }
    }

    pub fn train() -> Self {
        NormCtx::new(NormMode::TRAIN, Layout::Single)
    }

    pub fn eval() -> Self {
        NormCtx::new(NormMode::Eval, Layout::Single)
    }
}

/// A normalization layer: spec plus mutable running/affine state.
#[derive(Clone, Debug, PartialEq)]
pub struct NormLayer {
    pub spec: NormSpec,
    pub state: NormState,
}

#[derive(Clone, Debug)]
struct ColumnGroup {
    start: usize,
    end: usize,
    moments: Moments,
    inv_std: Vec<f64>,
    /// `None` when the moments are constants w.r.t. the input.
    plan: Option<MomentPlan>,
}

#[derive(Clone, Debug)]
enum CacheStats {
    Identity,
    Columns {
        groups: Vec<ColumnGroup>,
        /// Index into `groups` used by the off and on streams.
        stream_group: [usize; 2],
    },
    Rows {
        inv_std: Vec<f64>,
    },
}

/// Everything the backward pass of a normalization layer needs.
#[derive(Clone, Debug)]
pub struct NormCache {
    spec: NormSpec,
    input: Mat,
    x_hat: Mat,
    scale: Vec<f64>,
    train: bool,
    layout: Layout,
    stats: CacheStats,
}

impl NormCache {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    /// The moments that normalized the given stream, for column-wise kinds.
    pub fn moments_for(&self, stream: Stream) -> Option<&Moments> {
        match &self.stats {
            CacheStats::Columns {
                groups,
                stream_group,
            } => match (self.layout, stream) {
                (Layout::Single, Stream::On) => None,
                (_, Stream::Off) => Some(&groups[stream_group[0]].moments),
                (_, Stream::On) => Some(&groups[stream_group[1]].moments),
            },
            _ => None,
        }
    }

    /// True when both streams of a dual batch were normalized by the very
    /// same moments object. Vacuously true for layouts and kinds without
    /// per-stream moments.
    pub fn streams_share_moments(&self) -> bool {
        match (self.moments_for(Stream::Off), self.moments_for(Stream::On)) {
            (Some(a), Some(b)) => std::ptr::eq(a, b),
            _ => true,
        }
    }

    /// Whether any moment in this cache depended on the input batch.
    pub fn moments_depend_on_input(&self) -> bool {
        match &self.stats {
            CacheStats::Identity => false,
            CacheStats::Rows { .. } => true,
            CacheStats::Columns { groups, .. } => groups.iter().any(|g| g.plan.is_some()),
        }
    }
}

/// Gradients of a normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NormGrads {
    pub input: Mat,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl NormLayer {
    pub fn new(spec: NormSpec, width: usize) -> Result<Self> {
        spec.validate()?;
        Ok(NormLayer {
            spec,
            state: NormState::new(width),
        })
    }

    pub fn width(&self) -> usize {
        self.state.width()
    }

    pub fn forward(&mut self, x: &Mat, ctx: NormCtx) -> Result<(Mat, NormCache)> {
        if x.cols() != self.width() {
            return config(format!(
                "norm layer of width {} fed {} columns",
                self.width(),
                x.cols()
            ));
        }
        if let Layout::Dual { off_rows } = ctx.layout {
            if x.rows() != 2 * off_rows || off_rows == 0 {
                return contract(format!(
                    "dual layout expects 2x{} rows, got {}",
                    off_rows,
                    x.rows()
                ));
            }
        }
        let train = !matches!(ctx.mode, NormMode::Eval);
        let spec = self.spec;
        let (x_hat, stats) = match spec.kind {
            NormKind::None => (x.clone(), CacheStats::Identity),
            NormKind::Layer => {
                let (x_hat, inv_std) = standardize_rows(x, &spec);
                (x_hat, CacheStats::Rows { inv_std })
            }
            NormKind::Batch | NormKind::Cross | NormKind::CrossRenorm => {
                let (groups, stream_group) = self.column_groups(x, ctx)?;
                let mut x_hat = Mat::zeros(x.rows(), x.cols());
                let mut groups = groups;
                for g in groups.iter_mut() {
                    let part = x.slice_rows(g.start, g.end);
                    let (h, inv_std) =
                        standardize_columns(&part, &g.moments.mean, &g.moments.var, &spec);
                    g.inv_std = inv_std;
                    for r in 0..h.rows() {
                        x_hat.row_mut(g.start + r).copy_from_slice(h.row(r));
                    }
                }
                (
                    x_hat,
                    CacheStats::Columns {
                        groups,
                        stream_group,
                    },
                )
            }
        };
        let y = match spec.kind {
            NormKind::None => x_hat.clone(),
            _ => apply_affine(&x_hat, &spec, &self.state),
        };
        if !y.is_finite() {
            return Err(crate::Error::Numeric(
                "non-finite normalization output".into(),
            ));
        }
        let cache = NormCache {
            spec,
            input: x.clone(),
            x_hat,
            scale: self.state.scale.clone(),
            train,
            layout: ctx.layout,
            stats,
        };
        Ok((y, cache))
    }

    fn column_groups(&mut self, x: &Mat, ctx: NormCtx) -> Result<(Vec<ColumnGroup>, [usize; 2])> {
        let m = x.rows();
        let constant = |moments: Moments| ColumnGroup {
            start: 0,
            end: m,
            moments,
            inv_std: Vec::new(),
            plan: None,
        };
        match ctx.mode {
            NormMode::Eval | NormMode::Running => {
                if !self.state.has_statistics() {
                    return contract("eval-mode normalization before any statistics were gathered");
                }
                Ok((vec![constant(self.state.running())], [0, 0]))
            }
            NormMode::Pinned => match &self.state.last_batch {
                Some(mo) => Ok((vec![constant(mo.clone())], [0, 0])),
                None => contract("pinned normalization without stored batch moments"),
            },
            NormMode::Train { update_running } => {
                let spec = self.spec;
                let (groups, map, batch) = match (spec.kind, ctx.layout) {
                    (NormKind::Batch, Layout::Dual { off_rows }) => {
                        // baseline: each stream normalized by its own moments
                        let plan = MomentPlan::uniform(off_rows, spec.variance);
                        let off = plan.moments(&x.slice_rows(0, off_rows));
                        let on = plan.moments(&x.slice_rows(off_rows, m));
                        let groups = vec![
                            ColumnGroup {
                                start: 0,
                                end: off_rows,
                                moments: off.clone(),
                                inv_std: Vec::new(),
                                plan: Some(plan),
                            },
                            ColumnGroup {
                                start: off_rows,
                                end: m,
                                moments: on,
                                inv_std: Vec::new(),
                                plan: Some(plan),
                            },
                        ];
                        (groups, [0, 1], off)
                    }
                    (kind, layout) => {
                        let plan = match layout {
                            Layout::Dual { off_rows } if kind.is_cross() => {
                                MomentPlan::cross(off_rows, spec.alpha, spec.variance)
                            }
                            _ => {
                                let mode = match spec.variance {
                                    VarianceMode::StreamMeans => VarianceMode::Bessel,
                                    v => v,
                                };
                                MomentPlan::uniform(m, mode)
                            }
                        };
                        let batch = plan.moments(x);
                        let use_running = kind == NormKind::CrossRenorm
                            && self.state.has_statistics()
                            && self.state.step >= spec.renorm_switch_step;
                        let group = if use_running {
                            constant(self.state.running())
                        } else {
                            ColumnGroup {
                                start: 0,
                                end: m,
                                moments: batch.clone(),
                                inv_std: Vec::new(),
                                plan: Some(plan),
                            }
                        };
                        (vec![group], [0, 0], batch)
                    }
                };
                if update_running {
                    running_update(&mut self.state, &batch, spec.momentum)?;
                }
                self.state.last_batch = Some(batch);
                Ok((groups, map))
            }
        }
    }

    pub fn backward(&self, cache: &NormCache, grad_out: &Mat) -> Result<NormGrads> {
        norm_backward(cache, grad_out)
    }
}

/// Per-row standardization across features (population variance).
pub(crate) fn standardize_rows(x: &Mat, spec: &NormSpec) -> (Mat, Vec<f64>) {
    let f = x.cols() as f64;
    let mut out = x.clone();
    let mut inv = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().map(|v| v / f).sum::<f64>();
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / f;
        let s = if spec.mean_only {
            1.0
        } else {
            1.0 / (var + spec.epsilon).sqrt()
        };
        for v in row.iter_mut() {
            *v = (*v - mean) * s;
        }
        inv.push(s);
    }
    (out, inv)
}

/// Exact backward pass of a normalization layer.
///
/// Moments computed from the batch are differentiated through; running or
/// pinned moments are constants.
pub fn norm_backward(cache: &NormCache, grad_out: &Mat) -> Result<NormGrads> {
    if !cache.train {
        return contract("backward through an eval-mode normalization cache");
    }
    if grad_out.shape() != cache.input.shape() {
        return contract(format!(
            "norm backward: grad {:?} vs cache {:?}",
            grad_out.shape(),
            cache.input.shape()
        ));
    }
    let spec = cache.spec;
    let k = grad_out.cols();
    if let CacheStats::Identity = cache.stats {
        return Ok(NormGrads {
            input: grad_out.clone(),
            scale: vec![0.0; k],
            shift: vec![0.0; k],
        });
    }

    let mut grad_scale = vec![0.0; k];
    let mut grad_shift = vec![0.0; k];
    let scaled = spec.affine && !spec.mean_only;
    if spec.affine {
        for r in 0..grad_out.rows() {
            for j in 0..k {
                let g = grad_out.get(r, j);
                grad_shift[j] += g;
                if scaled {
                    grad_scale[j] += g * cache.x_hat.get(r, j);
                }
            }
        }
    }
    // gradient w.r.t. the standardized values
    let mut h = grad_out.clone();
    if scaled {
        for r in 0..h.rows() {
            for (v, s) in h.row_mut(r).iter_mut().zip(&cache.scale) {
                *v *= s;
            }
        }
    }

    let mut dx = Mat::zeros(h.rows(), k);
    match &cache.stats {
        CacheStats::Identity => unreachable!(),
        CacheStats::Rows { inv_std } => {
            let f = k as f64;
            for r in 0..h.rows() {
                let hr = h.row(r);
                let xh = cache.x_hat.row(r);
                let s = inv_std[r];
                let sum_h: f64 = hr.iter().sum();
                let out = dx.row_mut(r);
                if spec.mean_only {
                    for (o, hv) in out.iter_mut().zip(hr) {
                        *o = hv - sum_h / f;
                    }
                } else {
                    let sum_hx: f64 = hr.iter().zip(xh).map(|(a, b)| a * b).sum();
                    // population variance about the row mean; Σ(x − μ) = 0
                    for ((o, hv), xv) in out.iter_mut().zip(hr).zip(xh) {
                        *o = s * (hv - sum_h / f - xv * sum_hx / f);
                    }
                }
            }
        }
        CacheStats::Columns { groups, .. } => {
            for g in groups {
                let rows = g.end - g.start;
                match &g.plan {
                    None => {
                        for r in 0..rows {
                            for j in 0..k {
                                dx.set(g.start + r, j, h.get(g.start + r, j) * g.inv_std[j]);
                            }
                        }
                    }
                    Some(plan) => {
                        let part = cache.input.slice_rows(g.start, g.end);
                        let center = plan.center(&part);
                        for j in 0..k {
                            let sum_h: f64 = (0..rows).map(|i| h.get(g.start + i, j)).sum();
                            if spec.mean_only {
                                for i in 0..rows {
                                    let v = h.get(g.start + i, j) - plan.weight(i) * sum_h;
                                    dx.set(g.start + i, j, v);
                                }
                                continue;
                            }
                            let s = g.inv_std[j];
                            let sum_hx: f64 = (0..rows)
                                .map(|i| h.get(g.start + i, j) * cache.x_hat.get(g.start + i, j))
                                .sum();
                            let dl_dvar = -0.5 * sum_hx * s * s;
                            let dvar = plan.var_grad(&part, j, center[j]);
                            for i in 0..rows {
                                let v = h.get(g.start + i, j) * s - plan.weight(i) * sum_h * s
                                    + dl_dvar * dvar[i];
                                dx.set(g.start + i, j, v);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(NormGrads {
        input: dx,
        scale: grad_scale,
        shift: grad_shift,
    })
}

/// Normalizes an off-policy and an on-policy feature batch in one pass so
/// that both use the same moments (for cross kinds).
pub fn cross_forward_dual(
    f_off: &Mat,
    f_on: &Mat,
    layer: &mut NormLayer,
    mode: NormMode,
) -> Result<(Mat, Mat, NormCache)> {
    if f_off.rows() != f_on.rows() {
        return contract(format!(
            "dual forward needs equal streams, got {} and {} rows",
            f_off.rows(),
            f_on.rows()
        ));
    }
    let n = f_off.rows();
    let stacked = Mat::vstack(&[f_off, f_on])?;
    let (y, cache) = layer.forward(&stacked, NormCtx::new(mode, Layout::Dual { off_rows: n }))?;
    Ok((y.slice_rows(0, n), y.slice_rows(n, 2 * n), cache))
}
