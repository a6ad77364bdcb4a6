//! Multilayer perceptron with explicit per-layer forward/backward passes.
//!
//! Layout of one hidden layer: `z = x·W + b`, `a = act(z)`, then an optional
//! normalization of `a`. A network may also normalize its raw input. The
//! forward pass returns a cache holding every intermediate the backward pass
//! reads; caches are tied to the parameter version they were produced with.
//!
//! Trailing input columns may be routed past the first layer ("late
//! inputs"): they skip the input normalization and are concatenated to the
//! input of the second layer.

use rand::Rng;

use super::mat::{mat_mul, mat_mul_nt, mat_mul_tn, Mat};
use crate::error::{config, contract, Error, Result};
use crate::norm::{self, NormCache, NormCtx, NormKind, NormLayer, NormMode, NormSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// A dense layer followed by an activation and an optional normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `in × out`.
    pub weight: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub norm: Option<NormLayer>,
}

impl Dense {
    pub fn new(weight: Mat, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return config(format!(
                "bias length {} vs {} outputs",
                bias.len(),
                weight.cols()
            ));
        }
        Ok(Dense {
            weight,
            bias,
            activation,
            norm: None,
        })
    }

    pub fn with_norm(mut self, spec: NormSpec) -> Result<Self> {
        self.norm = match spec.kind {
            NormKind::None => None,
            _ => Some(NormLayer::new(spec, self.weight.cols())?),
        };
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Architecture description used to initialize an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Normalization after every hidden activation.
    pub norm: NormSpec,
    /// Also normalize the raw input (not allowed for layer normalization).
    pub input_norm: bool,
    /// Trailing columns of the `input_dim` inputs that join at the second
    /// layer instead of the first.
    pub late_inputs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub input_norm: Option<NormLayer>,
    pub layers: Vec<Dense>,
    late_inputs: usize,
    version: u64,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Mat,
    z: Mat,
    a: Mat,
    norm: Option<NormCache>,
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    version: u64,
    train: bool,
    input_norm: Option<NormCache>,
    layers: Vec<LayerCache>,
}

impl MlpCache {
    /// Caches of every normalization layer visited, input first.
    pub fn norm_caches(&self) -> impl Iterator<Item = &NormCache> {
        self.input_norm
            .iter()
            .chain(self.layers.iter().filter_map(|l| l.norm.as_ref()))
    }

    /// Output of the last hidden layer (after its normalization, if any):
    /// the features the output layer is linear in.
    pub fn penultimate(&self) -> Option<&Mat> {
        let n = self.layers.len();
        if n < 2 {
            return None;
        }
        Some(&self.layers[n - 1].input)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormParamGrads {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub weight: Mat,
    pub bias: Vec<f64>,
    pub norm: Option<NormParamGrads>,
}

/// Gradients of every parameter plus the gradient w.r.t. the input.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub input: Mat,
    pub input_norm: Option<NormParamGrads>,
    pub layers: Vec<DenseGrads>,
}

impl MlpGrads {
    /// Parameter gradients in the order of [`Mlp::params_mut`].
    pub fn flat(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(n) = &self.input_norm {
            out.push(&n.scale);
            out.push(&n.shift);
        }
        for l in &self.layers {
            out.push(l.weight.data());
            out.push(&l.bias);
            if let Some(n) = &l.norm {
                out.push(&n.scale);
                out.push(&n.shift);
            }
        }
        out
    }

    /// Elementwise accumulation of another gradient of the same network.
    pub fn accumulate(&mut self, other: &MlpGrads) {
        fn add(a: &mut [f64], b: &[f64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        if let (Some(a), Some(b)) = (&mut self.input_norm, &other.input_norm) {
            add(&mut a.scale, &b.scale);
            add(&mut a.shift, &b.shift);
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            add(a.weight.data_mut(), b.weight.data());
            add(&mut a.bias, &b.bias);
            if let (Some(x), Some(y)) = (&mut a.norm, &b.norm) {
                add(&mut x.scale, &y.scale);
                add(&mut x.shift, &y.shift);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|p| p.iter().all(|v| v.is_finite())) && self.input.is_finite()
    }
}

impl Mlp {
    /// Assembles a network from explicit layers, checking that dimensions
    /// chain and that normalizations sit where they may.
    pub fn from_layers(input_norm: Option<NormLayer>, layers: Vec<Dense>) -> Result<Self> {
        Mlp::with_late_inputs(input_norm, layers, 0)
    }

    /// [`Mlp::from_layers`] where the last `late_inputs` input columns feed
    /// the second layer.
    pub fn with_late_inputs(
        input_norm: Option<NormLayer>,
        layers: Vec<Dense>,
        late_inputs: usize,
    ) -> Result<Self> {
        if layers.is_empty() {
            return config("an MLP needs at least one layer");
        }
        if late_inputs > 0 && layers.len() < 2 {
            return config("late inputs need a second layer");
        }
        for (i, w) in layers.windows(2).enumerate() {
            let extra = if i == 0 { late_inputs } else { 0 };
            if w[0].output_dim() + extra != w[1].input_dim() {
                return config(format!(
                    "layer dimensions do not chain: {} + {} -> {}",
                    w[0].output_dim(),
                    extra,
                    w[1].input_dim()
                ));
            }
        }
        if let Some(n) = &input_norm {
            if n.spec.kind == NormKind::Layer {
                return config("layer normalization is never applied to the input");
            }
            if n.width() != layers[0].input_dim() {
                return config("input normalization width does not match the input");
            }
        }
        for l in &layers {
            if let Some(n) = &l.norm {
                if n.width() != l.output_dim() {
                    return config("normalization width does not match its layer");
                }
            }
        }
        Ok(Mlp {
            input_norm,
            layers,
            late_inputs,
            version: 0,
        })
    }

    /// Random initialization: weights and biases uniform in `±1/√fan_in`.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        spec.norm.validate()?;
        if spec.late_inputs >= spec.input_dim || (spec.late_inputs > 0 && spec.hidden.is_empty()) {
            return config(format!(
                "{} late inputs out of {} with {} hidden layers",
                spec.late_inputs,
                spec.input_dim,
                spec.hidden.len()
            ));
        }
        let early = spec.input_dim - spec.late_inputs;
        let mut dims = vec![early];
        dims.extend(&spec.hidden);
        dims.push(spec.output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let fan_in = w[0] + if i == 1 { spec.late_inputs } else { 0 };
            let fan_out = w[1];
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = Mat::new(
                fan_in,
                fan_out,
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
            )?;
            let bias = (0..fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let last = i == dims.len() - 2;
            let act = if last {
                spec.output_activation
            } else {
                spec.hidden_activation
            };
            let mut dense = Dense::new(weight, bias, act)?;
            if !last {
                dense = dense.with_norm(spec.norm)?;
            }
            layers.push(dense);
        }
        let input_norm = if spec.input_norm && spec.norm.kind != NormKind::None {
            if spec.norm.kind == NormKind::Layer {
                return config("layer normalization is never applied to the input");
            }
            Some(NormLayer::new(spec.norm, early)?)
        } else {
            None
        };
        Mlp::with_late_inputs(input_norm, layers, spec.late_inputs)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim() + self.late_inputs
    }

    pub fn late_inputs(&self) -> usize {
        self.late_inputs
    }

    /// Splits an input into the columns for the first layer and the late
    /// columns.
    fn split_input(&self, x: &Mat) -> Result<(Mat, Option<Mat>)> {
        if self.late_inputs == 0 {
            return Ok((x.clone(), None));
        }
        let early = self.layers[0].input_dim();
        Ok((x.slice_cols(0, early), Some(x.slice_cols(early, x.cols()))))
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Monotone counter bumped by every parameter mutation.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn norm_layers(&self) -> impl Iterator<Item = &NormLayer> {
        self.input_norm
            .iter()
            .chain(self.layers.iter().filter_map(|l| l.norm.as_ref()))
    }

    pub fn norm_layers_mut(&mut self) -> impl Iterator<Item = &mut NormLayer> {
        self.input_norm
            .iter_mut()
            .chain(self.layers.iter_mut().filter_map(|l| l.norm.as_mut()))
    }

    pub fn forward(&mut self, x: &Mat, ctx: NormCtx) -> Result<(Mat, MlpCache)> {
        if x.cols() != self.input_dim() {
            return config(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            ));
        }
        let (x, late) = self.split_input(x)?;
        let (mut h, input_norm) = match &mut self.input_norm {
            Some(n) => {
                let (y, c) = n.forward(&x, ctx).map_err(|e| overflow_at(e, 0))?;
                (y, Some(c))
            }
            None => (x, None),
        };
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if i == 1 {
                if let Some(l) = &late {
                    h = Mat::hstack(&h, l)?;
                }
            }
            let mut z = mat_mul(&h, &layer.weight)?;
            z.add_row_broadcast(&layer.bias)?;
            let act = layer.activation;
            let a = z.map(|v| act.apply(v));
            if !a.is_finite() {
                return Err(Error::NumericOverflow { layer: i });
            }
            let (out, norm) = match &mut layer.norm {
                Some(n) => {
                    let (y, c) = n.forward(&a, ctx).map_err(|e| overflow_at(e, i))?;
                    (y, Some(c))
                }
                None => (a.clone(), None),
            };
            caches.push(LayerCache {
                input: h,
                z,
                a,
                norm,
            });
            h = out;
        }
        Ok((
            h,
            MlpCache {
                version: self.version,
                train: !matches!(ctx.mode, NormMode::Eval),
                input_norm,
                layers: caches,
            },
        ))
    }

    /// Eval-mode forward that leaves the network untouched.
    pub fn predict(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.input_dim() {
            return config(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            ));
        }
        let (x, late) = self.split_input(x)?;
        let mut h = match &self.input_norm {
            Some(n) => eval_norm(n, &x)?,
            None => x,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            if i == 1 {
                if let Some(l) = &late {
                    h = Mat::hstack(&h, l)?;
                }
            }
            let mut z = mat_mul(&h, &layer.weight)?;
            z.add_row_broadcast(&layer.bias)?;
            let act = layer.activation;
            let a = z.map(|v| act.apply(v));
            if !a.is_finite() {
                return Err(Error::NumericOverflow { layer: i });
            }
            h = match &layer.norm {
                Some(n) => eval_norm(n, &a)?,
                None => a,
            };
        }
        Ok(h)
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: &Mat) -> Result<MlpGrads> {
        if cache.version != self.version || cache.layers.len() != self.layers.len() {
            return contract("stale or mismatched forward cache");
        }
        if !cache.train {
            return contract("backward through an eval-mode forward cache");
        }
        let last = &cache.layers[cache.layers.len() - 1];
        if grad_out.shape() != last.a.shape() {
            return contract(format!(
                "output gradient {:?} vs output {:?}",
                grad_out.shape(),
                last.a.shape()
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        let mut late_grad = None;
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            if i == 0 && self.late_inputs > 0 {
                let early = self.layers[0].output_dim();
                late_grad = Some(g.slice_cols(early, g.cols()));
                g = g.slice_cols(0, early);
            }
            let norm = match &lc.norm {
                Some(nc) => {
                    let ng = norm::norm_backward(nc, &g)?;
                    g = ng.input;
                    Some(NormParamGrads {
                        scale: ng.scale,
                        shift: ng.shift,
                    })
                }
                None => None,
            };
            let act = layer.activation;
            let mut dz = g;
            for ((d, z), a) in dz.data_mut().iter_mut().zip(lc.z.data()).zip(lc.a.data()) {
                *d *= act.derivative(*z, *a);
            }
            let weight = mat_mul_tn(&lc.input, &dz)?;
            let bias = dz.col_sums();
            g = mat_mul_nt(&dz, &layer.weight)?;
            grads.push(DenseGrads { weight, bias, norm });
        }
        grads.reverse();
        let input_norm = match &cache.input_norm {
            Some(nc) => {
                let ng = norm::norm_backward(nc, &g)?;
                g = ng.input;
                Some(NormParamGrads {
                    scale: ng.scale,
                    shift: ng.shift,
                })
            }
            None => None,
        };
        if let Some(l) = &late_grad {
            g = Mat::hstack(&g, l)?;
        }
        Ok(MlpGrads {
            input: g,
            input_norm,
            layers: grads,
        })
    }

    /// Mutable views of every trainable parameter. Bumps the version, so
    /// caches from earlier forwards become stale.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(n) = &mut self.input_norm {
            out.push(&mut n.state.scale);
            out.push(&mut n.state.shift);
        }
        for l in &mut self.layers {
            out.push(l.weight.data_mut());
            out.push(&mut l.bias);
            if let Some(n) = &mut l.norm {
                out.push(&mut n.state.scale);
                out.push(&mut n.state.shift);
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(n) = &self.input_norm {
            out.push(&n.state.scale);
            out.push(&n.state.shift);
        }
        for l in &self.layers {
            out.push(l.weight.data());
            out.push(&l.bias);
            if let Some(n) = &l.norm {
                out.push(&n.state.scale);
                out.push(&n.state.shift);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) -> MlpGrads {
        let zn = |n: &NormLayer| NormParamGrads {
            scale: vec![0.0; n.width()],
            shift: vec![0.0; n.width()],
        };
        MlpGrads {
            input: Mat::zeros(0, self.input_dim()),
            input_norm: self.input_norm.as_ref().map(zn),
            layers: self
                .layers
                .iter()
                .map(|l| DenseGrads {
                    weight: Mat::zeros(l.input_dim(), l.output_dim()),
                    bias: vec![0.0; l.output_dim()],
                    norm: l.norm.as_ref().map(zn),
                })
                .collect(),
        }
    }
}

fn overflow_at(e: Error, layer: usize) -> Error {
    match e {
        Error::Numeric(_) => Error::NumericOverflow { layer },
        other => other,
    }
}

fn eval_norm(n: &NormLayer, x: &Mat) -> Result<Mat> {
    match n.spec.kind {
        NormKind::None => Ok(x.clone()),
        NormKind::Layer => norm::layer_norm(x, &n.spec, &n.state),
        _ => {
            if !n.state.has_statistics() {
                return contract("eval-mode normalization before any statistics were gathered");
            }
            norm::normalize_apply(
                x,
                &n.state.running_mean,
                &n.state.running_var,
                &n.spec,
                &n.state,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng::seeded;

    fn identity_net(act: Activation) -> Mlp {
        let d = Dense::new(Mat::identity(2), vec![0.0, 0.0], act).unwrap();
        Mlp::from_layers(None, vec![d]).unwrap()
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut net = identity_net(Activation::Identity);
        let x = Mat::from_rows(&[[1.0, 2.0]]).unwrap();
        let (y, _) = net.forward(&x, NormCtx::train()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn relu_clamps() {
        let mut net = identity_net(Activation::Relu);
        let (y, _) = net
            .forward(&Mat::from_rows(&[[-1.0, 2.0]]).unwrap(), NormCtx::train())
            .unwrap();
        assert_eq!(y, Mat::from_rows(&[[0.0, 2.0]]).unwrap());
    }

    #[test]
    fn two_layer_tanh_matches_scalar_evaluation() {
        let l1 = Dense::new(
            Mat::from_rows(&[[0.1, -0.2], [0.3, 0.05]]).unwrap(),
            vec![0.01, -0.02],
            Activation::Tanh,
        )
        .unwrap();
        let l2 = Dense::new(
            Mat::from_rows(&[[0.4], [-0.6]]).unwrap(),
            vec![0.1],
            Activation::Tanh,
        )
        .unwrap();
        let mut net = Mlp::from_layers(None, vec![l1, l2]).unwrap();
        let (y, _) = net
            .forward(&Mat::from_rows(&[[0.5, -1.0]]).unwrap(), NormCtx::train())
            .unwrap();
        let h1 = (0.5f64 * 0.1 + -1.0 * 0.3 + 0.01).tanh();
        let h2 = (0.5f64 * -0.2 + -1.0 * 0.05 - 0.02).tanh();
        let expect = (h1 * 0.4 + h2 * -0.6 + 0.1).tanh();
        assert!((y.get(0, 0) - expect).abs() < 1e-15);
    }

    #[test]
    fn identity_net_input_gradient() {
        let mut net = identity_net(Activation::Identity);
        let x = Mat::from_rows(&[[0.3, -0.7], [1.0, 2.0]]).unwrap();
        let (_, cache) = net.forward(&x, NormCtx::train()).unwrap();
        let g = Mat::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        assert_eq!(net.backward(&cache, &g).unwrap().input, g);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let spec = MlpSpec {
            input_dim: 3,
            hidden: vec![5, 4],
            output_dim: 2,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            norm: NormSpec::cross(0.5),
            input_norm: true,
            late_inputs: 0,
        };
        let mut net = Mlp::init(&spec, &mut seeded(3, 0)).unwrap();
        let x = Mat::new(6, 3, (0..18).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let (_, cache) = net
            .forward(
                &x,
                NormCtx::new(NormMode::TRAIN, crate::norm::Layout::Dual { off_rows: 3 }),
            )
            .unwrap();
        let grads = net.backward(&cache, &Mat::zeros(6, 2)).unwrap();
        assert!(grads.flat().iter().all(|p| p.iter().all(|v| *v == 0.0)));
        assert!(grads.input.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = identity_net(Activation::Tanh);
        let x = Mat::from_rows(&[[0.1, 0.2]]).unwrap();
        let (_, cache) = net.forward(&x, NormCtx::train()).unwrap();
        net.params_mut()[0][0] += 1.0;
        assert!(matches!(
            net.backward(&cache, &Mat::zeros(1, 2)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn overflow_reports_layer() {
        let big = Dense::new(Mat::filled(2, 2, 1e300), vec![0.0; 2], Activation::Identity).unwrap();
        let big2 = big.clone();
        let mut net = Mlp::from_layers(None, vec![big, big2]).unwrap();
        let r = net.forward(&Mat::filled(1, 2, 1e10), NormCtx::train());
        assert_eq!(r.unwrap_err(), Error::NumericOverflow { layer: 0 });
    }

    #[test]
    fn dimensions_must_chain() {
        let a = Dense::new(Mat::zeros(2, 3), vec![0.0; 3], Activation::Relu).unwrap();
        let b = Dense::new(Mat::zeros(2, 1), vec![0.0; 1], Activation::Relu).unwrap();
        assert!(Mlp::from_layers(None, vec![a, b]).is_err());
    }

    #[test]
    fn layer_norm_refused_on_input() {
        let spec = MlpSpec {
            input_dim: 3,
            hidden: vec![4],
            output_dim: 1,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            norm: NormSpec::layer(),
            input_norm: true,
            late_inputs: 0,
        };
        assert!(Mlp::init(&spec, &mut seeded(0, 0)).is_err());
    }

    #[test]
    fn predict_agrees_with_eval_forward() {
        let spec = MlpSpec {
            input_dim: 3,
            hidden: vec![4, 4],
            output_dim: 1,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            norm: NormSpec::batch(),
            input_norm: true,
            late_inputs: 0,
        };
        let mut net = Mlp::init(&spec, &mut seeded(1, 0)).unwrap();
        let x = Mat::new(5, 3, (0..15).map(|v| (v as f64).cos()).collect()).unwrap();
        net.forward(&x, NormCtx::train()).unwrap();
        let (a, _) = net.forward(&x, NormCtx::eval()).unwrap();
        let b = net.predict(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, net.predict(&x).unwrap());
    }
}
