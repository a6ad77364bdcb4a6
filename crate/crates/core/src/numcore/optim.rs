use crate::error::{config, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Adam,
    RmsProp,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::RmsProp => "rmsprop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adam" => Some(OptimizerKind::Adam),
            "rmsprop" => Some(OptimizerKind::RmsProp),
            _ => None,
        }
    }
}

/// Optimizer hyperparameters. Defaults: Adam β₁=0.9, β₂=0.999; RMSprop
/// decay 0.99; ε=1e-8 for both.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rms_decay: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            rms_decay: 0.99,
            eps: 1e-8,
        }
    }

    pub fn rmsprop(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::RmsProp,
            ..Self::adam(lr)
        }
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Self::adam(lr),
            OptimizerKind::RmsProp => Self::rmsprop(lr),
        }
    }
}

/// Optimizer accumulators for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub config: OptimizerConfig,
    pub step: u64,
    /// First moments (Adam only).
    pub first: Vec<Vec<f64>>,
    /// Second moments (Adam) or squared-gradient averages (RMSprop).
    pub second: Vec<Vec<f64>>,
}

impl OptState {
    pub fn new(config: OptimizerConfig) -> Self {
        OptState {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// One update of every parameter tensor. A non-finite gradient refuses
    /// the whole step and leaves parameters and accumulators untouched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return config(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return config(format!(
                    "tensor {}: {} params vs {} grads",
                    i,
                    p.len(),
                    g.len()
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in tensor {}",
                    i
                )));
            }
        }
        if self.second.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = params.iter().map(|p| vec![0.0; p.len()]).collect();
        } else if self.second.len() != params.len()
            || self
                .second
                .iter()
                .zip(params.iter())
                .any(|(s, p)| s.len() != p.len())
        {
            return config("parameter shapes changed between optimizer steps");
        }
        self.step += 1;
        let c = self.config;
        match c.kind {
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for i in 0..p.len() {
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    }
                }
            }
            OptimizerKind::RmsProp => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.second) {
                    for i in 0..p.len() {
                        v[i] = c.rms_decay * v[i] + (1.0 - c.rms_decay) * g[i] * g[i];
                        p[i] -= c.lr * g[i] / (v[i].sqrt() + c.eps);
                    }
                }
            }
        }
        Ok(())
    }
}
