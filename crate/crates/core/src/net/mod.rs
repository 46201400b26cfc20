//! Dense regressor `3a -> 10 -> 10 -> 10 -> 1`, ELU on hidden layers and a
//! linear output, trained on mean absolute error.

mod persist;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sequences::SequenceError;

pub use persist::{load_model, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use train::{
    fit_model, split_indices, train, Dataset, EpochStats, TrainConfig, TrainedModel,
};

pub const HIDDEN_LAYERS: [usize; 3] = [10, 10, 10];

#[derive(Debug, Error)]
pub enum NetError {
    #[error("window length must be at least 1")]
    InvalidWindow,
    #[error("expected {expected} inputs, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training fault at epoch {epoch}, batch {batch}: non-finite loss or parameters")]
    TrainingFault { epoch: usize, batch: usize },
    #[error("invalid training setup: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("model file {path}: unsupported format version {found} (expected {expected})")]
    Version {
        path: String,
        found: String,
        expected: u32,
    },
    #[error("model file {path} is corrupt: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One dense layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(z + self.biases[o]);
        }
    }
}

#[inline]
pub fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

#[inline]
fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

/// Subgradient of `|r|`, zero at the kink.
#[inline]
fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub seed: u64,
}

/// Same shape as a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

impl Gradient {
    fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v *= k);
        }
    }

    /// Flattened in the same order as [`Network::params`].
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
        .collect()
}

struct Trace {
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
    /// Layer inputs: `inputs[0]` is the feature vector, `inputs[l]` the
    /// activated output of layer `l - 1`.
    inputs: Vec<Vec<f64>>,
}

impl Network {
    /// The standard architecture for windows of `a` actions, Glorot-uniform
    /// weights and zero biases.
    pub fn init(a: usize, seed: u64) -> Result<Self, NetError> {
        if a < 1 {
            return Err(NetError::InvalidWindow);
        }
        let mut sizes = vec![3 * a];
        sizes.extend(HIDDEN_LAYERS);
        sizes.push(1);
        Ok(Self::with_sizes(&sizes, seed))
    }

    pub fn with_sizes(sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for v in &mut layer.weights {
                    *v = rng.gen_range(-limit..limit);
                }
                layer
            })
            .collect();
        Self { layers, seed }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            seed: 0,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        s.extend(self.layers.last().map(|l| l.outputs));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Mutable view of the parameter at flat index `i`.
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights[i];
            }
            i -= l.weights.len();
            if i < l.biases.len() {
                return &mut l.biases[i];
            }
            i -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.input_size() {
            return Err(NetError::Dimension {
                expected: self.input_size(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64, NetError> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&h, &mut z);
            if l < last {
                z.iter_mut().for_each(|v| *v = elu(*v));
            }
            std::mem::swap(&mut h, &mut z);
        }
        h[0]
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(&h, &mut z);
            let next = if l < last { z.iter().map(|&v| elu(v)).collect() } else { z.clone() };
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        Trace { pre, inputs }
    }

    /// Backpropagates one row's absolute error, scaled by `weight`, into
    /// `grad`. Returns the prediction.
    fn accumulate(&self, x: &[f64], target: f64, weight: f64, grad: &mut Gradient) -> f64 {
        let trace = self.trace(x);
        let last = self.layers.len() - 1;
        let y_hat = trace.pre[last][0];
        let mut delta = vec![weight * sign(y_hat - target)];
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            let g = &mut grad.layers[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, v)| *gw += d * v);
            }
            if l == 0 {
                break;
            }
            let below = &trace.pre[l - 1];
            delta = (0..layer.inputs)
                .map(|i| {
                    let back: f64 = delta
                        .iter()
                        .enumerate()
                        .map(|(o, d)| layer.weights[o * layer.inputs + i] * d)
                        .sum();
                    back * elu_grad(below[i])
                })
                .collect();
        }
        y_hat
    }

    /// Gradient of the MAE of a single row.
    pub fn row_gradient(&self, x: &[f64], target: f64) -> Result<Gradient, NetError> {
        self.check_input(x)?;
        let mut g = Gradient::zeros_like(self);
        self.accumulate(x, target, 1.0, &mut g);
        Ok(g)
    }

    /// Mean absolute error and its gradient over `rows`.
    pub fn mae_gradient(&self, rows: &[(&[f64], f64)]) -> Result<(f64, Gradient), NetError> {
        let mut g = Gradient::zeros_like(self);
        let mut loss = 0.0;
        for (x, t) in rows {
            self.check_input(x)?;
            let y = self.accumulate(x, *t, 1.0, &mut g);
            loss += (y - t).abs();
        }
        let n = rows.len().max(1) as f64;
        g.scale(1.0 / n);
        Ok((loss / n, g))
    }

    pub fn mae(&self, rows: &[(&[f64], f64)]) -> Result<f64, NetError> {
        let mut loss = 0.0;
        for (x, t) in rows {
            loss += (self.forward(x)? - t).abs();
        }
        Ok(loss / rows.len().max(1) as f64)
    }
}

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Central finite differences on every parameter. Parameters whose
/// perturbation flips the sign of any row's residual sit on the MAE kink and
/// are skipped.
pub fn gradient_check(net: &Network, rows: &[(&[f64], f64)]) -> Result<GradientCheck, NetError> {
    let h = GRAD_CHECK_STEP;
    let (_, analytic) = net.mae_gradient(rows)?;
    let analytic = analytic.flat();
    let mut probe = net.clone();
    let residual_signs = |n: &Network| -> Vec<f64> {
        rows.iter().map(|(x, t)| sign(n.forward_unchecked(x) - t)).collect()
    };
    let base_signs = residual_signs(net);
    let mut out = GradientCheck {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let theta = *probe.param_mut(i);
        *probe.param_mut(i) = theta + h;
        let plus = probe.mae(rows)?;
        let plus_signs = residual_signs(&probe);
        *probe.param_mut(i) = theta - h;
        let minus = probe.mae(rows)?;
        let minus_signs = residual_signs(&probe);
        *probe.param_mut(i) = theta;
        let on_kink = base_signs
            .iter()
            .zip(&plus_signs)
            .zip(&minus_signs)
            .any(|((b, p), m)| *b == 0.0 || b != p || b != m);
        if on_kink {
            out.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let scale = a.abs().max(numeric.abs()).max(1e-7);
        out.max_relative_error = out.max_relative_error.max((a - numeric).abs() / scale);
        out.checked += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent forward pass with explicit index loops.
    #[allow(clippy::needless_range_loop)]
    fn naive_forward(net: &Network, x: &[f64]) -> f64 {
        let mut h: Vec<f64> = x.to_vec();
        for (l, layer) in net.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.outputs];
            for o in 0..layer.outputs {
                let mut s = layer.biases[o];
                for i in 0..layer.inputs {
                    s += layer.weights[o * layer.inputs + i] * h[i];
                }
                next[o] = if l + 1 < net.layers.len() {
                    if s > 0.0 {
                        s
                    } else {
                        s.exp() - 1.0
                    }
                } else {
                    s
                };
            }
            h = next;
        }
        h[0]
    }

    fn rows(n: usize, width: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..width).map(|_| rng.gen_range(0.0..1.0)).collect();
                let t = rng.gen_range(-1.0..1.0);
                (x, t)
            })
            .collect()
    }

    fn borrow(rows: &[(Vec<f64>, f64)]) -> Vec<(&[f64], f64)> {
        rows.iter().map(|(x, t)| (x.as_slice(), *t)).collect()
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = Network::init(2, 9).unwrap();
        assert_eq!(a, Network::init(2, 9).unwrap());
        assert_ne!(a, Network::init(2, 10).unwrap());
        assert_eq!(a.sizes(), vec![6, 10, 10, 10, 1]);
        assert_eq!((a.layers[0].outputs, a.layers[0].inputs), (10, 6));
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|b| *b == 0.0)));
        assert!(Network::init(0, 1).is_err());
    }

    #[test]
    fn first_layer_within_glorot_bound() {
        let net = Network::init(2, 1).unwrap();
        let limit = (6.0f64 / 16.0).sqrt();
        assert!((limit - 0.612).abs() < 1e-3);
        assert!(net.layers[0].weights.iter().all(|w| w.abs() <= limit));
        let limit_hidden = (6.0f64 / 20.0).sqrt();
        assert!(net.layers[1].weights.iter().all(|w| w.abs() <= limit_hidden));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(&[6, 10, 10, 10, 1]);
        assert_eq!(net.forward(&[1.0, -3.0, 2.0, 0.5, 9.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_unit_elu() {
        let mut net = Network::zeros(&[1, 1, 1]);
        net.layers[0].weights[0] = 1.0;
        net.layers[1].weights[0] = 1.0;
        let out = net.forward(&[-1.0]).unwrap();
        assert!((out - (f64::exp(-1.0) - 1.0)).abs() < 1e-15);
        assert!((out + 0.632).abs() < 1e-3);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let net = Network::init(3, 77).unwrap();
        for (x, _) in rows(20, 9, 3) {
            let a = net.forward(&x).unwrap();
            let b = naive_forward(&net, &x);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = Network::init(2, 1).unwrap();
        assert!(matches!(net.forward(&[1.0; 9]), Err(NetError::Dimension { expected: 6, got: 9 })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let net = Network::init(2, seed).unwrap();
            let data = rows(10, 6, 100 + seed);
            let check = gradient_check(&net, &borrow(&data)).unwrap();
            assert!(check.max_relative_error < 1e-4, "seed {seed}: {check:?}");
            assert!(check.checked > net.n_params() / 2);
        }
    }

    #[test]
    fn zero_network_bias_gradient_is_minus_sign_of_target() {
        let net = Network::zeros(&[2, 3, 1]);
        for t in [0.7, -0.2] {
            let g = net.row_gradient(&[0.3, 0.4], t).unwrap();
            assert_eq!(g.layers[1].biases[0], -f64::signum(t));
        }
        // exact fit: subgradient zero everywhere
        let g = net.row_gradient(&[0.3, 0.4], 0.0).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duplicate_rows_have_identical_gradients() {
        let net = Network::init(1, 4).unwrap();
        let x = [0.2, 0.5, 0.9];
        assert_eq!(net.row_gradient(&x, 0.3).unwrap(), net.row_gradient(&x, 0.3).unwrap());
        let (_, one) = net.mae_gradient(&[(&x, 0.3)]).unwrap();
        let (_, two) = net.mae_gradient(&[(&x, 0.3), (&x, 0.3)]).unwrap();
        for (p, q) in one.flat().iter().zip(two.flat()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn param_indexing_covers_every_parameter() {
        let mut net = Network::init(1, 2).unwrap();
        let n = net.n_params();
        assert_eq!(n, 3 * 10 + 10 + 10 * 10 + 10 + 10 * 10 + 10 + 10 + 1);
        for i in 0..n {
            *net.param_mut(i) = i as f64;
        }
        assert_eq!(net.params(), (0..n).map(|i| i as f64).collect::<Vec<_>>());
    }
}
