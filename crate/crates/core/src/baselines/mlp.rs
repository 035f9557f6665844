use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense layer, `weights` row-major `(outputs, inputs)`.
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

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.biases[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

/// Affine maps of the inputs onto `[-1, 1]` and the output scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_min: f64,
    pub x_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub y_scale: f64,
}

impl Normalization {
    fn unit(v: f64, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            2.0 * (v - lo) / (hi - lo) - 1.0
        } else {
            0.0
        }
    }

    fn inputs(&self, x: f64, t: f64) -> [f64; 2] {
        [Self::unit(x, self.x_min, self.x_max), Self::unit(t, self.t_min, self.t_max)]
    }
}

/// `y_scale * softplus(W_out tanh(... tanh(W_1 [x, t] + b_1) ...) + b_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateNet {
    pub layers: Vec<Layer>,
    pub normalization: Normalization,
}

impl SurrogateNet {
    /// All weights zero, inputs `[-1, 1]` mapped to themselves, unit output scale.
    pub fn zeros(hidden_layers: usize, width: usize) -> Self {
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut inputs = 2;
        for _ in 0..hidden_layers {
            layers.push(Layer::zeros(inputs, width));
            inputs = width;
        }
        layers.push(Layer::zeros(inputs, 1));
        Self {
            layers,
            normalization: Normalization {
                x_min: -1.0,
                x_max: 1.0,
                t_min: -1.0,
                t_max: 1.0,
                y_scale: 1.0,
            },
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Forward pass keeping every layer's activations (inputs first) and the
    /// output pre-activation.
    fn forward(&self, x: f64, t: f64, acts: &mut Vec<Vec<f64>>) -> (f64, f64) {
        acts.resize(self.layers.len(), Vec::new());
        acts[0].clear();
        acts[0].extend_from_slice(&self.normalization.inputs(x, t));
        let mut buf = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&acts[k], &mut buf);
            if k < last {
                acts[k + 1].clear();
                acts[k + 1].extend(buf.iter().map(|z| z.tanh()));
            }
        }
        let z = buf[0];
        (self.normalization.y_scale * softplus(z), z)
    }
}

pub fn surrogate_eval(net: &SurrogateNet, x: f64, t: f64) -> f64 {
    net.forward(x, t, &mut Vec::new()).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSettings {
    pub hidden_layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            width: 4,
            epochs: 20_000,
            learning_rate: 1e-3,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSurrogate {
    pub net: SurrogateNet,
    /// Mean squared error over the whole dataset after training.
    pub mse: f64,
}

/// Flat views of parameters and gradients in layer order (weights, biases).
fn params_mut(net: &mut SurrogateNet) -> impl Iterator<Item = &mut f64> {
    net.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
}

fn dataset_mse(net: &SurrogateNet, data: &[Sample]) -> f64 {
    let mut acts = Vec::new();
    data.iter().map(|s| (net.forward(s.x, s.t, &mut acts).0 - s.value).powi(2)).sum::<f64>() / data.len() as f64
}

#[derive(Default)]
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

/// Adds `weight * d(y - value)^2 / dparams` for one sample.
fn accumulate_gradient(net: &SurrogateNet, s: Sample, weight: f64, grad: &mut [f64], ws: &mut Workspace) {
    let (y, z) = net.forward(s.x, s.t, &mut ws.acts);
    let Workspace { acts, delta, next } = ws;
    delta.clear();
    delta.push(2.0 * weight * (y - s.value) * net.normalization.y_scale * sigmoid(z));
    // walk layers backwards; `offset` marks each layer's slot in `grad`
    let mut offset = grad.len();
    for k in (0..net.layers.len()).rev() {
        let layer = &net.layers[k];
        offset -= layer.weights.len() + layer.biases.len();
        let input = &acts[k];
        for o in 0..layer.outputs {
            for i in 0..layer.inputs {
                grad[offset + o * layer.inputs + i] += delta[o] * input[i];
            }
            grad[offset + layer.weights.len() + o] += delta[o];
        }
        if k == 0 {
            break;
        }
        next.clear();
        for i in 0..layer.inputs {
            let back: f64 = (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + i] * delta[o]).sum();
            next.push(back * (1.0 - input[i] * input[i]));
        }
        std::mem::swap(delta, next);
    }
}

/// Minibatch Adam on the mean squared error, Glorot-uniform initialization.
pub fn train_surrogate(data: &[Sample], settings: &SurrogateSettings, seed: u64) -> Result<TrainedSurrogate> {
    if data.is_empty() {
        return Err(Error::config("surrogate training needs at least one sample"));
    }
    if settings.width == 0 || settings.batch_size == 0 || !(settings.learning_rate > 0.0) {
        return Err(Error::config(format!("invalid surrogate settings {settings:?}")));
    }
    if data.iter().any(|s| !(s.x.is_finite() && s.t.is_finite() && s.value.is_finite())) {
        return Err(Error::config("surrogate samples must be finite"));
    }
    let range = |f: fn(&Sample) -> f64| {
        data.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x_min, x_max) = range(|s| s.x);
    let (t_min, t_max) = range(|s| s.t);
    let peak = data.iter().map(|s| s.value.abs()).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = SurrogateNet::zeros(settings.hidden_layers, settings.width);
    net.normalization = Normalization {
        x_min,
        x_max,
        t_min,
        t_max,
        y_scale: if peak > 0.0 { peak } else { 1.0 },
    };
    for layer in &mut net.layers {
        let a = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.gen_range(-a..a);
        }
    }

    let np = net.num_parameters();
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let mut grad = vec![0.0; np];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut ws = Workspace::default();

    for _ in 0..settings.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(settings.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                accumulate_gradient(&net, data[idx], 1.0 / batch.len() as f64, &mut grad, &mut ws);
            }
            step += 1;
            let (c1, c2) = (1.0 - b1.powi(step), 1.0 - b2.powi(step));
            for (k, p) in params_mut(&mut net).enumerate() {
                m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
                v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
                *p -= settings.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
    }
    let mse = dataset_mse(&net, data);
    if !mse.is_finite() {
        return Err(Error::numerical("surrogate training diverged"));
    }
    Ok(TrainedSurrogate { net, mse })
}
