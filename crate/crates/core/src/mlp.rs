//! Sigmoid multilayer perceptron with one or two hidden layers, trained by
//! online gradient descent on squared error against one-hot targets.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{label_from_outputs, one_hot, LabeledDataset};
use crate::error::{check_dim, invalid, Result, WeldError};
use crate::normalize::ZScore;
use crate::synth::derive_seed;

/// Training stops once the epoch mean squared error falls below this.
pub const EARLY_STOP_MSE: f64 = 1e-4;
/// Lowest learning rate the decay schedule reaches.
pub const LEARNING_RATE_FLOOR: f64 = 0.01;
/// Step used by [`gradient_check`].
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;
/// Denominator floor for relative gradient discrepancies, so parameters
/// whose gradient is essentially zero are compared absolutely.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-4;

/// Learning rate used during epoch `epoch` (0-based). The floor never lifts
/// a rate that starts below it.
pub fn scheduled_rate(initial: f64, decrement: f64, epoch: usize) -> f64 {
    let floor = LEARNING_RATE_FLOOR.min(initial);
    (initial - epoch as f64 * decrement).max(floor)
}

/// Layer sizes from input to output, e.g. `50-25-25-2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct MlpTopology(Vec<usize>);

impl MlpTopology {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if !(3..=4).contains(&sizes.len()) {
            return Err(invalid(format!(
                "topology needs 1 or 2 hidden layers, got {} layer sizes",
                sizes.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(invalid("layer sizes must be at least 1"));
        }
        if *sizes.last().unwrap() != 2 {
            return Err(invalid("output layer must have 2 units"));
        }
        Ok(Self(sizes))
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    pub fn input_dim(&self) -> usize {
        self.0[0]
    }
}

impl TryFrom<Vec<usize>> for MlpTopology {
    type Error = WeldError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MlpTopology> for Vec<usize> {
    fn from(t: MlpTopology) -> Self {
        t.0
    }
}

impl fmt::Display for MlpTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

impl FromStr for MlpTopology {
    type Err = WeldError;
    fn from_str(s: &str) -> Result<Self> {
        let sizes = s
            .split('-')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| invalid(format!("bad topology {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sizes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Epochs over the training set.
    pub iterations: usize,
    pub initial_learning_rate: f64,
    pub learning_rate_decrement: f64,
    /// Stop once the epoch MSE drops below this; `None` always runs every
    /// epoch.
    pub early_stop_mse: Option<f64>,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            initial_learning_rate: 0.3,
            learning_rate_decrement: 0.001,
            early_stop_mse: Some(EARLY_STOP_MSE),
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("iterations must be positive"));
        }
        if !(self.initial_learning_rate > 0.0 && self.initial_learning_rate.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        if !(self.learning_rate_decrement >= 0.0 && self.learning_rate_decrement.is_finite()) {
            return Err(invalid("learning rate decrement must be non-negative"));
        }
        if self.early_stop_mse.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
            return Err(invalid("early-stop threshold must be non-negative"));
        }
        Ok(())
    }
}

/// Fully connected layer; `weights[o * inputs + i]` connects input `i` to
/// output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[o];
            *y = sigmoid(z);
        }
    }

    pub fn weight(&self, input: usize, output: usize) -> f64 {
        self.weights[output * self.inputs + input]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub topology: MlpTopology,
    pub layers: Vec<DenseLayer>,
    pub normalization: ZScore,
    pub training_seconds: f64,
    /// Epoch MSE of the last training epoch; `None` before training.
    pub final_loss: Option<f64>,
    pub epochs_run: usize,
}

/// Per-epoch training history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MlpTrace {
    pub epoch_mse: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Weights uniform in ±1/√fan_in, zero biases, identity normalization.
pub fn init_mlp(topology: &MlpTopology, seed: u64) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = topology
        .sizes()
        .windows(2)
        .map(|w| {
            let (inputs, outputs) = (w[0], w[1]);
            let bound = 1.0 / (inputs as f64).sqrt();
            DenseLayer {
                inputs,
                outputs,
                weights: (0..inputs * outputs)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect(),
                biases: vec![0.0; outputs],
            }
        })
        .collect();
    MlpModel {
        topology: topology.clone(),
        layers,
        normalization: ZScore::identity(topology.input_dim()),
        training_seconds: 0.0,
        final_loss: None,
        epochs_run: 0,
    }
}

/// Activations of every layer, input first.
struct Activations(Vec<Vec<f64>>);

impl Activations {
    fn for_model(model: &MlpModel) -> Self {
        Self(model.topology.sizes().iter().map(|&n| vec![0.0; n]).collect())
    }

    fn output(&self) -> [f64; 2] {
        let o = self.0.last().unwrap();
        [o[0], o[1]]
    }
}

impl MlpModel {
    /// Forward pass on an already normalized input.
    fn propagate(&self, z: &[f64], acts: &mut Activations) {
        acts.0[0].copy_from_slice(z);
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.0.split_at_mut(l + 1);
            layer.forward_into(&done[l], &mut rest[0]);
        }
    }

    /// Per-sample loss gradient, laid out like `layers` (weights, biases).
    fn backprop(&self, acts: &Activations, target: [f64; 2], grads: &mut [(Vec<f64>, Vec<f64>)], deltas: &mut [Vec<f64>]) {
        let n = self.layers.len();
        let out = acts.0.last().unwrap();
        for (k, d) in deltas[n - 1].iter_mut().enumerate() {
            *d = (out[k] - target[k]) * out[k] * (1.0 - out[k]);
        }
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let input = &acts.0[l];
            let (lower, upper) = deltas.split_at_mut(l);
            let delta = &upper[0];
            let (gw, gb) = &mut grads[l];
            for o in 0..layer.outputs {
                gb[o] = delta[o];
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(g, a)| *g = delta[o] * a);
            }
            if l > 0 {
                let below = &mut lower[l - 1];
                for (i, b) in below.iter_mut().enumerate() {
                    let s: f64 = (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + i] * delta[o]).sum();
                    *b = s * input[i] * (1.0 - input[i]);
                }
            }
        }
    }

    fn grad_buffers(&self) -> (Vec<(Vec<f64>, Vec<f64>)>, Vec<Vec<f64>>) {
        let grads = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.outputs]))
            .collect();
        let deltas = self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        (grads, deltas)
    }

    pub fn input_dim(&self) -> usize {
        self.topology.input_dim()
    }

    /// Output activations for a raw (unnormalized) feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; 2]> {
        check_dim(self.input_dim(), x.len())?;
        let z = self.normalization.apply(x)?;
        let mut acts = Activations::for_model(self);
        self.propagate(&z, &mut acts);
        Ok(acts.output())
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        self.forward(x).map(label_from_outputs)
    }

    /// Mean over patterns and outputs of the squared error.
    pub fn mean_squared_error(&self, data: &LabeledDataset) -> Result<f64> {
        let mut total = 0.0;
        for (r, label) in data.iter() {
            let o = self.forward(&r.features)?;
            let t = one_hot(label);
            total += (o[0] - t[0]).powi(2) + (o[1] - t[1]).powi(2);
        }
        Ok(total / (2 * data.len().max(1)) as f64)
    }

    fn sample_loss(&self, z: &[f64], target: [f64; 2]) -> f64 {
        let mut acts = Activations::for_model(self);
        self.propagate(z, &mut acts);
        let o = acts.output();
        0.5 * ((o[0] - target[0]).powi(2) + (o[1] - target[1]).powi(2))
    }

    fn param_mut(&mut self, layer: usize, index: usize) -> &mut f64 {
        let l = &mut self.layers[layer];
        if index < l.weights.len() {
            &mut l.weights[index]
        } else {
            &mut l.biases[index - l.weights.len()]
        }
    }
}

pub fn train_mlp(model: MlpModel, data: &LabeledDataset, config: &MlpConfig) -> Result<MlpModel> {
    train_mlp_traced(model, data, config).map(|(m, _)| m)
}

/// Fits the input normalization on `data`, then trains for up to
/// `config.iterations` epochs. Epoch MSE is accumulated from the outputs
/// seen just before each pattern's update.
pub fn train_mlp_traced(mut model: MlpModel, data: &LabeledDataset, config: &MlpConfig) -> Result<(MlpModel, MlpTrace)> {
    config.validate()?;
    if data.is_empty() {
        return Err(WeldError::EmptyInput("MLP training set is empty".into()));
    }
    data.check_binary()?;
    check_dim(model.input_dim(), data.feature_dim().unwrap_or(0))?;

    let start = Instant::now();
    model.normalization = ZScore::fit(&data.records)?;
    let inputs = model.normalization.apply_all(&data.records)?;
    let targets: Vec<[f64; 2]> = data.labels.iter().map(|&l| one_hot(l)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x4d4c50));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut acts = Activations::for_model(&model);
    let (mut grads, mut deltas) = model.grad_buffers();
    let mut trace = MlpTrace::default();

    for epoch in 0..config.iterations {
        let lr = scheduled_rate(config.initial_learning_rate, config.learning_rate_decrement, epoch);
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for &i in &order {
            model.propagate(&inputs[i], &mut acts);
            let o = acts.output();
            let t = targets[i];
            sse += (o[0] - t[0]).powi(2) + (o[1] - t[1]).powi(2);
            model.backprop(&acts, t, &mut grads, &mut deltas);
            for (layer, (gw, gb)) in model.layers.iter_mut().zip(&grads) {
                layer.weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= lr * g);
                layer.biases.iter_mut().zip(gb).for_each(|(b, g)| *b -= lr * g);
            }
        }
        let mse = sse / (2 * inputs.len()) as f64;
        trace.epoch_mse.push(mse);
        model.final_loss = Some(mse);
        model.epochs_run = epoch + 1;
        if config.early_stop_mse.is_some_and(|t| mse < t) {
            break;
        }
    }
    model.training_seconds = start.elapsed().as_secs_f64();
    Ok((model, trace))
}

/// Largest relative difference between the backpropagated gradient of the
/// per-sample loss ½‖target − output‖² and a central finite difference,
/// over every weight and bias. `x` is a raw feature vector.
pub fn gradient_check(model: &MlpModel, x: &[f64], target: [f64; 2]) -> Result<f64> {
    check_dim(model.input_dim(), x.len())?;
    let z = model.normalization.apply(x)?;
    let mut acts = Activations::for_model(model);
    model.propagate(&z, &mut acts);
    let (mut grads, mut deltas) = model.grad_buffers();
    model.backprop(&acts, target, &mut grads, &mut deltas);

    let mut probe = model.clone();
    let h = FINITE_DIFFERENCE_STEP;
    let mut worst: f64 = 0.0;
    for (l, (gw, gb)) in grads.iter().enumerate() {
        for (idx, &analytic) in gw.iter().chain(gb.iter()).enumerate() {
            let orig = *probe.param_mut(l, idx);
            *probe.param_mut(l, idx) = orig + h;
            let up = probe.sample_loss(&z, target);
            *probe.param_mut(l, idx) = orig - h;
            let down = probe.sample_loss(&z, target);
            *probe.param_mut(l, idx) = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
