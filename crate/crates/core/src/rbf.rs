//! Gaussian radial basis function network: k-means centers, nearest-neighbor
//! widths and a linear two-output layer trained by online gradient descent
//! with an L2 penalty on the non-bias weights.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{label_from_outputs, one_hot, LabeledDataset};
use crate::error::{check_dim, invalid, Result, WeldError};
use crate::kmeans::kmeans;
use crate::mlp::{scheduled_rate, EARLY_STOP_MSE, FINITE_DIFFERENCE_STEP, GRADIENT_CHECK_FLOOR};
use crate::normalize::ZScore;
use crate::synth::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbfConfig {
    pub n_centers: usize,
    /// Epochs of output-layer training.
    pub iterations: usize,
    pub initial_learning_rate: f64,
    pub learning_rate_decrement: f64,
    /// Stop once the epoch MSE drops below this; `None` always runs every
    /// epoch.
    pub early_stop_mse: Option<f64>,
    pub regularization: f64,
    pub width_factor: f64,
    pub seed: u64,
}

impl Default for RbfConfig {
    fn default() -> Self {
        Self {
            n_centers: 95,
            iterations: 10_000,
            initial_learning_rate: 0.3,
            learning_rate_decrement: 0.001,
            early_stop_mse: Some(EARLY_STOP_MSE),
            regularization: 0.3,
            width_factor: 1.0,
            seed: 0,
        }
    }
}

impl RbfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_centers == 0 {
            return Err(invalid("n_centers must be at least 1"));
        }
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
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(invalid("regularization must be non-negative"));
        }
        if !(self.width_factor > 0.0 && self.width_factor.is_finite()) {
            return Err(invalid("width factor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    /// Centers in normalized feature space.
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
    /// One row per center plus a trailing bias row.
    pub output_weights: Vec<[f64; 2]>,
    pub normalization: ZScore,
    pub training_seconds: f64,
    pub final_loss: Option<f64>,
    pub epochs_run: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `width_factor` times each center's distance to its nearest other center.
/// Zero distances (duplicate centers) fall back to the mean nearest-neighbor
/// distance.
pub fn compute_widths<C: AsRef<[f64]>>(centers: &[C], width_factor: f64) -> Result<Vec<f64>> {
    if centers.len() < 2 {
        return Err(invalid("width rule needs at least 2 centers"));
    }
    if !(width_factor > 0.0 && width_factor.is_finite()) {
        return Err(invalid("width factor must be positive"));
    }
    let nn: Vec<f64> = centers
        .iter()
        .enumerate()
        .map(|(j, c)| {
            centers
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, o)| sq_dist(c.as_ref(), o.as_ref()))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    let mean = nn.iter().sum::<f64>() / nn.len() as f64;
    if mean <= 0.0 {
        return Err(invalid("all centers are identical"));
    }
    Ok(nn
        .into_iter()
        .map(|d| width_factor * if d > 0.0 { d } else { mean })
        .collect())
}

impl RbfModel {
    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.normalization.dim()
    }

    /// Kernel activations for a raw feature vector.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.feature_dim(), x.len())?;
        let z = self.normalization.apply(x)?;
        Ok(self.kernel(&z))
    }

    fn kernel(&self, z: &[f64]) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(c, w)| (-sq_dist(z, c) / (2.0 * w * w)).exp())
            .collect()
    }

    fn combine(&self, phi: &[f64]) -> [f64; 2] {
        let bias = self.output_weights[phi.len()];
        let mut out = bias;
        for (p, w) in phi.iter().zip(&self.output_weights) {
            out[0] += p * w[0];
            out[1] += p * w[1];
        }
        out
    }

    pub fn outputs(&self, x: &[f64]) -> Result<[f64; 2]> {
        Ok(self.combine(&self.features(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        self.outputs(x).map(label_from_outputs)
    }

    /// Euclidean norm of the output weights, bias row excluded.
    pub fn weight_norm(&self) -> f64 {
        self.output_weights[..self.n_centers()]
            .iter()
            .map(|w| w[0] * w[0] + w[1] * w[1])
            .sum::<f64>()
            .sqrt()
    }
}

pub fn rbf_features(model: &RbfModel, x: &[f64]) -> Result<Vec<f64>> {
    model.features(x)
}

/// Per-pattern objective: ½‖target − output‖² + ½·penalty·‖W‖² (bias
/// excluded). Training uses penalty = regularization / N so that an epoch
/// of updates descends the ridge objective on the summed squared error.
fn pattern_objective(model: &RbfModel, phi: &[f64], target: [f64; 2], penalty: f64) -> f64 {
    let o = model.combine(phi);
    let n = model.weight_norm();
    0.5 * ((o[0] - target[0]).powi(2) + (o[1] - target[1]).powi(2)) + 0.5 * penalty * n * n
}

fn pattern_gradient(model: &RbfModel, phi: &[f64], target: [f64; 2], penalty: f64, grad: &mut [[f64; 2]]) {
    let o = model.combine(phi);
    let e = [o[0] - target[0], o[1] - target[1]];
    for ((g, p), w) in grad.iter_mut().zip(phi).zip(&model.output_weights) {
        g[0] = e[0] * p + penalty * w[0];
        g[1] = e[1] * p + penalty * w[1];
    }
    grad[phi.len()] = e;
}

/// Runs k-means on the normalized training inputs, derives widths, then
/// fits the output layer. The scheduled learning rate is capped at
/// `1 / max(1 + |phi|^2)` over the training activations so that online
/// updates cannot diverge.
pub fn train_rbf(data: &LabeledDataset, config: &RbfConfig) -> Result<RbfModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(WeldError::EmptyInput("RBF training set is empty".into()));
    }
    data.check_binary()?;

    let start = Instant::now();
    let normalization = ZScore::fit(&data.records)?;
    let inputs = normalization.apply_all(&data.records)?;
    let clusters = kmeans(&inputs, config.n_centers, derive_seed(config.seed, 0x4b4d))?;
    let widths = compute_widths(&clusters.centers, config.width_factor)?;
    let mut model = RbfModel {
        output_weights: vec![[0.0; 2]; clusters.centers.len() + 1],
        centers: clusters.centers,
        widths,
        normalization,
        training_seconds: 0.0,
        final_loss: None,
        epochs_run: 0,
    };

    let phis: Vec<Vec<f64>> = inputs.iter().map(|z| model.kernel(z)).collect();
    let targets: Vec<[f64; 2]> = data.labels.iter().map(|&l| one_hot(l)).collect();
    let penalty = config.regularization / data.len() as f64;
    let mut grad = vec![[0.0; 2]; model.output_weights.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x524246));
    let mut order: Vec<usize> = (0..phis.len()).collect();
    // A per-pattern step contracts only while lr * (1 + |phi|^2) < 2; keeping
    // the product at most 1 holds every update to at most an exact solve.
    let max_sq = phis
        .iter()
        .map(|p| 1.0 + p.iter().map(|v| v * v).sum::<f64>())
        .fold(1.0, f64::max);
    let rate_cap = 1.0 / max_sq;

    for epoch in 0..config.iterations {
        let lr = scheduled_rate(config.initial_learning_rate, config.learning_rate_decrement, epoch).min(rate_cap);
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for &i in &order {
            let o = model.combine(&phis[i]);
            sse += (o[0] - targets[i][0]).powi(2) + (o[1] - targets[i][1]).powi(2);
            pattern_gradient(&model, &phis[i], targets[i], penalty, &mut grad);
            for (w, g) in model.output_weights.iter_mut().zip(&grad) {
                w[0] -= lr * g[0];
                w[1] -= lr * g[1];
            }
        }
        let mse = sse / (2 * phis.len()) as f64;
        if !mse.is_finite() {
            return Err(invalid(format!("RBF training diverged in epoch {epoch}")));
        }
        model.final_loss = Some(mse);
        model.epochs_run = epoch + 1;
        if config.early_stop_mse.is_some_and(|t| mse < t) {
            break;
        }
    }
    model.training_seconds = start.elapsed().as_secs_f64();
    Ok(model)
}

/// Largest relative difference between the analytic output-layer gradient
/// of the per-pattern objective and central finite differences.
pub fn output_gradient_check(model: &RbfModel, x: &[f64], target: [f64; 2], penalty: f64) -> Result<f64> {
    let phi = model.features(x)?;
    let mut grad = vec![[0.0; 2]; model.output_weights.len()];
    pattern_gradient(model, &phi, target, penalty, &mut grad);
    let mut probe = model.clone();
    let h = FINITE_DIFFERENCE_STEP;
    let mut worst: f64 = 0.0;
    for (r, g) in grad.iter().enumerate() {
        for k in 0..2 {
            let orig = probe.output_weights[r][k];
            probe.output_weights[r][k] = orig + h;
            let up = pattern_objective(&probe, &phi, target, penalty);
            probe.output_weights[r][k] = orig - h;
            let down = pattern_objective(&probe, &phi, target, penalty);
            probe.output_weights[r][k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = g[k].abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
            worst = worst.max((g[k] - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
