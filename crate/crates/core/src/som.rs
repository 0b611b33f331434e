//! Kohonen self-organizing map on a one-dimensional chain of units, and the
//! flatness rule that turns its clusters into desirable/undesirable labels.
//!
//! Training uses the online update `w_c += alpha * h(c, bmu) * (x - w_c)`
//! with a bubble neighborhood (`h = 1` when the chain distance is within the
//! current radius). The radius shrinks by a fixed step per epoch and the
//! learning rate decays linearly to a floor of 0.01. Inputs are z-scored
//! with statistics taken from the training data and stored in the model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, DESIRABLE, UNDESIRABLE};
use crate::error::{check_dim, invalid, Result, WeldError};
use crate::normalize::ZScore;
use crate::signal::FeatureVector;

const LEARNING_RATE_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomConfig {
    pub n_clusters: usize,
    pub initial_learning_rate: f64,
    pub initial_radius: f64,
    /// Radius reduction applied after every epoch.
    pub radius_decrement: f64,
    /// Training stops once no weight moves further than this in one epoch.
    pub convergence_epsilon: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            n_clusters: 9,
            initial_learning_rate: 0.3,
            initial_radius: 5.0,
            radius_decrement: 0.1,
            convergence_epsilon: 1e-6,
            max_epochs: 500,
            seed: 0,
        }
    }
}

impl SomConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.n_clusters == 0 || self.max_epochs == 0 {
            return Err(invalid("SOM needs at least one cluster and one epoch"));
        }
        if !positive(self.initial_learning_rate) || !positive(self.initial_radius) || !positive(self.convergence_epsilon) {
            return Err(invalid("SOM learning rate, radius and epsilon must be positive"));
        }
        if !(self.radius_decrement.is_finite() && self.radius_decrement >= 0.0) {
            return Err(invalid("SOM radius decrement must be non-negative"));
        }
        Ok(())
    }

    fn learning_rate(&self, epoch: usize) -> f64 {
        let floor = LEARNING_RATE_FLOOR.min(self.initial_learning_rate);
        let frac = epoch as f64 / self.max_epochs as f64;
        (self.initial_learning_rate - (self.initial_learning_rate - floor) * frac).max(floor)
    }

    fn radius(&self, epoch: usize) -> f64 {
        (self.initial_radius - self.radius_decrement * epoch as f64).max(0.0)
    }
}

/// A trained map. `weights` live in normalized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomModel {
    pub weights: Vec<Vec<f64>>,
    pub grid_coords: Vec<u32>,
    pub normalization: ZScore,
    pub config: SomConfig,
    pub epochs_run: usize,
}

/// Per-cluster flatness and the resulting desirable flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    pub desirable: Vec<bool>,
    pub weight_std: Vec<f64>,
}

/// Trace of a training run, for diagnostics and tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SomTrace {
    /// Quantization error at the end of each epoch.
    pub quantization_error: Vec<f64>,
    /// Largest single weight displacement during each epoch.
    pub max_displacement: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest weight vector; ties go to the lowest index.
fn nearest(weights: &[Vec<f64>], z: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, w) in weights.iter().enumerate() {
        let d = sq_dist(w, z);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn quantization_error(weights: &[Vec<f64>], data: &[Vec<f64>]) -> f64 {
    data.iter().map(|z| sq_dist(&weights[nearest(weights, z)], z)).sum()
}

pub fn train_som<X: AsRef<[f64]>>(data: &[X], config: &SomConfig) -> Result<SomModel> {
    train_som_traced(data, config).map(|(m, _)| m)
}

pub fn train_som_traced<X: AsRef<[f64]>>(data: &[X], config: &SomConfig) -> Result<(SomModel, SomTrace)> {
    config.validate()?;
    if data.is_empty() {
        return Err(WeldError::EmptyInput("SOM training data is empty".into()));
    }
    let normalization = ZScore::fit(data)?;
    let z = normalization.apply_all(data)?;
    let dim = normalization.dim();

    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for x in &z {
        for (j, v) in x.iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights: Vec<Vec<f64>> = (0..config.n_clusters)
        .map(|_| {
            (0..dim)
                .map(|j| if lo[j] < hi[j] { rng.random_range(lo[j]..hi[j]) } else { lo[j] })
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut trace = SomTrace::default();
    let mut previous = weights.clone();
    let mut epochs_run = 0;
    for epoch in 0..config.max_epochs {
        let alpha = config.learning_rate(epoch);
        let radius = config.radius(epoch);
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &z[i];
            let bmu = nearest(&weights, x);
            for (c, w) in weights.iter_mut().enumerate() {
                if (c.abs_diff(bmu) as f64) <= radius {
                    w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += alpha * (xi - *wi));
                }
            }
        }
        let displacement = weights
            .iter()
            .zip(&previous)
            .flat_map(|(w, p)| w.iter().zip(p).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        previous.clone_from(&weights);
        epochs_run = epoch + 1;
        trace.quantization_error.push(quantization_error(&weights, &z));
        trace.max_displacement.push(displacement);
        if displacement < config.convergence_epsilon {
            break;
        }
    }

    let model = SomModel {
        weights,
        grid_coords: (0..config.n_clusters as u32).collect(),
        normalization,
        config: config.clone(),
        epochs_run,
    };
    Ok((model, trace))
}

impl SomModel {
    pub fn n_clusters(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.normalization.dim()
    }

    /// Weight vectors mapped back to volts.
    pub fn denormalized_weights(&self) -> Result<Vec<Vec<f64>>> {
        self.weights.iter().map(|w| self.normalization.invert(w)).collect()
    }

    pub fn best_matching_unit(&self, x: &[f64]) -> Result<usize> {
        check_dim(self.feature_dim(), x.len())?;
        let z = self.normalization.apply(x)?;
        Ok(nearest(&self.weights, &z))
    }

    pub fn cluster_counts<X: AsRef<[f64]>>(&self, data: &[X]) -> Result<Vec<usize>> {
        let mut counts = vec![0; self.n_clusters()];
        for x in data {
            counts[self.best_matching_unit(x.as_ref())?] += 1;
        }
        Ok(counts)
    }

    /// Sum of squared normalized distances from each pattern to its BMU.
    pub fn quantization_error<X: AsRef<[f64]>>(&self, data: &[X]) -> Result<f64> {
        let z = self.normalization.apply_all(data)?;
        Ok(quantization_error(&self.weights, &z))
    }

    /// Flags the `k_desirable` clusters whose weight vectors (in volts) have
    /// the smallest component standard deviation. Ties go to the lower index.
    pub fn label_clusters(&self, k_desirable: usize) -> Result<ClusterLabeling> {
        let n = self.n_clusters();
        if k_desirable == 0 || k_desirable >= n {
            return Err(invalid(format!(
                "desirable cluster count {k_desirable} must be in 1..{n}"
            )));
        }
        let weight_std: Vec<f64> = self
            .denormalized_weights()?
            .iter()
            .map(|w| {
                let m = w.iter().sum::<f64>() / w.len() as f64;
                (w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / w.len() as f64).sqrt()
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| weight_std[a].total_cmp(&weight_std[b]).then(a.cmp(&b)));
        let mut desirable = vec![false; n];
        for &c in &order[..k_desirable] {
            desirable[c] = true;
        }
        Ok(ClusterLabeling { desirable, weight_std })
    }

    /// Labels each pattern 1 when its BMU is a desirable cluster, else 0.
    pub fn label_dataset(&self, labeling: &ClusterLabeling, data: &[FeatureVector]) -> Result<LabeledDataset> {
        check_dim(self.n_clusters(), labeling.desirable.len())?;
        let labels = data
            .iter()
            .map(|x| {
                let bmu = self.best_matching_unit(&x.features)?;
                Ok(if labeling.desirable[bmu] { DESIRABLE } else { UNDESIRABLE })
            })
            .collect::<Result<Vec<u8>>>()?;
        LabeledDataset::new(data.to_vec(), labels)
    }
}
