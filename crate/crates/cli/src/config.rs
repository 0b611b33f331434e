//! Effective run configuration: defaults, then an optional JSON file, then
//! command-line flags.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use weld_core::eval::{train_count, SplitMode};
use weld_core::mlp::{MlpConfig, MlpTopology};
use weld_core::rbf::RbfConfig;
use weld_core::som::SomConfig;
use weld_core::PreprocessConfig;

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub welders: usize,
    pub trials: u32,
    /// Segments per trial.
    pub segments: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            welders: 30,
            trials: 3,
            segments: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives every seeded step; overrides the seed fields of the
    /// per-module sections.
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub preprocess: PreprocessConfig,
    pub som: SomConfig,
    pub desirable_k: usize,
    pub topology: MlpTopology,
    pub mlp: MlpConfig,
    pub rbf: RbfConfig,
    pub split: f64,
    pub split_mode: SplitMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: CorpusConfig::default(),
            preprocess: PreprocessConfig::default(),
            som: SomConfig::default(),
            desirable_k: 2,
            topology: "50-25-25-2".parse().expect("valid default topology"),
            mlp: MlpConfig::default(),
            rbf: RbfConfig::default(),
            split: 0.667,
            split_mode: SplitMode::Ordered,
        }
    }
}

/// Flags accepted by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Global RNG seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config file; flags take precedence over its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Number of SOM clusters
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    /// How many of the flattest SOM clusters count as desirable
    #[arg(long, global = true)]
    pub desirable_k: Option<usize>,
    /// MLP layer sizes, e.g. 50-25-25-2
    #[arg(long, global = true)]
    pub topology: Option<MlpTopology>,
    /// Training epochs for the MLP and the RBF output layer
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Initial learning rate for the MLP and the RBF output layer
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    /// Number of RBF centers
    #[arg(long, global = true)]
    pub centers: Option<usize>,
    /// RBF ridge penalty
    #[arg(long, global = true)]
    pub regularization: Option<f64>,
    /// Raw samples per segment
    #[arg(long, global = true)]
    pub segment_len: Option<usize>,
    /// Features per segment
    #[arg(long, global = true)]
    pub feature_dim: Option<usize>,
    /// Moving-average window in samples
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Training fraction of the labeled dataset
    #[arg(long, global = true)]
    pub split: Option<f64>,
    /// ordered or shuffled
    #[arg(long, global = true)]
    pub split_mode: Option<SplitMode>,
    /// Welders in a generated corpus
    #[arg(long, global = true)]
    pub welders: Option<usize>,
    /// Trials per welder in a generated corpus
    #[arg(long, global = true)]
    pub trials: Option<u32>,
    /// Segments per generated trial
    #[arg(long, global = true)]
    pub segments: Option<usize>,
}

impl Overrides {
    /// Builds the effective configuration and checks it.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($target:expr),+) => {
                if let Some(v) = &self.$flag {
                    $($target = v.clone();)+
                }
            };
        }
        set!(seed => cfg.seed);
        set!(clusters => cfg.som.n_clusters);
        set!(desirable_k => cfg.desirable_k);
        set!(topology => cfg.topology);
        set!(iterations => cfg.mlp.iterations, cfg.rbf.iterations);
        set!(learning_rate => cfg.mlp.initial_learning_rate, cfg.rbf.initial_learning_rate);
        set!(centers => cfg.rbf.n_centers);
        set!(regularization => cfg.rbf.regularization);
        set!(segment_len => cfg.preprocess.segment_len);
        set!(feature_dim => cfg.preprocess.feature_dim);
        set!(window => cfg.preprocess.window);
        set!(split => cfg.split);
        set!(split_mode => cfg.split_mode);
        set!(welders => cfg.corpus.welders);
        set!(trials => cfg.corpus.trials);
        set!(segments => cfg.corpus.segments);
        cfg.som.seed = cfg.seed;
        cfg.mlp.seed = cfg.seed;
        cfg.rbf.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        let usage = |e: weld_core::WeldError| UsageError(e.to_string());
        self.preprocess.validate().map_err(usage)?;
        self.som.validate().map_err(usage)?;
        self.mlp.validate().map_err(usage)?;
        self.rbf.validate().map_err(usage)?;
        train_count(1, self.split).map_err(usage)?;
        if self.desirable_k == 0 || self.desirable_k >= self.som.n_clusters {
            return Err(UsageError(format!(
                "desirable-k {} must be in 1..{}",
                self.desirable_k, self.som.n_clusters
            ))
            .into());
        }
        if self.corpus.welders == 0 || self.corpus.trials == 0 || self.corpus.segments == 0 {
            return Err(UsageError("welders, trials and segments must be positive".into()).into());
        }
        Ok(())
    }

    /// MLP topology with its input layer matched to the feature dimension.
    pub fn topology_for_features(&self, hidden: &[usize]) -> Result<MlpTopology> {
        let mut sizes = vec![self.preprocess.feature_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        Ok(MlpTopology::new(sizes)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config always serializes")
    }
}
