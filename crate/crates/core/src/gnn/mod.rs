//! Heterogeneous temporal message passing.
//!
//! Each layer updates a node `v` of table `T` as
//!
//! ```text
//! h'_v = ReLU( W_T h_v + b_T + Σ_R ( W_R · AGG{ h_w : (w → v) of type R } + b_R ) )
//! ```
//!
//! where `R` ranges over the edge types that actually reach `v` in the
//! computation graph, so an absent relation contributes nothing. `AGG` is
//! mean, sum or max. With `L` layers, layer `i` (1-based) only updates nodes
//! at depth `≤ L − i`; the seed's final embedding comes out of layer `L`.
//!
//! Initial embeddings are `F_T x_v` for the raw encoder features `x_v`,
//! plus `a_T · ln(1 + age_v / 1 day)` for rows of temporal tables, where
//! `age_v` is the seed time minus the row time. `F_T` starts from the
//! encoder's fusion matrix and is trained with everything else.
//!
//! All arithmetic is `f64`; gradients are written out by hand and checked
//! against finite differences in the tests.

mod loss;
mod model;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderError, EncoderOptions};
use crate::sampler::{SamplerConfig, Strategy};
use crate::task::{TaskKind, TaskSpec};

pub use loss::{bce_with_logits, l1, loss, sigmoid, LossKind};
pub use model::{gather_inputs, Block, ForwardTrace, HeteroGnn, ModelParams, ModelShape, NodeInput};
pub use train::{
    fit_model, load_checkpoint, predict, predict_to_file, save_checkpoint, train, Adam, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("model config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed computation graph: {0}")]
    Graph(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("unknown {table} key {key}")]
    UnknownEntity { table: String, key: i64 },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Mean,
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    NodeBinary,
    NodeRegression,
    LinkScore,
}

impl HeadKind {
    pub fn loss(self) -> LossKind {
        match self {
            HeadKind::NodeRegression => LossKind::L1,
            _ => LossKind::BceWithLogits,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::NodeBinary => "node_binary",
            HeadKind::NodeRegression => "node_regression",
            HeadKind::LinkScore => "link_score",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            steps: 200,
            batch_size: 64,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Must equal the number of sampler hops.
    pub layers: usize,
    pub hidden_dim: usize,
    pub hidden_dims: BTreeMap<String, usize>,
    /// Initial embedding size per table (the fusion output).
    pub embed_dim: usize,
    pub embed_dims: BTreeMap<String, usize>,
    pub text_dim: usize,
    pub aggregator: Aggregator,
    /// Inferred from the task when absent.
    pub head: Option<HeadKind>,
    /// Table of the second endpoint for link scoring.
    pub target_table: Option<String>,
    pub sampler: SamplerConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            hidden_dim: 32,
            hidden_dims: BTreeMap::new(),
            embed_dim: 64,
            embed_dims: BTreeMap::new(),
            text_dim: 32,
            aggregator: Aggregator::Mean,
            head: None,
            target_table: None,
            sampler: SamplerConfig::new(vec![10, 10], Strategy::Uniform, 0),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn check(&self) -> Result<(), GnnError> {
        let err = |m: String| Err(GnnError::Config(m));
        if self.layers == 0 {
            return err("layers must be positive".into());
        }
        if self.layers != self.sampler.hops() {
            return err(format!(
                "layers ({}) must equal the number of sampler fanouts ({})",
                self.layers,
                self.sampler.hops()
            ));
        }
        self.sampler.check().map_err(|e| GnnError::Config(e.to_string()))?;
        let dims = [self.hidden_dim, self.embed_dim, self.text_dim];
        if dims.contains(&0) || self.hidden_dims.values().chain(self.embed_dims.values()).any(|&d| d == 0) {
            return err("dimensions must be positive".into());
        }
        let o = &self.optimizer;
        if !(o.learning_rate >= 0.0 && o.learning_rate.is_finite()) {
            return err(format!("learning_rate must be finite and non-negative, got {}", o.learning_rate));
        }
        if o.batch_size == 0 {
            return err("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.epsilon <= 0.0 {
            return err("adam betas must lie in [0, 1) and epsilon must be positive".into());
        }
        if self.head == Some(HeadKind::LinkScore) && self.target_table.is_none() {
            return err("link_score head needs target_table".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<ModelConfig, GnnError> {
        let cfg: ModelConfig = serde_json::from_str(text).map_err(|e| GnnError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<ModelConfig, GnnError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GnnError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn encoder_options(&self) -> EncoderOptions {
        EncoderOptions {
            embed_dim: self.embed_dim,
            embed_dims: self.embed_dims.clone(),
            text_dim: self.text_dim,
            seed: crate::rng::mix_seed(self.optimizer.seed, 0x00E4_C0DE),
        }
    }

    /// Head kind given explicitly or implied by the task.
    pub fn head_for(&self, task: &TaskSpec, link_level: bool) -> HeadKind {
        self.head.unwrap_or(if link_level {
            HeadKind::LinkScore
        } else {
            match task.kind {
                TaskKind::BinaryClassification => HeadKind::NodeBinary,
                TaskKind::Regression => HeadKind::NodeRegression,
            }
        })
    }
}
