//! Encoder-decoder network over control-point sequences.
//!
//! The encoder reads the normalized problem parameters, one scalar per
//! token. The decoder reads a learned start token followed by control-point
//! tokens and predicts the next token at every position through a causal
//! self-attention mask. Training uses teacher forcing; inference is
//! autoregressive and greedy.

pub mod check;
mod checkpoint;
pub mod layers;
pub mod network;
mod train;

pub use check::gradient_check;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use train::{loss, train, write_training_log, Adam, EpochStat};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::dataset::{decode_tokens, token_dim, DatasetMeta, Normalization};
use crate::problems::{
    Constants, DecisionVector, ProblemInstance, ProblemKind, ThetaVector, TranscriptionConfig,
};
use network::{Network, Pass, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub d_emb: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Hidden width of the position-wise feed-forward blocks.
    pub d_ff: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            d_emb: 64,
            n_heads: 4,
            n_layers: 1,
            d_ff: 256,
            dropout_rate: 0.1,
            learning_rate: 4e-4,
            batch_size: 8,
            epochs: 30,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let problem = if self.d_emb == 0 || self.n_heads == 0 || self.d_emb % self.n_heads != 0 {
            Some("d_emb must be a positive multiple of n_heads")
        } else if self.n_layers == 0 || self.d_ff == 0 {
            Some("n_layers and d_ff must be positive")
        } else if !(0.0..1.0).contains(&self.dropout_rate) {
            Some("dropout_rate must lie in [0, 1)")
        } else if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            Some("learning_rate must be finite and nonnegative")
        } else if self.batch_size == 0 {
            Some("batch_size must be positive")
        } else {
            None
        };
        match problem {
            Some(p) => Err(Error::Configuration(p.into())),
            None => Ok(()),
        }
    }
}

/// What the model was trained on: problem, transcription and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ProblemKind,
    #[serde(rename = "K")]
    pub segments: usize,
    #[serde(rename = "N")]
    pub degree: usize,
    #[serde(rename = "delta_P")]
    pub delta_p: f64,
    pub constants: Constants,
    pub token_dim: usize,
    pub theta_norm: Normalization,
    pub target_norm: Normalization,
}

impl ModelMeta {
    pub fn from_dataset(meta: &DatasetMeta) -> Self {
        Self {
            kind: meta.kind,
            segments: meta.segments,
            degree: meta.degree,
            delta_p: meta.delta_p,
            constants: meta.constants,
            token_dim: meta.token_dim,
            theta_norm: meta.theta_norm.clone(),
            target_norm: meta.target_norm.clone(),
        }
    }

    pub fn config(&self) -> TranscriptionConfig {
        TranscriptionConfig {
            segments: self.segments,
            degree: self.degree,
            delta_p: self.delta_p,
        }
    }

    /// `M + 1`.
    pub fn num_tokens(&self) -> usize {
        self.config().num_points()
    }

    /// Whether a dataset was produced for the same problem and transcription.
    pub fn matches(&self, meta: &DatasetMeta) -> bool {
        self.kind == meta.kind
            && self.segments == meta.segments
            && self.degree == meta.degree
            && self.token_dim == meta.token_dim
    }
}

/// Learnable parameters, optimizer state and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub hp: HyperParams,
    pub meta: ModelMeta,
    pub params: Network,
    pub adam: Adam,
    /// Mean per-record loss of the last completed training epoch.
    pub final_loss: Option<f64>,
}

impl ModelState {
    /// Fresh model with seeded uniform fan-in initialization.
    pub fn new(hp: HyperParams, meta: ModelMeta) -> Result<Self> {
        hp.validate()?;
        if meta.token_dim != token_dim(meta.kind) {
            return Err(Error::Configuration(format!(
                "token width {} does not match {}",
                meta.token_dim,
                meta.kind.name()
            )));
        }
        let shape = Shape {
            d_emb: hp.d_emb,
            heads: hp.n_heads,
            layers: hp.n_layers,
            d_ff: hp.d_ff,
            enc_len: meta.kind.theta_len(),
            dec_len: meta.num_tokens() + 1,
            token_dim: meta.token_dim,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let params = Network::init(&shape, &mut rng);
        let adam = Adam::new(&params);
        Ok(Self {
            hp,
            meta,
            params,
            adam,
            final_loss: None,
        })
    }

    pub fn normalized_theta(&self, theta: &ThetaVector) -> Result<Vec<f64>> {
        if theta.kind() != self.meta.kind {
            return Err(Error::Configuration(format!(
                "model was trained for {}, got {} parameters",
                self.meta.kind.name(),
                theta.kind().name()
            )));
        }
        Ok(self.meta.theta_norm.normalize_row(theta.values()))
    }

    /// Teacher-forced prediction of all `tokens.len() + 1` positions, without dropout.
    pub fn forward(&self, theta: &[f64], tokens: &[Vec<f64>]) -> Result<Array2<f64>> {
        let mut pass = Pass {
            heads: self.hp.n_heads,
            dropout: 0.0,
            rng: None,
        };
        let (memory, _) = self.params.encode(theta, &mut pass)?;
        Ok(self.params.decode(&memory, tokens, &mut pass)?.output().clone())
    }

    /// Autoregressive generation of the `M + 1` normalized control-point tokens.
    pub fn infer(&self, theta: &ThetaVector) -> Result<Vec<Vec<f64>>> {
        let x = self.normalized_theta(theta)?;
        let mut pass = Pass {
            heads: self.hp.n_heads,
            dropout: 0.0,
            rng: None,
        };
        let (memory, _) = self.params.encode(&x, &mut pass)?;
        let count = self.meta.num_tokens();
        let mut generated: Vec<Vec<f64>> = Vec::with_capacity(count);
        for i in 0..count {
            let cache = self.params.decode(&memory, &generated, &mut pass)?;
            generated.push(cache.output().row(i).to_vec());
        }
        Ok(generated)
    }

    /// Inferred tokens in problem units, decoded into a decision vector.
    pub fn predict(&self, theta: &ThetaVector) -> Result<DecisionVector> {
        let tokens = self.infer(theta)?;
        let raw: Vec<Vec<f64>> = tokens
            .iter()
            .map(|t| self.meta.target_norm.denormalize_row(t))
            .collect();
        decode_tokens(&self.instance(theta)?, &raw)
    }

    pub fn instance(&self, theta: &ThetaVector) -> Result<ProblemInstance> {
        ProblemInstance::new(theta.clone(), self.meta.config(), self.meta.constants)
    }
}
