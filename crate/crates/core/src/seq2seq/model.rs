use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::ProjectionHead;
use crate::error::{Error, Result};
use crate::numerics::{Checkpoint, LstmCellParams, ParamId, ParamStore};
use crate::skeleton_io::{Dim, PretextTask};

/// How decoder states attend to encoder states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// No attention: outputs come straight from the decoder state.
    None,
    /// Plain softmax alignment scores.
    Bas,
    /// Alignment scores multiplied by the Gaussian locality mask.
    Mbas,
    /// Plain scores, pulled toward the mask by the alignment loss.
    Las,
}

impl AttentionMode {
    pub const ALL: [AttentionMode; 4] = [
        AttentionMode::None,
        AttentionMode::Bas,
        AttentionMode::Mbas,
        AttentionMode::Las,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttentionMode::None => "none",
            AttentionMode::Bas => "bas",
            AttentionMode::Mbas => "mbas",
            AttentionMode::Las => "las",
        }
    }

    pub fn has_attention(self) -> bool {
        self != AttentionMode::None
    }
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(AttentionMode::None),
            "bas" => Ok(AttentionMode::Bas),
            "mbas" => Ok(AttentionMode::Mbas),
            "las" => Ok(AttentionMode::Las),
            other => Err(Error::Config(format!("unknown attention mode {other:?}"))),
        }
    }
}

/// Architecture shared by the three per-dimension models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelConfig {
    /// Joints per skeleton, `J`.
    pub joints: usize,
    /// LSTM hidden size, `K`.
    pub hidden: usize,
    /// Sequence length, `f`.
    pub seq_len: usize,
    /// Attention window `D`; the mask uses `σ = D / 2`.
    pub window: usize,
    pub attention: AttentionMode,
    /// Hidden width of the projection head; `f·K / 2` when absent.
    #[serde(default)]
    pub projection_hidden: Option<usize>,
}

impl ModelConfig {
    pub fn sigma(&self) -> f64 {
        self.window as f64 / 2.0
    }

    pub fn projection_width(&self) -> usize {
        self.projection_hidden
            .unwrap_or((self.seq_len * self.hidden / 2).max(1))
    }

    pub fn decoder_input(&self) -> usize {
        if self.attention.has_attention() {
            self.joints + self.hidden
        } else {
            self.joints
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.hidden == 0 || self.seq_len == 0 {
            return Err(Error::Config("joints, hidden size and sequence length must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("attention window must be >= 1".into()));
        }
        if self.projection_hidden == Some(0) {
            return Err(Error::Config("projection width must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder, decoder, attention and output weights for one coordinate.
#[derive(Clone, Debug)]
pub struct GaitModelDim {
    pub dim: Dim,
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: LstmCellParams,
    pub decoder: LstmCellParams,
    /// `K × 2K`, absent without attention.
    pub w_att: Option<ParamId>,
    /// `J × K`.
    pub w_out: ParamId,
    /// Maps the concatenated context vectors to the contrasting space;
    /// absent without attention.
    pub head: Option<ProjectionHead>,
}

impl GaitModelDim {
    pub fn init(dim: Dim, config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(dim.index() as u64);
        let (j, k) = (config.joints, config.hidden);
        let mut store = ParamStore::new();
        let encoder = LstmCellParams::init(&mut store, "encoder", j, k, &mut rng)?;
        let decoder = LstmCellParams::init(&mut store, "decoder", config.decoder_input(), k, &mut rng)?;
        let w_att = if config.attention.has_attention() {
            let bound = 1.0 / ((2 * k) as f64).sqrt();
            Some(store.add_uniform("attention.w_att", &[k, 2 * k], bound, &mut rng)?)
        } else {
            None
        };
        let w_out = store.add_uniform("output.w_f", &[j, k], 1.0 / (k as f64).sqrt(), &mut rng)?;
        let head = if config.attention.has_attention() {
            let f = config.seq_len;
            Some(ProjectionHead::init(
                &mut store,
                "projection",
                f * k,
                config.projection_width(),
                k,
                &mut rng,
            )?)
        } else {
            None
        };
        Ok(Self {
            dim,
            config: config.clone(),
            store,
            encoder,
            decoder,
            w_att,
            w_out,
            head,
        })
    }

    /// Checkpoint namespace, e.g. `"X."`.
    pub fn prefix(&self) -> String {
        format!("{}.", self.dim.name())
    }

    /// Sets every parameter to zero.
    pub fn zero_weights(&mut self) {
        for p in self.store.params_mut() {
            p.value.fill(0.0);
        }
    }
}

/// What a checkpoint records about the model that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelMeta {
    pub model: ModelConfig,
    pub task: PretextTask,
    /// Whether training used the contrastive loss.
    pub contrastive: bool,
    pub seed: u64,
}

/// The X, Y and Z models trained on one pretext task.
#[derive(Clone, Debug)]
pub struct GaitModel {
    pub meta: ModelMeta,
    pub dims: Vec<GaitModelDim>,
}

impl GaitModel {
    pub fn init(config: &ModelConfig, task: PretextTask, seed: u64) -> Result<Self> {
        let dims = Dim::ALL
            .iter()
            .map(|&d| GaitModelDim::init(d, config, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            meta: ModelMeta {
                model: config.clone(),
                task,
                contrastive: false,
                seed,
            },
            dims,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.meta.model
    }

    pub fn task(&self) -> PretextTask {
        self.meta.task
    }

    pub fn dim(&self, dim: Dim) -> &GaitModelDim {
        &self.dims[dim.index()]
    }

    pub fn checksum(&self) -> u64 {
        self.dims
            .iter()
            .fold(0u64, |acc, d| acc.rotate_left(21) ^ d.store.checksum())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(serde_json::to_value(&self.meta)?);
        for d in &self.dims {
            ck.push_store(&d.prefix(), &d.store);
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: ModelMeta = serde_json::from_value(ck.config.clone())?;
        let mut model = Self::init(&meta.model, meta.task, meta.seed)?;
        for d in &mut model.dims {
            let prefix = d.prefix();
            ck.restore_into(&prefix, &mut d.store)?;
        }
        model.meta = meta;
        Ok(model)
    }
}
