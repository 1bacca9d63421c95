use serde::{Deserialize, Serialize};

use crate::attention::{AttentionPattern, Padding, PatternKind, Window};
use crate::error::{Error, Result};
use crate::matrix::KernelPath;
use crate::scalar::Precision;

/// Shape and attention layout of an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub pattern: AttentionPattern,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default)]
    pub kernel: KernelPath,
    #[serde(default)]
    pub precision: Precision,
}

impl EncoderConfig {
    /// A config with the named pattern, excluded padding, tiled kernels and
    /// single precision.
    pub fn new(
        layers: usize,
        embed_dim: usize,
        heads: usize,
        ff_dim: usize,
        max_positions: usize,
        vocab_size: usize,
        pattern: AttentionPattern,
    ) -> Self {
        Self {
            layers,
            embed_dim,
            heads,
            ff_dim,
            max_positions,
            vocab_size,
            pattern,
            padding: Padding::default(),
            kernel: KernelPath::default(),
            precision: Precision::default(),
        }
    }

    pub fn with_preset(mut self, kind: PatternKind, window: Window) -> Self {
        self.pattern = AttentionPattern::preset(kind, window);
        self
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.embed_dim == 0 || self.heads == 0 || self.ff_dim == 0 {
            return bad("embed_dim, heads and ff_dim must be positive".into());
        }
        if self.embed_dim % self.heads != 0 {
            return bad(format!("embed_dim {} is not divisible by {} heads", self.embed_dim, self.heads));
        }
        if self.max_positions < 4 {
            return bad(format!("max_positions {} cannot hold [CLS] q [SEP] [SEP]", self.max_positions));
        }
        if self.vocab_size <= super::tokens::FIRST_WORD as usize {
            return bad(format!("vocab_size {} leaves no room for words", self.vocab_size));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}
