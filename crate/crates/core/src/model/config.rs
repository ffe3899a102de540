use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a toy decoder-only transformer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub head_dim: usize,
    pub vocab_size: usize,
    pub max_sequence_length: usize,
    /// Token that ends generation. Byte-level text uses ids `0..256`, so this
    /// is normally `256` with `vocab_size = 257`, or absent.
    #[serde(default)]
    pub eos_token: Option<u32>,
}

impl ModelConfig {
    /// Builds a config with `head_dim = model_dim / num_heads`, validated.
    pub fn new(
        num_layers: usize,
        num_heads: usize,
        model_dim: usize,
        vocab_size: usize,
        max_sequence_length: usize,
    ) -> Result<Self> {
        if num_heads == 0 {
            return Err(Error::Argument("num_heads must be positive".into()));
        }
        let cfg = Self {
            num_layers,
            num_heads,
            model_dim,
            head_dim: model_dim / num_heads,
            vocab_size,
            max_sequence_length,
            eos_token: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_eos(mut self, eos: u32) -> Result<Self> {
        self.eos_token = Some(eos);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("model_dim", self.model_dim),
            ("head_dim", self.head_dim),
            ("vocab_size", self.vocab_size),
            ("max_sequence_length", self.max_sequence_length),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        if !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Argument(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.head_dim * self.num_heads != self.model_dim {
            return Err(Error::Argument(format!(
                "head_dim {} must equal model_dim / num_heads = {}",
                self.head_dim,
                self.model_dim / self.num_heads
            )));
        }
        if let Some(eos) = self.eos_token {
            if eos as usize >= self.vocab_size {
                return Err(Error::Argument(format!(
                    "eos token {eos} outside vocabulary of {}",
                    self.vocab_size
                )));
            }
        }
        Ok(())
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.model_dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_dim_derived() {
        let c = ModelConfig::new(4, 4, 64, 256, 512).unwrap();
        assert_eq!(c.head_dim, 16);
    }

    #[test]
    fn rejects_indivisible_dim() {
        assert!(ModelConfig::new(4, 4, 65, 256, 512).is_err());
        let mut c = ModelConfig::new(4, 4, 64, 256, 512).unwrap();
        c.head_dim = 8;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_zero_sizes_and_bad_eos() {
        assert!(ModelConfig::new(0, 4, 64, 256, 512).is_err());
        assert!(ModelConfig::new(4, 0, 64, 256, 512).is_err());
        assert!(ModelConfig::new(4, 4, 64, 256, 0).is_err());
        let c = ModelConfig::new(1, 1, 8, 256, 16).unwrap();
        assert!(c.clone().with_eos(256).is_err());
        assert!(c.with_eos(255).is_ok());
    }
}
