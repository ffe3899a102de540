//! Parameter storage, seeded initialization and the checkpoint format.
//!
//! A checkpoint is a text manifest plus a little-endian `f64` blob:
//!
//! ```text
//! # comment lines are ignored
//! blob model.bin
//! tok_embedding 257x64 0
//! pos_embedding 1024x64 131584
//! ...
//! ```
//!
//! Each tensor line is `name shape byte_offset`, shape dims joined by `x`.
//! The blob path is resolved relative to the manifest.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};

/// Dense row-major tensor of rank 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    fn filled(shape: &[usize], v: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    fn normal(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Self {
        let dist = Normal::new(0.0, std).expect("std is positive");
        let mut t = Self::zeros(shape);
        for v in &mut t.data {
            *v = dist.sample(rng);
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// `out = x · self` for `x` of length `rows`.
    pub fn vec_mul_into(&self, x: &[f64], out: &mut [f64]) {
        let cols = self.cols();
        debug_assert_eq!(x.len(), self.rows());
        debug_assert_eq!(out.len(), cols);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &xr) in x.iter().enumerate() {
            let w = &self.data[r * cols..(r + 1) * cols];
            for (o, &wv) in out.iter_mut().zip(w) {
                *o += xr * wv;
            }
        }
    }

    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        self.vec_mul_into(x, &mut out);
        out
    }
}

/// Weights of one transformer block. Query/key/value projections hold all
/// heads side by side: head `h` owns columns `h*head_dim..(h+1)*head_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ffn_norm: Tensor,
    pub w_up: Tensor,
    pub w_down: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub tok_embedding: Tensor,
    pub pos_embedding: Tensor,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Tensor,
    pub lm_head: Tensor,
}

/// Tensor names and shapes a config requires, in checkpoint order.
pub fn expected_tensors(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.model_dim;
    let f = cfg.ffn_dim();
    let mut out = vec![
        ("tok_embedding".to_string(), vec![cfg.vocab_size, d]),
        ("pos_embedding".to_string(), vec![cfg.max_sequence_length, d]),
    ];
    for l in 0..cfg.num_layers {
        for (name, shape) in [
            ("attn_norm", vec![d]),
            ("wq", vec![d, d]),
            ("wk", vec![d, d]),
            ("wv", vec![d, d]),
            ("wo", vec![d, d]),
            ("ffn_norm", vec![d]),
            ("w_up", vec![d, f]),
            ("w_down", vec![f, d]),
        ] {
            out.push((format!("layers.{l}.{name}"), shape));
        }
    }
    out.push(("final_norm".to_string(), vec![d]));
    out.push(("lm_head".to_string(), vec![d, cfg.vocab_size]));
    out
}

impl ModelWeights {
    /// Deterministic Gaussian initialization from `seed`.
    pub fn seeded(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.model_dim;
        let f = cfg.ffn_dim();
        let proj = 1.0 / (d as f64).sqrt();
        let tok_embedding = Tensor::normal(&[cfg.vocab_size, d], 1.0, &mut rng);
        let pos_embedding = Tensor::normal(&[cfg.max_sequence_length, d], 0.5, &mut rng);
        let layers = (0..cfg.num_layers)
            .map(|_| LayerWeights {
                attn_norm: Tensor::filled(&[d], 1.0),
                wq: Tensor::normal(&[d, d], proj, &mut rng),
                wk: Tensor::normal(&[d, d], proj, &mut rng),
                wv: Tensor::normal(&[d, d], proj, &mut rng),
                wo: Tensor::normal(&[d, d], proj, &mut rng),
                ffn_norm: Tensor::filled(&[d], 1.0),
                w_up: Tensor::normal(&[d, f], proj, &mut rng),
                w_down: Tensor::normal(&[f, d], 1.0 / (f as f64).sqrt(), &mut rng),
            })
            .collect();
        Self {
            tok_embedding,
            pos_embedding,
            layers,
            final_norm: Tensor::filled(&[d], 1.0),
            lm_head: Tensor::normal(&[d, cfg.vocab_size], proj, &mut rng),
        }
    }

    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("tok_embedding".to_string(), &self.tok_embedding),
            ("pos_embedding".to_string(), &self.pos_embedding),
        ];
        for (l, lw) in self.layers.iter().enumerate() {
            for (name, t) in [
                ("attn_norm", &lw.attn_norm),
                ("wq", &lw.wq),
                ("wk", &lw.wk),
                ("wv", &lw.wv),
                ("wo", &lw.wo),
                ("ffn_norm", &lw.ffn_norm),
                ("w_up", &lw.w_up),
                ("w_down", &lw.w_down),
            ] {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out.push(("final_norm".to_string(), &self.final_norm));
        out.push(("lm_head".to_string(), &self.lm_head));
        out
    }

    fn from_named(cfg: &ModelConfig, mut tensors: HashMap<String, Tensor>) -> Result<Self> {
        let mut take = |name: String| {
            tensors
                .remove(&name)
                .ok_or_else(|| Error::Load(format!("checkpoint is missing tensor {name}")))
        };
        let tok_embedding = take("tok_embedding".into())?;
        let pos_embedding = take("pos_embedding".into())?;
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let mut t = |n: &str| take(format!("layers.{l}.{n}"));
            layers.push(LayerWeights {
                attn_norm: t("attn_norm")?,
                wq: t("wq")?,
                wk: t("wk")?,
                wv: t("wv")?,
                wo: t("wo")?,
                ffn_norm: t("ffn_norm")?,
                w_up: t("w_up")?,
                w_down: t("w_down")?,
            });
        }
        let final_norm = take("final_norm".into())?;
        let lm_head = take("lm_head".into())?;
        if let Some(extra) = tensors.keys().min() {
            return Err(Error::Load(format!("unexpected tensor {extra} in checkpoint")));
        }
        Ok(Self {
            tok_embedding,
            pos_embedding,
            layers,
            final_norm,
            lm_head,
        })
    }

    /// Writes `manifest` and a blob named `<manifest stem>.bin` beside it.
    pub fn save_checkpoint(&self, manifest: impl AsRef<Path>) -> Result<()> {
        let manifest = manifest.as_ref();
        let blob_name = format!(
            "{}.bin",
            manifest
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("model")
        );
        let mut text = String::from("# attn-steer checkpoint: name shape byte_offset (f64 little-endian)\n");
        let _ = writeln!(text, "blob {blob_name}");
        let mut blob = Vec::new();
        for (name, t) in self.named() {
            let shape: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(text, "{name} {} {}", shape.join("x"), blob.len());
            for v in &t.data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
        fs::write(dir.join(&blob_name), blob)?;
        fs::write(manifest, text)?;
        Ok(())
    }

    /// Loads a checkpoint and checks every tensor against `cfg`.
    pub fn load_checkpoint(cfg: &ModelConfig, manifest: impl AsRef<Path>) -> Result<Self> {
        let manifest = manifest.as_ref();
        let text = fs::read_to_string(manifest)?;
        let mut blob_name = None;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| Error::Load(format!("manifest line {}: {msg}", lineno + 1));
            match parts.as_slice() {
                ["blob", name] => blob_name = Some(name.to_string()),
                [name, shape, offset] => {
                    let shape = shape
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad("bad shape"))?;
                    let offset = offset.parse::<usize>().map_err(|_| bad("bad offset"))?;
                    entries.push((name.to_string(), shape, offset));
                }
                _ => return Err(bad("expected `name shape offset` or `blob path`")),
            }
        }
        let blob_name = blob_name.ok_or_else(|| Error::Load("manifest has no blob line".into()))?;
        let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
        let blob = fs::read(dir.join(blob_name))?;

        let expected: HashMap<String, Vec<usize>> = expected_tensors(cfg).into_iter().collect();
        let mut tensors = HashMap::new();
        for (name, shape, offset) in entries {
            let want = expected
                .get(&name)
                .ok_or_else(|| Error::Load(format!("unexpected tensor {name} in checkpoint")))?;
            if *want != shape {
                return Err(Error::Load(format!(
                    "tensor {name} has shape {shape:?}, config requires {want:?}"
                )));
            }
            let count: usize = shape.iter().product();
            let end = offset + count * 8;
            if end > blob.len() {
                return Err(Error::Load(format!("tensor {name} runs past end of blob")));
            }
            let data = blob[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if tensors.insert(name.clone(), Tensor { shape, data }).is_some() {
                return Err(Error::Load(format!("tensor {name} listed twice")));
            }
        }
        Self::from_named(cfg, tensors)
    }
}
