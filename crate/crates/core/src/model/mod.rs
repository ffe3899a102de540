//! A small pre-norm decoder-only transformer with a KV cache.
//!
//! Every attention head computes its weights through
//! [`softmax_row_into`](crate::steering::softmax_row_into), adding the
//! steering bias when the head is in the active [`SteeringSpec`]. The bias is
//! applied during prefill and at every decode step; the highlight set stays
//! fixed to prompt positions, so generated tokens are always downweighted
//! keys at steered heads.

mod config;
mod tokenizer;
mod weights;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::ModelConfig;
pub use tokenizer::{detokenize, tokenize, TokenizedPrompt};
pub use weights::{expected_tensors, LayerWeights, ModelWeights, Tensor};

use crate::error::{Error, Result};
use crate::steering::{build_bias_row, softmax_row_into, HeadLocation, SteeringSpec};

const NORM_EPS: f64 = 1e-5;

/// Where model weights come from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Seeded(u64),
    Checkpoint(PathBuf),
}

/// Immutable loaded model. Cloning shares the weights.
#[derive(Debug, Clone)]
pub struct ModelHandle {
    config: ModelConfig,
    weights: Arc<ModelWeights>,
}

pub fn load_or_init_model(config: ModelConfig, source: &ModelSource) -> Result<ModelHandle> {
    config.validate()?;
    let weights = match source {
        ModelSource::Seeded(seed) => ModelWeights::seeded(&config, *seed),
        ModelSource::Checkpoint(path) => ModelWeights::load_checkpoint(&config, path)?,
    };
    Ok(ModelHandle {
        config,
        weights: Arc::new(weights),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_new_tokens: usize,
    /// Record per-step attention weights for every layer and head.
    #[serde(default)]
    pub capture_attention: bool,
}

impl GenerationParams {
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self {
            max_new_tokens,
            capture_attention: false,
        }
    }

    pub fn with_capture(mut self) -> Self {
        self.capture_attention = true;
        self
    }
}

/// Attention weights from one forward call. Indexed
/// `weights[layer][head][row][key]`, where row `r` is the query at absolute
/// position `query_start + r` and has `query_start + r + 1` keys.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSnapshot {
    pub query_start: usize,
    pub weights: Vec<Vec<Vec<Vec<f64>>>>,
}

impl AttentionSnapshot {
    pub fn head(&self, head: HeadLocation) -> &[Vec<f64>] {
        &self.weights[head.layer][head.head]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// New tokens, excluding a terminating end-of-sequence token.
    pub token_ids: Vec<u32>,
    pub text: String,
    /// Logits that produced each new token.
    pub step_logits: Vec<Vec<f64>>,
    /// One snapshot per forward call (prefill first), when captured.
    pub snapshots: Vec<AttentionSnapshot>,
}

struct KvCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

impl KvCache {
    fn new(cfg: &ModelConfig) -> Self {
        Self {
            keys: vec![Vec::new(); cfg.num_layers],
            values: vec![Vec::new(); cfg.num_layers],
            len: 0,
        }
    }
}

/// Incremental decoding state over one sequence. Owns its cache, so many
/// sessions may run concurrently over one [`ModelHandle`].
pub struct Session<'m> {
    model: &'m ModelHandle,
    cache: KvCache,
    steering: Option<(&'m SteeringSpec, Vec<f64>)>,
}

impl ModelHandle {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    /// Starts an empty session. Steering highlight indices must already be
    /// valid for the prompt that will be fed.
    pub fn session<'m>(&'m self, steering: Option<&'m SteeringSpec>) -> Result<Session<'m>> {
        let steering = match steering {
            Some(spec) if !spec.head_set.is_empty() => {
                spec.head_set
                    .validate(self.config.num_layers, self.config.num_heads)?;
                let bias =
                    build_bias_row(&spec.highlight, self.config.max_sequence_length, spec.delta())?;
                Some((spec, bias))
            }
            _ => None,
        };
        Ok(Session {
            model: self,
            cache: KvCache::new(&self.config),
            steering,
        })
    }

    /// Logits for every position of `tokens`, computed from scratch.
    pub fn full_logits(&self, tokens: &[u32], steering: Option<&SteeringSpec>) -> Result<Vec<Vec<f64>>> {
        let mut s = self.session(steering)?;
        Ok(s.forward(tokens, false)?.0)
    }
}

impl Session<'_> {
    pub fn len(&self) -> usize {
        self.cache.len
    }

    pub fn is_empty(&self) -> bool {
        self.cache.len == 0
    }

    /// Runs `tokens` through the model after the cached prefix. Returns one
    /// logit row per new token and, if requested, the attention weights.
    pub fn forward(
        &mut self,
        tokens: &[u32],
        capture: bool,
    ) -> Result<(Vec<Vec<f64>>, Option<AttentionSnapshot>)> {
        let cfg = &self.model.config;
        let w = &*self.model.weights;
        let start = self.cache.len;
        let needed = start + tokens.len();
        if needed > cfg.max_sequence_length {
            return Err(Error::Capacity {
                needed,
                capacity: cfg.max_sequence_length,
            });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::Bounds(format!(
                "token {t} outside vocabulary of {}",
                cfg.vocab_size
            )));
        }
        let d = cfg.model_dim;
        let dh = cfg.head_dim;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut hidden: Vec<Vec<f64>> = tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let te = w.tok_embedding.row(t as usize);
                let pe = w.pos_embedding.row(start + i);
                te.iter().zip(pe).map(|(a, b)| a + b).collect()
            })
            .collect();

        let mut snapshot = capture.then(|| AttentionSnapshot {
            query_start: start,
            weights: Vec::with_capacity(cfg.num_layers),
        });

        let mut normed = vec![0.0; d];
        let mut q = vec![0.0; d];
        let mut k = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut up = vec![0.0; cfg.ffn_dim()];
        let mut proj = vec![0.0; d];
        let mut scores = Vec::with_capacity(needed);
        let mut probs = Vec::with_capacity(needed);

        for (l, lw) in w.layers.iter().enumerate() {
            // Append keys and values for every new position first; queries
            // then see exactly the keys at positions <= their own.
            let mut queries = Vec::with_capacity(tokens.len());
            for x in &hidden {
                rms_norm_into(x, &lw.attn_norm.data, &mut normed);
                lw.wq.vec_mul_into(&normed, &mut q);
                lw.wk.vec_mul_into(&normed, &mut k);
                lw.wv.vec_mul_into(&normed, &mut v);
                self.cache.keys[l].extend_from_slice(&k);
                self.cache.values[l].extend_from_slice(&v);
                queries.push(q.clone());
            }
            let keys = &self.cache.keys[l];
            let values = &self.cache.values[l];

            let mut layer_snap: Vec<Vec<Vec<f64>>> = if capture {
                vec![Vec::with_capacity(tokens.len()); cfg.num_heads]
            } else {
                Vec::new()
            };

            for (r, x) in hidden.iter_mut().enumerate() {
                let pos = start + r;
                let visible = pos + 1;
                let mut concat = vec![0.0; d];
                for h in 0..cfg.num_heads {
                    let cols = h * dh..(h + 1) * dh;
                    let qh = &queries[r][cols.clone()];
                    scores.clear();
                    scores.extend((0..visible).map(|j| {
                        let kh = &keys[j * d + cols.start..j * d + cols.end];
                        dot(qh, kh) * scale
                    }));
                    let bias = match &self.steering {
                        Some((spec, bias)) if spec.steers(HeadLocation::new(l, h)) => {
                            Some(&bias[..visible])
                        }
                        _ => None,
                    };
                    probs.resize(visible, 0.0);
                    softmax_row_into(&scores, bias, visible, &mut probs);
                    let out = &mut concat[cols.clone()];
                    for (j, p) in probs.iter().enumerate() {
                        let vh = &values[j * d + cols.start..j * d + cols.end];
                        for (o, vv) in out.iter_mut().zip(vh) {
                            *o += p * vv;
                        }
                    }
                    if let Some(rows) = layer_snap.get_mut(h) {
                        rows.push(probs.clone());
                    }
                }
                lw.wo.vec_mul_into(&concat, &mut proj);
                for (xi, p) in x.iter_mut().zip(&proj) {
                    *xi += p;
                }

                rms_norm_into(x, &lw.ffn_norm.data, &mut normed);
                lw.w_up.vec_mul_into(&normed, &mut up);
                for u in &mut up {
                    *u = gelu(*u);
                }
                lw.w_down.vec_mul_into(&up, &mut proj);
                for (xi, p) in x.iter_mut().zip(&proj) {
                    *xi += p;
                }
            }
            if let Some(s) = snapshot.as_mut() {
                s.weights.push(layer_snap);
            }
        }
        self.cache.len = needed;

        let logits = hidden
            .iter()
            .map(|x| {
                rms_norm_into(x, &w.final_norm.data, &mut normed);
                w.lm_head.vec_mul(&normed)
            })
            .collect();
        Ok((logits, snapshot))
    }
}

/// Dot product with four independent partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let mut acc = [0.0; 4];
    for (x, y) in ca.clone().zip(cb.clone()) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

fn rms_norm_into(x: &[f64], gain: &[f64], out: &mut [f64]) {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (ms + NORM_EPS).sqrt();
    for ((o, xi), g) in out.iter_mut().zip(x).zip(gain) {
        *o = xi * inv * g;
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Greedy argmax; ties go to the lowest token id.
pub fn argmax(logits: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as u32
}

/// Greedy generation with optional steering. The prompt is prefilled in one
/// call, then one token is fed per step through the KV cache.
pub fn generate(
    model: &ModelHandle,
    prompt: &TokenizedPrompt,
    params: &GenerationParams,
    spec: Option<&SteeringSpec>,
) -> Result<Generation> {
    let cfg = model.config();
    if params.max_new_tokens == 0 {
        return Err(Error::Argument("max_new_tokens must be at least 1".into()));
    }
    if prompt.is_empty() {
        return Err(Error::Argument("cannot generate from an empty prompt".into()));
    }
    let needed = prompt.len() + params.max_new_tokens;
    if needed > cfg.max_sequence_length {
        return Err(Error::Capacity {
            needed,
            capacity: cfg.max_sequence_length,
        });
    }
    if let Some(spec) = spec {
        spec.highlight.check_within(prompt.len())?;
    }

    let mut session = model.session(spec)?;
    let capture = params.capture_attention;
    let (mut logits, snap) = session.forward(&prompt.token_ids, capture)?;
    let mut snapshots: Vec<AttentionSnapshot> = snap.into_iter().collect();
    let mut last = logits.pop().expect("prompt is non-empty");

    let mut token_ids = Vec::new();
    let mut step_logits = Vec::new();
    for step in 0..params.max_new_tokens {
        let next = argmax(&last);
        step_logits.push(last);
        if Some(next) == cfg.eos_token {
            break;
        }
        token_ids.push(next);
        if step + 1 == params.max_new_tokens {
            break;
        }
        let (mut l, snap) = session.forward(&[next], capture)?;
        snapshots.extend(snap);
        last = l.pop().expect("one token fed");
    }
    Ok(Generation {
        text: detokenize(&token_ids),
        token_ids,
        step_logits,
        snapshots,
    })
}
