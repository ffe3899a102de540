//! Match-back: map a free-text key-sentence generation onto the closest
//! verbatim context sentence by embedding cosine similarity.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sentence of a QA context. `start..end` is a byte range into the
/// instance's full rendered context string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub text: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity clamped to `[-1, 1]`; `0` if either vector has zero norm.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
    fn dim(&self) -> usize;
}

/// Lowercased tokens with punctuation removed, split on whitespace.
pub fn bag_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Default provider: hashed bag-of-tokens counts, L2-normalized.
/// Order-invariant; texts with identical token multisets embed identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagOfTokens {
    dim: usize,
}

impl HashedBagOfTokens {
    pub const DEFAULT_DIM: usize = 1024;

    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dimension must be positive".into()));
        }
        Ok(Self { dim })
    }
}

impl Default for HashedBagOfTokens {
    fn default() -> Self {
        Self {
            dim: Self::DEFAULT_DIM,
        }
    }
}

impl EmbeddingProvider for HashedBagOfTokens {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut v = vec![0.0; self.dim];
        for tok in bag_tokens(text) {
            v[(fnv1a(tok.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(EmbeddingVector(v))
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    text: String,
    vector: Vec<f64>,
}

/// Precomputed vectors keyed by exact text, read from a line-delimited file
/// of `{"text": ..., "vector": [...]}` records.
#[derive(Debug, Clone)]
pub struct ExternalEmbeddings {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl ExternalEmbeddings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let rec: EmbeddingRecord =
                serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            if rec.vector.is_empty() || rec.vector.iter().any(|v| !v.is_finite()) {
                return Err(parse_err("vector must be non-empty and finite".into()));
            }
            match dim {
                None => dim = Some(rec.vector.len()),
                Some(d) if d != rec.vector.len() => {
                    return Err(parse_err(format!(
                        "vector has dimension {}, expected {d}",
                        rec.vector.len()
                    )))
                }
                _ => {}
            }
            vectors.insert(rec.text, rec.vector);
        }
        let dim = dim.ok_or_else(|| Error::Lookup(format!("{} holds no vectors", path.display())))?;
        Ok(Self { dim, vectors })
    }
}

impl EmbeddingProvider for ExternalEmbeddings {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.vectors
            .get(text)
            .map(|v| EmbeddingVector(v.clone()))
            .ok_or_else(|| Error::Lookup(format!("no embedding for text {text:?}")))
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector> {
    provider.embed(text)
}

/// Sentence with the highest cosine similarity to `g1`; ties go to the
/// lowest index.
pub fn match_key_sentence<'s>(
    g1: &str,
    sentences: &'s [SentenceSpan],
    provider: &dyn EmbeddingProvider,
) -> Result<(&'s SentenceSpan, f64)> {
    if sentences.is_empty() {
        return Err(Error::Argument("cannot match against an empty sentence list".into()));
    }
    let query = provider.embed(g1)?;
    let mut best: Option<(&SentenceSpan, f64)> = None;
    for s in sentences {
        let sim = cosine(&query, &provider.embed(&s.text)?);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((s, sim));
        }
    }
    Ok(best.expect("non-empty"))
}

/// One identification generation, tagged with the hop it was produced for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopGeneration {
    pub hop_id: Option<String>,
    pub text: String,
}

/// Matches each hop's generation. When the hop carries a label and some
/// sentences share it, matching is restricted to those sentences; otherwise
/// all sentences are candidates. Repeated matches are collapsed, keeping the
/// first occurrence.
pub fn match_per_hop(
    generations: &[HopGeneration],
    sentences: &[SentenceSpan],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<SentenceSpan>> {
    let mut out: Vec<SentenceSpan> = Vec::new();
    for g in generations {
        let pool: Vec<SentenceSpan> = match &g.hop_id {
            Some(hop) if sentences.iter().any(|s| s.hop_id.as_ref() == Some(hop)) => sentences
                .iter()
                .filter(|s| s.hop_id.as_ref() == Some(hop))
                .cloned()
                .collect(),
            _ => sentences.to_vec(),
        };
        let (chosen, _) = match_key_sentence(&g.text, &pool, provider)?;
        if !out.iter().any(|s| s.index == chosen.index) {
            out.push(chosen.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(texts: &[&str]) -> Vec<SentenceSpan> {
        let mut pos = 0;
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let s = SentenceSpan {
                    text: t.to_string(),
                    index: i,
                    start: pos,
                    end: pos + t.len(),
                    hop_id: None,
                };
                pos += t.len() + 1;
                s
            })
            .collect()
    }

    #[test]
    fn embedding_is_deterministic_and_order_invariant() {
        let p = HashedBagOfTokens::default();
        assert_eq!(p.embed("aa bb").unwrap(), p.embed("aa bb").unwrap());
        assert_eq!(p.embed("aa bb").unwrap(), p.embed("bb aa").unwrap());
        assert_eq!(p.embed("AA, bb!").unwrap(), p.embed("aa bb").unwrap());
    }

    #[test]
    fn disjoint_vocabulary_has_zero_cosine() {
        let p = HashedBagOfTokens::default();
        let a = p.embed("red apples grow quickly").unwrap();
        let b = p.embed("blue oceans move slowly").unwrap();
        let ta = bag_tokens("red apples grow quickly");
        let tb = bag_tokens("blue oceans move slowly");
        let buckets = |ts: &[String]| -> Vec<u64> {
            ts.iter().map(|t| fnv1a(t.as_bytes()) % 1024).collect()
        };
        assert!(buckets(&ta).iter().all(|x| !buckets(&tb).contains(x)), "hash collision in fixture");
        assert_eq!(cosine(&a, &b), 0.0);
    }

    #[test]
    fn zero_norm_similarity_is_zero() {
        let p = HashedBagOfTokens::default();
        let empty = p.embed("?!").unwrap();
        assert_eq!(empty.norm(), 0.0);
        assert_eq!(cosine(&empty, &p.embed("word").unwrap()), 0.0);
        let s = spans(&["alpha", "beta"]);
        let (chosen, sim) = match_key_sentence("", &s, &p).unwrap();
        assert_eq!((chosen.index, sim), (0, 0.0));
    }

    #[test]
    fn exact_copy_scores_one() {
        let p = HashedBagOfTokens::default();
        let s = spans(&["one fish", "two fish", "red fish", "blue fish"]);
        let (chosen, sim) = match_key_sentence("red fish", &s, &p).unwrap();
        assert_eq!(chosen.index, 2);
        assert!((sim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let p = HashedBagOfTokens::default();
        let s = spans(&["x y", "y x", "z"]);
        assert_eq!(match_key_sentence("x y", &s, &p).unwrap().0.index, 0);
    }

    #[test]
    fn empty_sentence_list_is_an_error() {
        let p = HashedBagOfTokens::default();
        assert!(matches!(match_key_sentence("a", &[], &p), Err(Error::Argument(_))));
    }

    #[test]
    fn per_hop_single_and_collapsed() {
        let p = HashedBagOfTokens::default();
        let s = spans(&["cats purr softly", "dogs bark loudly"]);
        let one = match_per_hop(
            &[HopGeneration { hop_id: None, text: "dogs bark".into() }],
            &s,
            &p,
        )
        .unwrap();
        assert_eq!(one, vec![match_key_sentence("dogs bark", &s, &p).unwrap().0.clone()]);
        let both = match_per_hop(
            &[
                HopGeneration { hop_id: None, text: "dogs bark".into() },
                HopGeneration { hop_id: None, text: "loudly barking dogs".into() },
            ],
            &s,
            &p,
        )
        .unwrap();
        assert_eq!(both.len(), 1);
        assert_eq!(both[0].index, 1);
    }

    #[test]
    fn per_hop_restricts_to_labelled_sentences() {
        let p = HashedBagOfTokens::default();
        let mut s = spans(&["cats purr", "cats purr loudly", "dogs bark"]);
        s[0].hop_id = Some("a".into());
        s[1].hop_id = Some("b".into());
        s[2].hop_id = Some("b".into());
        let out = match_per_hop(
            &[HopGeneration { hop_id: Some("b".into()), text: "cats purr".into() }],
            &s,
            &p,
        )
        .unwrap();
        assert_eq!(out[0].index, 1);
    }

    #[test]
    fn external_file_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        fs::write(
            &path,
            "{\"text\": \"a\", \"vector\": [1.0, 0.0]}\n{\"text\": \"b\", \"vector\": [0.0, 2.0]}\n",
        )
        .unwrap();
        let e = ExternalEmbeddings::load(&path).unwrap();
        assert_eq!(e.dim(), 2);
        assert_eq!(embed("b", &e).unwrap(), EmbeddingVector(vec![0.0, 2.0]));
        assert!(matches!(e.embed("c"), Err(Error::Lookup(_))));

        fs::write(&path, "{\"text\": \"a\", \"vector\": [1.0]}\n{\"text\": \"b\", \"vector\": [0.0, 2.0]}\n").unwrap();
        assert!(matches!(ExternalEmbeddings::load(&path), Err(Error::Parse { line: 2, .. })));
    }
}
