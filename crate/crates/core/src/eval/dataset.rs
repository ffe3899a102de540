//! QA instances, the line-delimited dataset format and profiling/test splits.
//!
//! One JSON record per line:
//!
//! ```json
//! {"id": "nq-0", "question": "...", "answers": ["..."],
//!  "passages": [{"title": null, "hop_id": null, "text": "...",
//!                "sentences": [{"start": 0, "end": 42, "text": "..."}]}]}
//! ```
//!
//! Sentence offsets are character (code point) offsets into the passage
//! text and are authoritative; an optional `text` is cross-checked against
//! them.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::SentenceSpan;

/// Default size of the profiling split.
pub const DEFAULT_PROFILING_COUNT: usize = 1000;

/// One passage; sentence ranges are byte ranges into `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub title: Option<String>,
    pub hop_id: Option<String>,
    pub text: String,
    pub sentences: Vec<Range<usize>>,
}

impl Passage {
    /// Joins `sentences` with `sep` and records their ranges.
    pub fn from_sentences(title: Option<&str>, hop_id: Option<&str>, sentences: &[&str], sep: &str) -> Self {
        let mut text = String::new();
        let mut ranges = Vec::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            if i > 0 {
                text.push_str(sep);
            }
            let start = text.len();
            text.push_str(s);
            ranges.push(start..text.len());
        }
        Self {
            title: title.map(str::to_owned),
            hop_id: hop_id.map(str::to_owned),
            text,
            sentences: ranges,
        }
    }

    fn validate(&self) -> Result<()> {
        let mut prev_end = 0;
        for (i, r) in self.sentences.iter().enumerate() {
            if r.start >= r.end {
                return Err(Error::Consistency(format!("sentence {i} is empty or reversed")));
            }
            if r.start < prev_end {
                return Err(Error::Consistency(format!(
                    "sentence {i} overlaps or precedes the previous sentence"
                )));
            }
            if r.end > self.text.len()
                || !self.text.is_char_boundary(r.start)
                || !self.text.is_char_boundary(r.end)
            {
                return Err(Error::Consistency(format!("sentence {i} lies outside the passage")));
            }
            prev_end = r.end;
        }
        Ok(())
    }
}

/// Renders passages as one context string and returns, per passage, the
/// byte offset where its text begins.
fn render_passages<'a>(passages: impl IntoIterator<Item = &'a Passage>) -> (String, Vec<usize>) {
    let passages: Vec<&Passage> = passages.into_iter().collect();
    let numbered = passages.len() > 1;
    let mut context = String::new();
    let mut starts = Vec::with_capacity(passages.len());
    for (k, p) in passages.iter().enumerate() {
        if k > 0 {
            context.push('\n');
        }
        if numbered {
            context.push_str(&format!("[{}]: ", k + 1));
        }
        if let Some(t) = &p.title {
            context.push_str(t);
            context.push_str(" - ");
        }
        starts.push(context.len());
        context.push_str(&p.text);
    }
    (context, starts)
}

/// One open-book QA example with its rendered context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAInstance {
    pub id: String,
    pub question: String,
    pub passages: Vec<Passage>,
    pub answers: Vec<String>,
    context: String,
    sentences: Vec<SentenceSpan>,
}

impl QAInstance {
    pub fn new(id: impl Into<String>, question: impl Into<String>, passages: Vec<Passage>, answers: Vec<String>) -> Result<Self> {
        if passages.is_empty() {
            return Err(Error::Consistency("instance has no passages".into()));
        }
        if answers.is_empty() {
            return Err(Error::Consistency("instance has no gold answers".into()));
        }
        let labelled = passages.iter().filter(|p| p.hop_id.is_some()).count();
        if labelled != 0 && labelled != passages.len() {
            return Err(Error::Consistency(
                "either every passage carries a hop_id or none does".into(),
            ));
        }
        for (i, p) in passages.iter().enumerate() {
            p.validate()
                .map_err(|e| Error::Consistency(format!("passage {i}: {e}")))?;
        }
        let (context, starts) = render_passages(&passages);
        let mut sentences = Vec::new();
        for (p, base) in passages.iter().zip(starts) {
            for r in &p.sentences {
                sentences.push(SentenceSpan {
                    text: p.text[r.clone()].to_string(),
                    index: sentences.len(),
                    start: base + r.start,
                    end: base + r.end,
                    hop_id: p.hop_id.clone(),
                });
            }
        }
        if sentences.is_empty() {
            return Err(Error::Consistency("instance has no sentences".into()));
        }
        Ok(Self {
            id: id.into(),
            question: question.into(),
            passages,
            answers,
            context,
            sentences,
        })
    }

    /// Full context: a single passage verbatim, or `[k]: ` numbered lines.
    pub fn context(&self) -> &str {
        &self.context
    }

    /// All context sentences, offsets into [`Self::context`].
    pub fn sentences(&self) -> &[SentenceSpan] {
        &self.sentences
    }

    /// Distinct hop labels in passage order, or a single `None` hop.
    pub fn hops(&self) -> Vec<Option<String>> {
        let mut hops: Vec<Option<String>> = Vec::new();
        for p in &self.passages {
            if !hops.contains(&p.hop_id) {
                hops.push(p.hop_id.clone());
            }
        }
        hops
    }

    /// Context made of only the passages of one hop.
    pub fn hop_context(&self, hop: Option<&str>) -> String {
        render_passages(self.passages.iter().filter(|p| p.hop_id.as_deref() == hop)).0
    }
}

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    start: usize,
    end: usize,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct PassageRecord {
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    hop_id: Option<String>,
    text: String,
    sentences: Vec<SentenceRecord>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    question: String,
    passages: Vec<PassageRecord>,
    answers: Vec<String>,
}

fn char_to_byte(text: &str, char_offset: usize) -> Option<usize> {
    text.char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .nth(char_offset)
}

fn byte_to_char(text: &str, byte_offset: usize) -> usize {
    text[..byte_offset].chars().count()
}

impl InstanceRecord {
    fn into_instance(self) -> Result<QAInstance> {
        let mut passages = Vec::with_capacity(self.passages.len());
        for (pi, p) in self.passages.into_iter().enumerate() {
            let mut ranges = Vec::with_capacity(p.sentences.len());
            for (si, s) in p.sentences.iter().enumerate() {
                let (Some(a), Some(b)) = (char_to_byte(&p.text, s.start), char_to_byte(&p.text, s.end)) else {
                    return Err(Error::Consistency(format!(
                        "passage {pi} sentence {si}: offsets {}..{} outside passage",
                        s.start, s.end
                    )));
                };
                if let Some(t) = &s.text {
                    if p.text.get(a..b) != Some(t.as_str()) {
                        return Err(Error::Consistency(format!(
                            "passage {pi} sentence {si}: text does not match offsets {}..{}",
                            s.start, s.end
                        )));
                    }
                }
                ranges.push(a..b);
            }
            passages.push(Passage {
                title: p.title,
                hop_id: p.hop_id,
                text: p.text,
                sentences: ranges,
            });
        }
        QAInstance::new(self.id, self.question, passages, self.answers)
    }

    fn from_instance(inst: &QAInstance) -> Self {
        Self {
            id: inst.id.clone(),
            question: inst.question.clone(),
            answers: inst.answers.clone(),
            passages: inst
                .passages
                .iter()
                .map(|p| PassageRecord {
                    title: p.title.clone(),
                    hop_id: p.hop_id.clone(),
                    sentences: p
                        .sentences
                        .iter()
                        .map(|r| SentenceRecord {
                            start: byte_to_char(&p.text, r.start),
                            end: byte_to_char(&p.text, r.end),
                            text: Some(p.text[r.clone()].to_string()),
                        })
                        .collect(),
                    text: p.text.clone(),
                })
                .collect(),
        }
    }
}

/// Parses one dataset record.
pub fn parse_instance(line: &str) -> Result<QAInstance> {
    let rec: InstanceRecord = serde_json::from_str(line)?;
    rec.into_instance()
}

/// Serializes an instance as one dataset line (no trailing newline).
pub fn instance_to_line(inst: &QAInstance) -> String {
    serde_json::to_string(&InstanceRecord::from_instance(inst)).expect("record serializes")
}

/// Loads and validates a line-delimited dataset. Blank lines are skipped;
/// any malformed record fails the load with its 1-based line number.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QAInstance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_instance(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, instances: &[QAInstance]) -> Result<()> {
    let mut text = String::new();
    for inst in instances {
        text.push_str(&instance_to_line(inst));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub profiling: Vec<QAInstance>,
    pub test: Vec<QAInstance>,
    pub seed: u64,
}

/// Seeded shuffle, then the first `profiling_count` instances (or all of
/// them, for a smaller dataset) become the profiling split.
pub fn split(instances: Vec<QAInstance>, profiling_count: usize, seed: u64) -> DatasetSplit {
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = profiling_count.min(instances.len());
    let mut slots: Vec<Option<QAInstance>> = instances.into_iter().map(Some).collect();
    let mut pick = |ix: &[usize]| -> Vec<QAInstance> {
        ix.iter().map(|&i| slots[i].take().expect("each index once")).collect()
    };
    let profiling = pick(&order[..take]);
    let test = pick(&order[take..]);
    DatasetSplit { profiling, test, seed }
}
