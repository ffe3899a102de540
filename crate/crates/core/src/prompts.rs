//! Prompt templates and highlight location.
//!
//! Templates are plain text with `{context}`, `{question}` and
//! `{key_sentence}` placeholders. The built-in templates live in
//! `templates/*.txt` and are compiled in; a directory with files of the same
//! names overrides them.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::SentenceSpan;
use crate::model::TokenizedPrompt;
use crate::steering::HighlightIndexSet;

pub const IDENTIFICATION_TEMPLATE: &str = include_str!("../templates/identification.txt");
pub const DIRECT_TEMPLATE: &str = include_str!("../templates/direct.txt");
pub const SECOND_ROUND_TEMPLATE: &str = include_str!("../templates/iterative_second_round.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Context,
    Question,
    KeySentence,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Context => "context",
            Field::Question => "question",
            Field::KeySentence => "key_sentence",
        }
    }

    fn parse(name: &str) -> Option<Self> {
        match name {
            "context" => Some(Field::Context),
            "question" => Some(Field::Question),
            "key_sentence" => Some(Field::KeySentence),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Field(Field),
}

/// A parsed template. Each field appears at most once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    /// Parses `{name}` placeholders. Braces that do not enclose a known field
    /// name are kept as literal text.
    pub fn parse(source: &str, required: &[Field]) -> Result<Self> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            literal.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}').and_then(|close| Field::parse(&after[..close]).map(|f| (f, close))) {
                Some((field, close)) => {
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    if segments.contains(&Segment::Field(field)) {
                        return Err(Error::Config(format!(
                            "template uses {{{}}} more than once",
                            field.name()
                        )));
                    }
                    segments.push(Segment::Field(field));
                    rest = &after[close + 1..];
                }
                None => {
                    literal.push('{');
                    rest = after;
                }
            }
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        let t = Self { segments };
        for f in required {
            if !t.has_field(*f) {
                return Err(Error::Config(format!("template is missing {{{}}}", f.name())));
            }
        }
        Ok(t)
    }

    pub fn has_field(&self, f: Field) -> bool {
        self.segments.contains(&Segment::Field(f))
    }

    pub fn render(&self, values: &[(Field, &str)]) -> RenderedPrompt {
        let mut text = String::new();
        let mut field_spans = BTreeMap::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => text.push_str(s),
                Segment::Field(f) => {
                    let value = values
                        .iter()
                        .find(|(k, _)| k == f)
                        .map(|(_, v)| *v)
                        .unwrap_or("");
                    let start = text.len();
                    text.push_str(value);
                    field_spans.insert(f.name().to_string(), start..text.len());
                }
            }
        }
        RenderedPrompt { text, field_spans }
    }
}

/// Rendered prompt text with the byte range of every substituted field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub field_spans: BTreeMap<String, Range<usize>>,
}

impl RenderedPrompt {
    pub fn field(&self, f: Field) -> Option<&str> {
        self.field_spans.get(f.name()).map(|r| &self.text[r.clone()])
    }

    pub fn field_range(&self, f: Field) -> Option<Range<usize>> {
        self.field_spans.get(f.name()).cloned()
    }
}

/// The three templates used by the answering methods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub identification: Template,
    pub direct: Template,
    pub second_round: Template,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::from_sources(IDENTIFICATION_TEMPLATE, DIRECT_TEMPLATE, SECOND_ROUND_TEMPLATE)
            .expect("built-in templates parse")
    }
}

impl PromptTemplates {
    pub fn from_sources(identification: &str, direct: &str, second_round: &str) -> Result<Self> {
        use Field::*;
        Ok(Self {
            identification: Template::parse(identification, &[Question, Context])?,
            direct: Template::parse(direct, &[Question, Context])?,
            second_round: Template::parse(second_round, &[Question, Context, KeySentence])?,
        })
    }

    /// Reads `identification.txt`, `direct.txt` and
    /// `iterative_second_round.txt` from `dir`; absent files keep the
    /// built-in text.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str, fallback: &str| -> Result<String> {
            let p = dir.join(name);
            if p.exists() {
                Ok(fs::read_to_string(p)?)
            } else {
                Ok(fallback.to_string())
            }
        };
        Self::from_sources(
            &read("identification.txt", IDENTIFICATION_TEMPLATE)?,
            &read("direct.txt", DIRECT_TEMPLATE)?,
            &read("iterative_second_round.txt", SECOND_ROUND_TEMPLATE)?,
        )
    }

    pub fn render_identification(&self, question: &str, context: &str) -> RenderedPrompt {
        self.identification
            .render(&[(Field::Question, question), (Field::Context, context)])
    }

    pub fn render_direct(&self, question: &str, context: &str) -> RenderedPrompt {
        self.direct
            .render(&[(Field::Question, question), (Field::Context, context)])
    }

    pub fn render_iterative_second_round(
        &self,
        question: &str,
        context: &str,
        key_sentence: &str,
    ) -> RenderedPrompt {
        self.second_round.render(&[
            (Field::Question, question),
            (Field::Context, context),
            (Field::KeySentence, key_sentence),
        ])
    }
}

pub fn render_identification(question: &str, context: &str) -> RenderedPrompt {
    PromptTemplates::default().render_identification(question, context)
}

pub fn render_direct(question: &str, context: &str) -> RenderedPrompt {
    PromptTemplates::default().render_direct(question, context)
}

pub fn render_iterative_second_round(question: &str, context: &str, key_sentence: &str) -> RenderedPrompt {
    PromptTemplates::default().render_iterative_second_round(question, context, key_sentence)
}

/// Token indices covering `spans` inside the rendered prompt's context
/// field. A token is included when its byte range intersects a span.
pub fn locate_highlight(
    rendered: &RenderedPrompt,
    spans: &[SentenceSpan],
    prompt_tokens: &TokenizedPrompt,
) -> Result<HighlightIndexSet> {
    let ctx = rendered
        .field_range(Field::Context)
        .ok_or_else(|| Error::Consistency("rendered prompt has no context field".into()))?;
    if prompt_tokens.offsets.last().map_or(0, |r| r.end) != rendered.text.len() {
        return Err(Error::Consistency(
            "prompt tokens were not produced from the rendered text".into(),
        ));
    }
    let mut g = HighlightIndexSet::new();
    for span in spans {
        if span.start > span.end || span.end > ctx.len() {
            return Err(Error::Consistency(format!(
                "sentence {} range {}..{} lies outside the context field of length {}",
                span.index,
                span.start,
                span.end,
                ctx.len()
            )));
        }
        let (a, b) = (ctx.start + span.start, ctx.start + span.end);
        if rendered.text.get(a..b) != Some(span.text.as_str()) {
            return Err(Error::Consistency(format!(
                "sentence {} text does not match the context at {}..{}",
                span.index, span.start, span.end
            )));
        }
        let offsets = &prompt_tokens.offsets;
        let first = offsets.partition_point(|r| r.end <= a);
        for (i, r) in offsets.iter().enumerate().skip(first) {
            if r.start >= b {
                break;
            }
            g.insert(i);
        }
    }
    Ok(g)
}
