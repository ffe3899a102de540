//! The three answering methods.
//!
//! - **direct**: render the direct template and decode greedily.
//! - **iterative**: ask for the key sentence (one identification prompt per
//!   hop), match each generation back to a context sentence, then answer
//!   with the matched sentences appended as a `Key Sentence` field.
//! - **steered** (`autopasta`): the same unsteered identification and
//!   match-back, then the *direct* prompt, decoded with the attention bias
//!   on the matched sentences' tokens at the chosen heads. The answering
//!   prompt text is identical to the direct method's.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{Method, QAInstance};
use crate::matching::{match_per_hop, EmbeddingProvider, HopGeneration, SentenceSpan};
use crate::model::{generate, tokenize, AttentionSnapshot, GenerationParams, ModelHandle};
use crate::prompts::{locate_highlight, PromptTemplates, RenderedPrompt};
use crate::steering::{HeadSet, HighlightIndexSet, SteeringSpec};

/// Which context an identification prompt sees on multi-hop instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopContext {
    /// Every hop's prompt carries the full context.
    #[default]
    Full,
    /// Each hop's prompt carries only that hop's passages.
    PerHop,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub templates: PromptTemplates,
    /// Budget and capture flag for answer generation.
    pub answer: GenerationParams,
    /// Extra tokens granted to identification beyond the longest sentence.
    pub identification_margin: usize,
    /// Fixed identification budget; overrides the sentence-length rule.
    pub identification_max_new_tokens: Option<usize>,
    pub hop_context: HopContext,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            templates: PromptTemplates::default(),
            answer: GenerationParams::greedy(16),
            identification_margin: 8,
            identification_max_new_tokens: None,
            hop_context: HopContext::Full,
        }
    }
}

impl PipelineConfig {
    /// Identification budget for an instance: longest sentence in tokens
    /// plus the margin, unless fixed.
    pub fn identification_budget(&self, instance: &QAInstance) -> usize {
        self.identification_max_new_tokens.unwrap_or_else(|| {
            let longest = instance
                .sentences()
                .iter()
                .map(|s| tokenize(&s.text).len())
                .max()
                .unwrap_or(0);
            (longest + self.identification_margin).max(1)
        })
    }
}

/// Output of the unsteered identification + match-back steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub g1_raw: Vec<String>,
    pub prompts: Vec<RenderedPrompt>,
    pub matched: Vec<SentenceSpan>,
    /// Every identification generation was empty, so nothing is highlighted.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub answer: String,
    pub matched_sentences: Vec<SentenceSpan>,
    pub g1_raw: Vec<String>,
    pub prompts_used: Vec<RenderedPrompt>,
    pub steering_applied: bool,
    /// Token positions highlighted in the answering prompt.
    pub highlight: HighlightIndexSet,
    pub identification_fallback: bool,
    /// Answer-generation attention, when capture is enabled.
    pub snapshots: Vec<AttentionSnapshot>,
}

/// Identification (never steered) followed by per-hop match-back.
pub fn identify(
    model: &ModelHandle,
    instance: &QAInstance,
    cfg: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Identification> {
    let budget = GenerationParams::greedy(cfg.identification_budget(instance));
    let mut g1_raw = Vec::new();
    let mut prompts = Vec::new();
    let mut usable = Vec::new();
    for hop in instance.hops() {
        let context = match (cfg.hop_context, &hop) {
            (HopContext::PerHop, Some(h)) => instance.hop_context(Some(h)),
            _ => instance.context().to_string(),
        };
        let prompt = cfg.templates.render_identification(&instance.question, &context);
        let g = generate(model, &tokenize(&prompt.text), &budget, None)?;
        prompts.push(prompt);
        if !g.text.trim().is_empty() {
            usable.push(HopGeneration {
                hop_id: hop.clone(),
                text: g.text.clone(),
            });
        }
        g1_raw.push(g.text);
    }
    let fallback = usable.is_empty();
    let matched = if fallback {
        Vec::new()
    } else {
        match_per_hop(&usable, instance.sentences(), provider)?
    };
    Ok(Identification {
        g1_raw,
        prompts,
        matched,
        fallback,
    })
}

pub fn direct_answer(model: &ModelHandle, instance: &QAInstance, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let prompt = cfg.templates.render_direct(&instance.question, instance.context());
    let g = generate(model, &tokenize(&prompt.text), &cfg.answer, None)?;
    Ok(PipelineResult {
        answer: g.text,
        matched_sentences: Vec::new(),
        g1_raw: Vec::new(),
        prompts_used: vec![prompt],
        steering_applied: false,
        highlight: HighlightIndexSet::new(),
        identification_fallback: false,
        snapshots: g.snapshots,
    })
}

pub fn iterative_answer(
    model: &ModelHandle,
    instance: &QAInstance,
    cfg: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<PipelineResult> {
    let ident = identify(model, instance, cfg, provider)?;
    let key = ident
        .matched
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let prompt = cfg
        .templates
        .render_iterative_second_round(&instance.question, instance.context(), &key);
    let g = generate(model, &tokenize(&prompt.text), &cfg.answer, None)?;
    let mut prompts_used = ident.prompts;
    prompts_used.push(prompt);
    Ok(PipelineResult {
        answer: g.text,
        matched_sentences: ident.matched,
        g1_raw: ident.g1_raw,
        prompts_used,
        steering_applied: false,
        highlight: HighlightIndexSet::new(),
        identification_fallback: ident.fallback,
        snapshots: g.snapshots,
    })
}

/// Identify, match back, then answer the direct prompt with the matched
/// sentences highlighted at `head_set`.
pub fn autopasta_answer(
    model: &ModelHandle,
    instance: &QAInstance,
    head_set: &HeadSet,
    delta: f64,
    cfg: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<PipelineResult> {
    let cfg_model = model.config();
    head_set.validate(cfg_model.num_layers, cfg_model.num_heads)?;
    let ident = identify(model, instance, cfg, provider)?;
    steered_answer_from(model, instance, &ident, head_set, delta, cfg)
}

/// The answering step alone, reusing an earlier identification. Profiling
/// calls this directly since identification does not depend on the heads.
pub fn steered_answer_from(
    model: &ModelHandle,
    instance: &QAInstance,
    ident: &Identification,
    head_set: &HeadSet,
    delta: f64,
    cfg: &PipelineConfig,
) -> Result<PipelineResult> {
    let prompt = cfg.templates.render_direct(&instance.question, instance.context());
    let tokens = tokenize(&prompt.text);
    let highlight = locate_highlight(&prompt, &ident.matched, &tokens)?;
    let spec = SteeringSpec::new(delta, head_set.clone(), highlight.clone())?;
    let steer = !head_set.is_empty() && !highlight.is_empty();
    let g = generate(model, &tokens, &cfg.answer, steer.then_some(&spec))?;
    let mut prompts_used = ident.prompts.clone();
    prompts_used.push(prompt);
    Ok(PipelineResult {
        answer: g.text,
        matched_sentences: ident.matched.clone(),
        g1_raw: ident.g1_raw.clone(),
        prompts_used,
        steering_applied: steer,
        highlight,
        identification_fallback: ident.fallback,
        snapshots: g.snapshots,
    })
}

/// Runs one answering method. `head_set` and `delta` are used only by
/// [`Method::Steered`].
pub fn answer(
    method: Method,
    model: &ModelHandle,
    instance: &QAInstance,
    head_set: &HeadSet,
    delta: f64,
    cfg: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<PipelineResult> {
    match method {
        Method::Direct => direct_answer(model, instance, cfg),
        Method::Iterative => iterative_answer(model, instance, cfg, provider),
        Method::Steered => autopasta_answer(model, instance, head_set, delta, cfg, provider),
    }
}
