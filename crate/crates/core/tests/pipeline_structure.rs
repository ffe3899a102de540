use attn_steer::eval::{load_dataset, QAInstance};
use attn_steer::matching::HashedBagOfTokens;
use attn_steer::model::{
    detokenize, generate, load_or_init_model, tokenize, GenerationParams, ModelConfig, ModelHandle, ModelSource,
};
use attn_steer::pipeline::{
    autopasta_answer, direct_answer, identify, iterative_answer, steered_answer_from, HopContext, Identification,
    PipelineConfig,
};
use attn_steer::prompts::Field;
use attn_steer::steering::{HeadSet, HighlightIndexSet, DEFAULT_DELTA};

fn fixture() -> Vec<QAInstance> {
    load_dataset(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/qa16.jsonl")).unwrap()
}

fn model() -> ModelHandle {
    let cfg = ModelConfig::new(4, 4, 32, 256, 4096).unwrap();
    load_or_init_model(cfg, &ModelSource::Seeded(7)).unwrap()
}

fn cfg() -> PipelineConfig {
    PipelineConfig {
        answer: GenerationParams::greedy(6),
        ..Default::default()
    }
}

fn heads() -> HeadSet {
    HeadSet::try_from_pairs([(0, 1), (1, 2), (3, 3)]).unwrap()
}

/// Maximal runs of consecutive indices.
fn runs(g: &HighlightIndexSet) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in g.iter() {
        match out.last_mut() {
            Some(run) if *run.last().unwrap() + 1 == i => run.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

fn with_matched(inst: &QAInstance, picks: &[usize]) -> Identification {
    Identification {
        g1_raw: vec![],
        prompts: vec![],
        matched: picks.iter().map(|&i| inst.sentences()[i].clone()).collect(),
        fallback: false,
    }
}

#[test]
fn steered_answer_prompt_is_the_direct_prompt() {
    let m = model();
    let provider = HashedBagOfTokens::default();
    for inst in fixture().iter().take(6) {
        let d = direct_answer(&m, inst, &cfg()).unwrap();
        let s = autopasta_answer(&m, inst, &heads(), DEFAULT_DELTA, &cfg(), &provider).unwrap();
        assert_eq!(s.prompts_used.last().unwrap().text.as_bytes(), d.prompts_used[0].text.as_bytes());
    }
}

#[test]
fn identification_step_is_never_steered() {
    let m = model();
    let provider = HashedBagOfTokens::default();
    let c = cfg();
    for inst in fixture().iter().take(4) {
        let s = autopasta_answer(&m, inst, &heads(), DEFAULT_DELTA, &c, &provider).unwrap();
        let budget = GenerationParams::greedy(c.identification_budget(inst));
        let hops = inst.hops().len();
        assert_eq!(s.g1_raw.len(), hops);
        for (prompt, g1) in s.prompts_used[..hops].iter().zip(&s.g1_raw) {
            let plain = generate(&m, &tokenize(&prompt.text), &budget, None).unwrap();
            assert_eq!(&plain.text, g1);
        }
        assert_eq!(identify(&m, inst, &c, &provider).unwrap().g1_raw, s.g1_raw);
    }
}

#[test]
fn highlight_detokenizes_to_matched_sentence() {
    let m = model();
    let data = fixture();
    let inst = data.iter().find(|i| i.id == "nq-congress").unwrap();
    let ident = with_matched(inst, &[1]);
    let r = steered_answer_from(&m, inst, &ident, &heads(), DEFAULT_DELTA, &cfg()).unwrap();
    let tokens = tokenize(&r.prompts_used.last().unwrap().text);
    let ids: Vec<u32> = r.highlight.iter().map(|i| tokens.token_ids[i]).collect();
    assert_eq!(detokenize(&ids), inst.sentences()[1].text);
    assert!(detokenize(&ids).contains("July 2, 1776"));
    assert_eq!(runs(&r.highlight).len(), 1);
    assert!(r.steering_applied);
}

#[test]
fn multi_hop_highlight_is_span_union() {
    let m = model();
    let data = fixture();
    let inst = data.iter().find(|i| i.id == "hp-branford").unwrap();
    let picks = [0, 3];
    let ident = with_matched(inst, &picks);
    let r = steered_answer_from(&m, inst, &ident, &heads(), DEFAULT_DELTA, &cfg()).unwrap();
    let prompt = r.prompts_used.last().unwrap();
    let tokens = tokenize(&prompt.text);

    let mut union = HighlightIndexSet::new();
    for &p in &picks {
        let one = steered_answer_from(&m, inst, &with_matched(inst, &[p]), &heads(), DEFAULT_DELTA, &cfg()).unwrap();
        for i in one.highlight.iter() {
            union.insert(i);
        }
    }
    assert_eq!(r.highlight, union);

    let got: Vec<String> = runs(&r.highlight)
        .iter()
        .map(|run| detokenize(&run.iter().map(|&i| tokens.token_ids[i]).collect::<Vec<_>>()))
        .collect();
    let want: Vec<&str> = picks.iter().map(|&p| inst.sentences()[p].text.as_str()).collect();
    assert_eq!(got, want);
    assert!(want[0].contains("Branford"));
    assert!(want[1].contains("110 miles"));

    let ctx = prompt.field_range(Field::Context).unwrap();
    for i in r.highlight.iter() {
        assert!(ctx.contains(&tokens.offsets[i].start));
    }
}

#[test]
fn multi_hop_identification_runs_once_per_hop() {
    let m = model();
    let provider = HashedBagOfTokens::default();
    let data = fixture();
    let inst = data.iter().find(|i| i.id == "hp-river").unwrap();
    for hop_context in [HopContext::Full, HopContext::PerHop] {
        let c = PipelineConfig { hop_context, ..cfg() };
        let ident = identify(&m, inst, &c, &provider).unwrap();
        assert_eq!(ident.prompts.len(), 2);
        for (p, hop) in ident.prompts.iter().zip(["h1", "h2"]) {
            let ctx = p.field(Field::Context).unwrap();
            match hop_context {
                HopContext::Full => assert_eq!(ctx, inst.context()),
                HopContext::PerHop => assert_eq!(ctx, inst.hop_context(Some(hop))),
            }
        }
        if !ident.fallback {
            for s in &ident.matched {
                assert!(s.hop_id.is_some());
            }
        }
    }
}

#[test]
fn empty_head_set_reproduces_direct_answer() {
    let m = model();
    let provider = HashedBagOfTokens::default();
    for inst in fixture().iter().take(4) {
        let d = direct_answer(&m, inst, &cfg()).unwrap();
        let s = autopasta_answer(&m, inst, &HeadSet::new(), DEFAULT_DELTA, &cfg(), &provider).unwrap();
        assert_eq!(d.answer, s.answer);
        assert!(!s.steering_applied);
    }
}

#[test]
fn iterative_prompt_carries_matched_sentences() {
    let m = model();
    let provider = HashedBagOfTokens::default();
    let inst = &fixture()[0];
    let r = iterative_answer(&m, inst, &cfg(), &provider).unwrap();
    let last = r.prompts_used.last().unwrap();
    let key: Vec<&str> = r.matched_sentences.iter().map(|s| s.text.as_str()).collect();
    assert_eq!(last.field(Field::KeySentence).unwrap(), key.join(" "));
    assert_eq!(last.field(Field::Context).unwrap(), inst.context());
}

#[test]
fn out_of_range_head_set_rejected() {
    let m = model();
    let provider = HashedBagOfTokens::default();
    let bad = HeadSet::try_from_pairs([(4, 0)]).unwrap();
    assert!(autopasta_answer(&m, &fixture()[0], &bad, DEFAULT_DELTA, &cfg(), &provider).is_err());
}
