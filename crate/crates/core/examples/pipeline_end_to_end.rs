//! Runs the three answering methods on the bundled fixture and scores them.

use attn_steer::eval::{exact_match, load_dataset, token_f1, Method};
use attn_steer::matching::HashedBagOfTokens;
use attn_steer::model::{load_or_init_model, GenerationParams, ModelConfig, ModelSource};
use attn_steer::pipeline::{answer, PipelineConfig};
use attn_steer::steering::{HeadSet, DEFAULT_DELTA};

fn main() -> attn_steer::Result<()> {
    let data = load_dataset(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/qa4.jsonl"))?;
    let model = load_or_init_model(ModelConfig::new(4, 4, 32, 256, 4096)?, &ModelSource::Seeded(7))?;
    let heads = HeadSet::load(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/heads_in_domain.json"))?;
    let cfg = PipelineConfig { answer: GenerationParams::greedy(8), ..Default::default() };
    let provider = HashedBagOfTokens::default();

    for inst in &data[..2] {
        println!("{}: {}", inst.id, inst.question);
        for method in Method::ALL {
            let r = answer(method, &model, inst, &heads, DEFAULT_DELTA, &cfg, &provider)?;
            let key: Vec<usize> = r.matched_sentences.iter().map(|s| s.index).collect();
            println!(
                "  {:<19} answer {:?}  key {:?}  steered {}  EM {:.0}  F1 {:.2}",
                method.label(),
                r.answer,
                key,
                r.steering_applied,
                exact_match(&r.answer, &inst.answers),
                token_f1(&r.answer, &inst.answers)
            );
        }
    }
    Ok(())
}
