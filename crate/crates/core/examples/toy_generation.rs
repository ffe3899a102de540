//! Greedy generation from a seeded toy transformer, with and without a
//! steered head, plus the attention mass the steered head puts on the
//! highlighted span.

use attn_steer::model::{generate, load_or_init_model, tokenize, GenerationParams, ModelConfig, ModelSource};
use attn_steer::steering::{HeadLocation, HeadSet, SteeringSpec, DEFAULT_DELTA};

fn main() -> attn_steer::Result<()> {
    let model = load_or_init_model(ModelConfig::new(4, 4, 64, 256, 512)?, &ModelSource::Seeded(7))?;
    let text = "Context: The bridge opened in May 1937. Question: when did it open? Answer:";
    let prompt = tokenize(text);
    let start = text.find("The bridge").unwrap();
    let end = text.find("1937.").unwrap() + 5;
    let highlight = (0..prompt.len()).filter(|&i| prompt.offsets[i].start >= start && prompt.offsets[i].end <= end);
    let head = HeadLocation::new(1, 2);
    let spec = SteeringSpec::new(DEFAULT_DELTA, HeadSet::try_from_pairs([(1, 2)])?, highlight.collect())?;

    let params = GenerationParams::greedy(12).with_capture();
    let plain = generate(&model, &prompt, &params, None)?;
    let steered = generate(&model, &prompt, &params, Some(&spec))?;
    println!("plain:   {:?}", plain.text);
    println!("steered: {:?}", steered.text);

    let mass = |g: &attn_steer::model::Generation| -> f64 {
        let last = g.snapshots[0].head(head).last().unwrap();
        spec.highlight.iter().map(|j| last[j]).sum()
    };
    println!("{head} attention on highlight at the last prompt token: {:.3} -> {:.3}", mass(&plain), mass(&steered));
    Ok(())
}
