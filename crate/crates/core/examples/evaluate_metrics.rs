//! Exact match and token F1 against multiple gold answers, and a seeded
//! profiling/test split.

use attn_steer::eval::{exact_match, load_dataset, normalize_answer, split, token_f1};

fn main() -> attn_steer::Result<()> {
    let gold = ["the Golden Gate Bridge", "Golden Gate"];
    for pred in ["Golden Gate Bridge", "golden gate.", "the Bay Bridge", "a bridge in San Francisco"] {
        println!(
            "{pred:<28} normalized {:<24} EM {:.0}  F1 {:.3}",
            format!("{:?}", normalize_answer(pred)),
            exact_match(pred, &gold),
            token_f1(pred, &gold)
        );
    }

    let data = load_dataset(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/qa16.jsonl"))?;
    let s = split(data, 5, 0);
    let ids = |v: &[attn_steer::eval::QAInstance]| v.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
    println!("profiling {:?}", ids(&s.profiling));
    println!("test      {:?}", ids(&s.test));
    Ok(())
}
