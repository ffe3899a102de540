//! Steers one attention head toward two highlighted positions and compares
//! the result with the post-softmax scaling formulation.

use attn_steer::steering::{
    post_softmax_scaling_oracle, steered_attention_weights, HeadLocation, HeadSet, SteeringSpec, DEFAULT_DELTA,
};

fn main() -> attn_steer::Result<()> {
    let scores = vec![
        vec![0.3, 1.2, -0.4, 0.9],
        vec![1.1, 0.0, 0.7, -0.2],
        vec![-0.5, 0.8, 0.2, 1.4],
        vec![0.6, -1.0, 1.3, 0.1],
    ];
    let head = HeadLocation::new(0, 0);
    let spec = SteeringSpec::new(DEFAULT_DELTA, HeadSet::try_from_pairs([(0, 0)])?, [1, 2].into_iter().collect())?;

    let plain = steered_attention_weights(&scores, &SteeringSpec::new(DEFAULT_DELTA, HeadSet::new(), spec.highlight.clone())?, head, true)?;
    let steered = steered_attention_weights(&scores, &spec, head, true)?;
    let oracle = post_softmax_scaling_oracle(&scores, &spec.highlight, (-DEFAULT_DELTA).exp(), true)?;

    for (i, (p, s)) in plain.iter().zip(&steered).enumerate() {
        let mass = |row: &[f64]| row[1] + row[2];
        println!("row {i}: plain {p:.3?}");
        println!("       steered {s:.3?}  highlight mass {:.3} -> {:.3}", mass(p), mass(s));
    }
    let dev = steered
        .iter()
        .flatten()
        .zip(oracle.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max deviation from post-softmax scaling: {dev:e}");
    Ok(())
}
