//! Renders the direct prompt and locates the token positions of a chosen
//! context sentence inside it.

use attn_steer::eval::{Passage, QAInstance};
use attn_steer::model::{detokenize, tokenize};
use attn_steer::prompts::{locate_highlight, render_direct, Field};

fn main() -> attn_steer::Result<()> {
    let inst = QAInstance::new(
        "demo",
        "When was the lighthouse lit?",
        vec![Passage::from_sentences(
            None,
            None,
            &["The lighthouse stands on a granite ledge.", "Its lamp was first lit in 1871.", "It is now automated."],
            " ",
        )],
        vec!["1871".into()],
    )?;
    let rendered = render_direct(&inst.question, inst.context());
    let tokens = tokenize(&rendered.text);
    let g = locate_highlight(&rendered, &inst.sentences()[1..2], &tokens)?;

    println!("{}", rendered.text);
    println!("context field bytes: {:?}", rendered.field_range(Field::Context).unwrap());
    println!("highlight: {} tokens from {} to {}", g.len(), g.iter().next().unwrap(), g.max().unwrap());
    let ids: Vec<u32> = g.iter().map(|i| tokens.token_ids[i]).collect();
    println!("detokenized: {:?}", detokenize(&ids));
    Ok(())
}
