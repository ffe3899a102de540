//! Maps a noisy generated sentence back to the closest context sentence,
//! per hop for a two-passage instance.

use attn_steer::eval::{Passage, QAInstance};
use attn_steer::matching::{match_key_sentence, match_per_hop, HashedBagOfTokens, HopGeneration};

fn main() -> attn_steer::Result<()> {
    let inst = QAInstance::new(
        "demo",
        "Which river flows past the town where the founder of the mill was born?",
        vec![
            Passage::from_sentences(
                Some("Mill"),
                Some("a"),
                &["The old mill was founded by Ada Crane.", "It ground wheat until 1921."],
                " ",
            ),
            Passage::from_sentences(
                Some("Crane"),
                Some("b"),
                &["Ada Crane was born in Lowford.", "Lowford sits on the River Dene."],
                " ",
            ),
        ],
        vec!["River Dene".into()],
    )?;
    let provider = HashedBagOfTokens::default();

    let (best, sim) = match_key_sentence("the mill was started by ada crane", inst.sentences(), &provider)?;
    println!("single: sentence {} ({sim:.3}): {:?}", best.index, best.text);

    let gens = [
        HopGeneration { hop_id: Some("a".into()), text: "founded by Ada Crane".into() },
        HopGeneration { hop_id: Some("b".into()), text: "Lowford is on the Dene river".into() },
    ];
    for s in match_per_hop(&gens, inst.sentences(), &provider)? {
        println!("hop {:?}: sentence {} {:?}", s.hop_id, s.index, s.text);
    }
    Ok(())
}
