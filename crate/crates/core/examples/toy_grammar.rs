//! Samples the toy grammar: tagged trees for the auxiliary tasks, labelled
//! sentences per domain, and sentence pairs.

use mtl_core::auxiliary::{generate_corpus, Split, ToyGrammar};
use mtl_core::data::RawLabel;

fn main() -> mtl_core::Result<()> {
    let grammar = ToyGrammar::new(3);
    let corpus = generate_corpus(&grammar, 4, Split::Train)?;

    let s = &corpus.tagged[0];
    println!("{:<12} {:<5} {:<7} head", "token", "pos", "chunk");
    for i in 0..s.tokens.len() {
        println!("{:<12} {:<5} {:<7} {}", s.tokens[i], s.pos[i], s.chunk[i], s.heads[i]);
    }

    for (d, examples) in corpus.single.iter().enumerate().take(3) {
        let e = &examples[0];
        if let RawLabel::Class(l) = &e.label {
            println!("domain{d} [{l}] {}", e.a.join(" "));
        }
    }
    for e in corpus.pairs.iter().take(3) {
        if let (RawLabel::Class(l), Some(b)) = (&e.label, &e.b) {
            println!("{l:>13}: {} || {}", e.a.join(" "), b.join(" "));
        }
    }
    Ok(())
}
