//! Auxiliary POS, chunking and parsing heads, and the toy grammar that
//! supplies desk-scale data for every task kind.

mod heads;

pub use heads::{candidate_mask, parse_head, tagging_head, ParseHead, ParseOutput, TagOutput, TaggingHead};
mod grammar;

pub use grammar::{
    generate_corpus, Corpus, Derivation, LabelRule, Lexicon, LexiconSizes, Split, ToyGrammar, CHUNK_TAGS, POS_TAGS,
};
