//! Vocabulary, embedding files, dataset files and batching.

mod batch;
mod dataset;
mod embeddings;
mod vocab;

pub use batch::{batch_iter, tag_batches, Batch, TagBatch};
pub use dataset::{
    load_dataset, load_tagged, parse_dataset, parse_tagged, tokenize, write_dataset, write_tagged, Dataset,
    EncodedExample, LabelSet, RawExample, RawLabel, TaggedSentence, Target,
};
pub use embeddings::{load_embeddings, parse_embeddings};
pub use vocab::{Vocab, PAD, UNK};
