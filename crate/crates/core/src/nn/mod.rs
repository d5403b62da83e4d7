//! Parameterized building blocks: LSTM, BiLSTM, MLP, embeddings, dropout and
//! soft-alignment attention.

mod attention;
mod dropout;
mod embedding;
mod lstm;
mod mlp;
mod seq;

pub use attention::{soft_align, soft_align_seqs, Alignment};
pub use dropout::{dropout, dropout_seq};
pub use embedding::EmbeddingTable;
pub use lstm::{BiLstm, Lstm};
pub use mlp::{Activation, Mlp};
pub use seq::Seq;
