use std::path::Path;

use crate::autodiff::Tensor;
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::params::stream_rng;
use rand_distr::{Distribution, StandardNormal};

/// Reads `token f1 f2 …` lines into a `vocab × dim` matrix. Tokens not in
/// the file get Normal(0, 1) rows; the padding row is zero.
pub fn parse_embeddings(text: &str, vocab: &Vocab, dim: usize, seed: u64, origin: &str) -> Result<Tensor> {
    let mut rng = stream_rng(seed, "embeddings.oov");
    let mut data: Vec<f64> = (0..vocab.len() * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    data[..dim].iter_mut().for_each(|v| *v = 0.0);
    for (i, line) in text.split('\n').enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().expect("non-empty line has a first field").to_lowercase();
        let values = fields
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format {
                path: origin.to_string(),
                line: i + 1,
                msg: format!("bad float: {e}"),
            })?;
        if values.len() != dim {
            return Err(Error::Format {
                path: origin.to_string(),
                line: i + 1,
                msg: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if let Some(id) = vocab.get(&token) {
            if id > 1 {
                data[id * dim..(id + 1) * dim].copy_from_slice(&values);
            }
        }
    }
    Tensor::new(vec![vocab.len(), dim], data)
}

pub fn load_embeddings(path: &Path, vocab: &Vocab, dim: usize, seed: u64) -> Result<Tensor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Path {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    parse_embeddings(&text, vocab, dim, seed, &path.display().to_string())
}
