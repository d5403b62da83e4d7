use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{EncodedExample, LabelSet, TaggedSentence, Target, Vocab, PAD};
use crate::error::{Error, Result};

/// Padded mini-batch of sentence or sentence-pair examples. Id rows are
/// right-padded with `PAD` to the longest (truncated) length in the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids_a: Vec<Vec<usize>>,
    pub lengths_a: Vec<usize>,
    pub ids_b: Option<Vec<Vec<usize>>>,
    pub lengths_b: Option<Vec<usize>>,
    pub targets: Vec<Target>,
    /// Positions of the examples in the source slice.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn classes(&self) -> Option<Vec<usize>> {
        self.targets
            .iter()
            .map(|t| match t {
                Target::Class(c) => Some(*c),
                Target::Score(_) => None,
            })
            .collect()
    }

    pub fn scores(&self) -> Option<Vec<f64>> {
        self.targets
            .iter()
            .map(|t| match t {
                Target::Score(s) => Some(*s),
                Target::Class(_) => None,
            })
            .collect()
    }
}

fn pad(rows: Vec<&[usize]>, max_len: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let lengths: Vec<usize> = rows.iter().map(|r| r.len().min(max_len)).collect();
    let width = lengths.iter().copied().max().unwrap_or(0);
    let ids = rows
        .iter()
        .zip(&lengths)
        .map(|(r, &n)| {
            let mut v = r[..n].to_vec();
            v.resize(width, PAD);
            v
        })
        .collect();
    (ids, lengths)
}

fn order(n: usize, seed: Option<u64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if let Some(seed) = seed {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    idx
}

/// Splits `examples` into batches of `batch_size`, truncating every sentence
/// to `max_len` tokens. With a seed the order is shuffled deterministically;
/// the last batch may be smaller.
pub fn batch_iter(examples: &[EncodedExample], batch_size: usize, max_len: usize, seed: Option<u64>) -> Result<Vec<Batch>> {
    if batch_size == 0 || max_len == 0 {
        return Err(Error::Config("batch size and max length must be positive".into()));
    }
    let idx = order(examples.len(), seed);
    let batches = idx
        .chunks(batch_size)
        .map(|chunk| {
            let exs: Vec<&EncodedExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (ids_a, lengths_a) = pad(exs.iter().map(|e| e.a.as_slice()).collect(), max_len);
            let (ids_b, lengths_b) = if exs.iter().all(|e| e.b.is_some()) && !exs.is_empty() {
                let (i, l) = pad(exs.iter().map(|e| e.b.as_deref().unwrap_or(&[])).collect(), max_len);
                (Some(i), Some(l))
            } else {
                (None, None)
            };
            Batch {
                ids_a,
                lengths_a,
                ids_b,
                lengths_b,
                targets: exs.iter().map(|e| e.target.clone()).collect(),
                indices: chunk.to_vec(),
            }
        })
        .collect();
    Ok(batches)
}

/// Padded batch of annotated sentences. Tag rows hold one id per kept
/// token; a head is `None` when it points past the truncation point.
#[derive(Clone, Debug, PartialEq)]
pub struct TagBatch {
    pub ids: Vec<Vec<usize>>,
    pub lengths: Vec<usize>,
    pub pos: Vec<Vec<usize>>,
    pub chunk: Vec<Vec<usize>>,
    pub heads: Vec<Vec<Option<usize>>>,
}

impl TagBatch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }
}

fn tag_ids(tags: &[String], labels: &LabelSet) -> Result<Vec<usize>> {
    tags.iter()
        .map(|t| {
            labels.id(t).ok_or_else(|| Error::Label {
                path: "<tags>".into(),
                line: 0,
                label: t.clone(),
            })
        })
        .collect()
}

pub fn tag_batches(
    sentences: &[TaggedSentence],
    vocab: &Vocab,
    pos_labels: &LabelSet,
    chunk_labels: &LabelSet,
    batch_size: usize,
    max_len: usize,
    seed: Option<u64>,
) -> Result<Vec<TagBatch>> {
    if batch_size == 0 || max_len == 0 {
        return Err(Error::Config("batch size and max length must be positive".into()));
    }
    let idx = order(sentences.len(), seed);
    idx.chunks(batch_size)
        .map(|chunk| {
            let encoded: Vec<Vec<usize>> = chunk.iter().map(|&i| vocab.encode(&sentences[i].tokens)).collect();
            let (ids, lengths) = pad(encoded.iter().map(Vec::as_slice).collect(), max_len);
            let mut pos = Vec::new();
            let mut chk = Vec::new();
            let mut heads = Vec::new();
            for (&i, &n) in chunk.iter().zip(&lengths) {
                let s = &sentences[i];
                pos.push(tag_ids(&s.pos[..n], pos_labels)?);
                chk.push(tag_ids(&s.chunk[..n], chunk_labels)?);
                heads.push(s.heads[..n].iter().map(|&h| (h <= n).then_some(h)).collect());
            }
            Ok(TagBatch {
                ids,
                lengths,
                pos,
                chunk: chk,
                heads,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(n: usize, c: usize) -> EncodedExample {
        EncodedExample {
            a: (2..2 + n).collect(),
            b: None,
            target: Target::Class(c),
        }
    }

    #[test]
    fn final_partial_batch_is_kept() {
        let exs: Vec<_> = (0..7).map(|i| ex(i + 1, i % 2)).collect();
        let b = batch_iter(&exs, 3, 100, None).unwrap();
        assert_eq!(b.iter().map(Batch::len).collect::<Vec<_>>(), vec![3, 3, 1]);
        assert_eq!(b[0].ids_a[0], vec![2, PAD, PAD]);
        assert_eq!(b[0].lengths_a, vec![1, 2, 3]);
    }

    #[test]
    fn truncates_to_max_len() {
        let b = batch_iter(&[ex(10, 0)], 4, 4, None).unwrap();
        assert_eq!(b[0].ids_a[0], vec![2, 3, 4, 5]);
        assert_eq!(b[0].lengths_a, vec![4]);
    }

    #[test]
    fn shuffle_is_deterministic_permutation() {
        let exs: Vec<_> = (0..20).map(|i| ex(1 + i % 3, i)).collect();
        let a = batch_iter(&exs, 5, 10, Some(9)).unwrap();
        let b = batch_iter(&exs, 5, 10, Some(9)).unwrap();
        assert_eq!(a, b);
        let mut seen: Vec<usize> = a.iter().flat_map(|x| x.indices.clone()).collect();
        assert_ne!(seen, (0..20).collect::<Vec<_>>());
        seen.sort();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_heads_become_none() {
        let s = TaggedSentence {
            tokens: vec!["a".into(), "b".into(), "c".into()],
            pos: vec!["X".into(); 3],
            chunk: vec!["O".into(); 3],
            heads: vec![3, 0, 2],
        };
        let v = Vocab::build(&vec![s.tokens.clone()], 1);
        let labels = LabelSet::from_names(&["X"]);
        let chunks = LabelSet::from_names(&["O"]);
        let b = tag_batches(&[s], &v, &labels, &chunks, 2, 2, None).unwrap();
        assert_eq!(b[0].heads[0], vec![None, Some(0)]);
        assert_eq!(b[0].num_tokens(), 2);
    }
}
