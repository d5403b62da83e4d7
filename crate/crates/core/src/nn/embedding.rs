use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{dim_err, Error, Result};
use crate::nn::Seq;
use crate::params::{Init, ParamId, ParamStore};

/// Word vectors; row 0 is the padding row, held at zero.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub param: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Rows drawn from Normal(0, 1), padding row zeroed and frozen.
    pub fn new(store: &mut ParamStore, name: &str, vocab_size: usize, dim: usize) -> Result<Self> {
        if vocab_size == 0 || dim == 0 {
            return dim_err("embedding table needs rows and columns");
        }
        let param = store.add(name, &[vocab_size, dim], Init::Normal { mean: 0.0, std: 1.0 })?;
        let p = store.get_mut(param);
        p.value.data_mut()[..dim].iter_mut().for_each(|v| *v = 0.0);
        p.frozen_rows = vec![0];
        Ok(Self {
            param,
            vocab_size,
            dim,
        })
    }

    /// Overwrites the table with `values` (padding row is re-zeroed).
    pub fn install(&self, store: &mut ParamStore, mut values: Tensor) -> Result<()> {
        if values.shape() != [self.vocab_size, self.dim] {
            return dim_err(format!("embedding values {:?}", values.shape()));
        }
        values.data_mut()[..self.dim].iter_mut().for_each(|v| *v = 0.0);
        store.get_mut(self.param).value = values;
        Ok(())
    }

    pub fn set_trainable(&self, store: &mut ParamStore, trainable: bool) {
        store.get_mut(self.param).trainable = trainable;
    }

    /// One row per id, as an `ids.len() × dim` matrix.
    pub fn lookup(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.vocab_size) {
            return Err(Error::Index(format!("token id {bad} outside vocabulary of {}", self.vocab_size)));
        }
        let table = g.param(store, self.param);
        g.gather(table, ids)
    }

    /// Embeds a `batch × max_len` id matrix (row-major) as a time-major sequence.
    pub fn lookup_batch(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        ids: &[Vec<usize>],
        lengths: &[usize],
    ) -> Result<Seq> {
        let max_len = ids.first().map_or(0, Vec::len);
        let steps = (0..max_len)
            .map(|t| {
                let col: Vec<usize> = ids.iter().map(|row| row[t]).collect();
                self.lookup(g, store, &col)
            })
            .collect::<Result<Vec<_>>>()?;
        Seq::new(steps, lengths.to_vec().into())
    }
}
