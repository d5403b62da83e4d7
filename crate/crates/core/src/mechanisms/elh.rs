use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::auxiliary::{parse_head, tagging_head, ParseHead, TaggingHead};
use crate::data::TagBatch;
use crate::error::{Error, Result};
use crate::nn::Seq;
use crate::params::ParamStore;

/// Which auxiliary levels contribute a loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AuxSelection {
    pub pos: bool,
    pub chunk: bool,
    pub parse: bool,
}

impl AuxSelection {
    pub const ALL: Self = Self {
        pos: true,
        chunk: true,
        parse: true,
    };
    pub const NONE: Self = Self {
        pos: false,
        chunk: false,
        parse: false,
    };

    /// Short name used in ablation tables.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.pos, "Pos"), (self.chunk, "Chunk"), (self.parse, "Parse")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        if parts.is_empty() {
            "NoAux".into()
        } else {
            parts.join("+")
        }
    }
}

impl Default for AuxSelection {
    fn default() -> Self {
        Self::ALL
    }
}

/// POS head on the first shared layer, chunking on the second, parsing on
/// the third.
#[derive(Clone, Debug)]
pub struct ElhHeads {
    pub pos: TaggingHead,
    pub chunk: TaggingHead,
    pub parse: ParseHead,
}

impl ElhHeads {
    pub fn new(
        store: &mut ParamStore,
        input_dim: usize,
        pos_tags: usize,
        chunk_tags: usize,
        dep_dim: usize,
        hidden_dim: usize,
    ) -> Result<Self> {
        if pos_tags == 0 || chunk_tags == 0 {
            return Err(Error::Config("auxiliary tag inventories are empty".into()));
        }
        Ok(Self {
            pos: TaggingHead::new(store, "aux.pos", input_dim, pos_tags)?,
            chunk: TaggingHead::new(store, "aux.chunk", input_dim, chunk_tags)?,
            parse: ParseHead::new(store, "aux.parse", input_dim, dep_dim, hidden_dim)?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ElhLosses {
    pub pos: Option<Var>,
    pub chunk: Option<Var>,
    pub parse: Option<Var>,
}

/// Auxiliary losses from the shared layers computed on an auxiliary batch.
/// Outside training a missing batch yields zero terms.
pub fn elh_losses(
    g: &mut Graph,
    store: &ParamStore,
    heads: &ElhHeads,
    shared: &[Seq],
    batch: Option<&TagBatch>,
    selection: AuxSelection,
    training: bool,
) -> Result<ElhLosses> {
    if shared.len() != 3 {
        return Err(Error::Config(format!("hierarchy needs 3 shared layers, got {}", shared.len())));
    }
    let Some(batch) = batch else {
        if training && selection != AuxSelection::NONE {
            return Err(Error::Config("hierarchy enabled but no auxiliary batch".into()));
        }
        let mut zero = || Some(g.constant(Tensor::scalar(0.0)));
        return Ok(ElhLosses {
            pos: if selection.pos { zero() } else { None },
            chunk: if selection.chunk { zero() } else { None },
            parse: if selection.parse { zero() } else { None },
        });
    };
    let pos = if selection.pos {
        Some(tagging_head(g, store, &heads.pos, &shared[0], &batch.pos)?.loss)
    } else {
        None
    };
    let chunk = if selection.chunk {
        Some(tagging_head(g, store, &heads.chunk, &shared[1], &batch.chunk)?.loss)
    } else {
        None
    };
    let parse = if selection.parse {
        Some(parse_head(g, store, &heads.parse, &shared[2], &batch.heads)?.loss)
    } else {
        None
    };
    Ok(ElhLosses { pos, chunk, parse })
}
