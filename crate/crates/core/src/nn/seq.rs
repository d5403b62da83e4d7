use std::rc::Rc;

use crate::autodiff::{Graph, PoolKind, Var};
use crate::error::{contract_err, Result};

/// A padded, time-major batch of vector sequences: `steps[t]` is
/// `batch × width` and row `r` is meaningful only for `t < lengths[r]`.
#[derive(Clone, Debug)]
pub struct Seq {
    pub steps: Vec<Var>,
    pub lengths: Rc<[usize]>,
    masks: Vec<Rc<[bool]>>,
}

impl Seq {
    pub fn new(steps: Vec<Var>, lengths: Rc<[usize]>) -> Result<Self> {
        let max_len = steps.len();
        if let Some(&bad) = lengths.iter().find(|&&l| l > max_len) {
            return contract_err(format!("length {bad} exceeds {max_len} steps"));
        }
        let masks = (0..max_len)
            .map(|t| lengths.iter().map(|&l| t < l).collect::<Vec<_>>().into())
            .collect();
        Ok(Self {
            steps,
            lengths,
            masks,
        })
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.steps.len()
    }

    /// Which rows are inside their true length at step `t`.
    pub fn mask(&self, t: usize) -> &Rc<[bool]> {
        &self.masks[t]
    }

    pub fn fully_valid(&self, t: usize) -> bool {
        self.masks[t].iter().all(|&m| m)
    }

    pub fn width(&self, g: &Graph) -> usize {
        self.steps.first().map_or(0, |s| g.shape(*s)[1])
    }

    /// Same lengths, new step values.
    pub fn with_steps(&self, steps: Vec<Var>) -> Self {
        Self {
            steps,
            lengths: self.lengths.clone(),
            masks: self.masks.clone(),
        }
    }

    /// Per-position concatenation of several aligned sequences.
    pub fn concat(g: &mut Graph, parts: &[&Seq]) -> Result<Seq> {
        let first = parts[0];
        if parts.iter().any(|p| p.lengths != first.lengths || p.max_len() != first.max_len()) {
            return contract_err("concatenating sequences that are not positionally aligned");
        }
        let steps = (0..first.max_len())
            .map(|t| {
                let at: Vec<Var> = parts.iter().map(|p| p.steps[t]).collect();
                g.concat(&at, 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(first.with_steps(steps))
    }

    /// `[masked mean ; masked max]` over each row's true length.
    pub fn pool_mean_max(&self, g: &mut Graph) -> Result<Var> {
        let mean = g.pool_time(&self.steps, self.lengths.clone(), PoolKind::Mean)?;
        let max = g.pool_time(&self.steps, self.lengths.clone(), PoolKind::Max)?;
        g.concat(&[mean, max], 1)
    }

    pub fn pool_mean(&self, g: &mut Graph) -> Result<Var> {
        g.pool_time(&self.steps, self.lengths.clone(), PoolKind::Mean)
    }

    /// Row `r` as a `lengths[r] × width` matrix.
    pub fn example(&self, g: &mut Graph, r: usize) -> Result<Var> {
        g.stack_row(&self.steps, r, self.lengths[r])
    }
}
