use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::auxiliary::{parse_head, tagging_head, ParseHead};
use crate::data::{batch_iter, tag_batches, Batch, EncodedExample, LabelSet, TagBatch, TaggedSentence, Target, Vocab, PAD};
use crate::error::{contract_err, Error, Result};
use crate::metrics::{accuracy, matthews_cc, pearson, spearman, uas, word_accuracy, MetricReport};
use crate::model::{MetricKind, Mode, Model, Prediction};

use super::optimizer::{ClipStats, Optimizer};

/// Loss values and gradient norms of one update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub total: f64,
    pub terms: Vec<(String, f64)>,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

/// One forward over every task's batch, one backward, one clipped update.
pub fn train_step(
    model: &mut Model,
    opt: &mut Optimizer,
    batches: &[Option<&Batch>],
    aux: Option<&TagBatch>,
    mode: &Mode,
) -> Result<StepReport> {
    let mut g = Graph::permissive();
    let out = model.forward(&mut g, batches, aux, mode)?;
    let mut terms = Vec::new();
    for (name, v) in out.bundle.terms() {
        let x = g.scalar_value(v);
        if !x.is_finite() {
            return Err(Error::Divergence { term: name.into() });
        }
        terms.push((name.to_string(), x));
    }
    let total = g.scalar_value(out.total);
    g.backward(out.total)?;
    model.store.zero_grads();
    model.store.accumulate_grads(&g);
    let ClipStats { before, after } = opt.step(&mut model.store)?;
    Ok(StepReport {
        total,
        terms,
        grad_norm: before,
        clipped_norm: after,
    })
}

/// Metric of a task's predictions against gold targets.
pub fn score(metric: MetricKind, preds: &[Prediction], golds: &[Target]) -> Result<f64> {
    let classes = || -> Result<(Vec<usize>, Vec<usize>)> {
        let p = preds
            .iter()
            .map(|p| match p {
                Prediction::Class(c) => Ok(*c),
                Prediction::Score(_) => contract_err("class metric over scores"),
            })
            .collect::<Result<Vec<_>>>()?;
        let g = golds
            .iter()
            .map(|t| match t {
                Target::Class(c) => Ok(*c),
                Target::Score(_) => contract_err("class metric over scores"),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((p, g))
    };
    let scores = || -> Result<(Vec<f64>, Vec<f64>)> {
        let p = preds
            .iter()
            .map(|p| match p {
                Prediction::Score(s) => Ok(*s),
                Prediction::Class(c) => Ok(*c as f64),
            })
            .collect::<Result<Vec<_>>>()?;
        let g = golds
            .iter()
            .map(|t| match t {
                Target::Score(s) => Ok(*s),
                Target::Class(c) => Ok(*c as f64),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((p, g))
    };
    match metric {
        MetricKind::Accuracy => {
            let (p, g) = classes()?;
            accuracy(&p, &g)
        }
        MetricKind::Mcc => {
            let (p, g) = classes()?;
            matthews_cc(&p, &g)
        }
        MetricKind::Pearson => {
            let (p, g) = scores()?;
            pearson(&p, &g)
        }
        MetricKind::Spearman => {
            let (p, g) = scores()?;
            spearman(&p, &g)
        }
        MetricKind::WordAccuracy | MetricKind::Uas => contract_err("token-level metric on a sentence task"),
    }
}

/// Decoded predictions of `task` over `examples`, in order, with dropout off.
pub fn predict(model: &Model, examples: &[EncodedExample], task: usize, batch_size: usize, max_len: usize) -> Result<Vec<Prediction>> {
    let mut preds = Vec::with_capacity(examples.len());
    for b in batch_iter(examples, batch_size, max_len, None)? {
        let mut g = Graph::new();
        let mut batches: Vec<Option<&Batch>> = vec![None; model.tasks.len()];
        batches[task] = Some(&b);
        let out = model.forward(&mut g, &batches, None, &Mode::eval())?;
        let tf = out.tasks.iter().find(|t| t.task == task).expect("task output");
        preds.extend(model.predictions(&g, tf));
    }
    Ok(preds)
}

/// Task metric over a full split.
pub fn evaluate(model: &Model, examples: &[EncodedExample], task: usize, batch_size: usize, max_len: usize) -> Result<MetricReport> {
    let spec = model
        .tasks
        .get(task)
        .ok_or_else(|| Error::Index(format!("task {task} of {}", model.tasks.len())))?;
    let preds = predict(model, examples, task, batch_size, max_len)?;
    let golds: Vec<Target> = examples.iter().map(|e| e.target.clone()).collect();
    Ok(MetricReport {
        metric: spec.metric,
        value: score(spec.metric, &preds, &golds)?,
        support: examples.len(),
    })
}

/// POS and chunk word accuracy and UAS of the hierarchy heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxReport {
    pub pos: MetricReport,
    pub chunk: MetricReport,
    pub parse: MetricReport,
}

/// Auxiliary metrics; `None` when the split is empty or the model has no
/// hierarchy heads.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_aux(
    model: &Model,
    sentences: &[TaggedSentence],
    vocab: &Vocab,
    pos: &LabelSet,
    chunk: &LabelSet,
    batch_size: usize,
    max_len: usize,
) -> Result<Option<AuxReport>> {
    let Some(heads) = &model.elh else {
        return Ok(None);
    };
    if sentences.is_empty() {
        return Ok(None);
    }
    let (mut pp, mut pg, mut cp, mut cg, mut masks) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut hp, mut hg) = (Vec::new(), Vec::new());
    for b in tag_batches(sentences, vocab, pos, chunk, batch_size, max_len, None)? {
        let mut g = Graph::new();
        let width = b.lengths.iter().copied().max().unwrap_or(0);
        let padded: Vec<Vec<usize>> = b
            .ids
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.resize(width, PAD);
                r
            })
            .collect();
        let x = model.embed(&mut g, &padded, &b.lengths)?;
        let shared = model.shared_encode(&mut g, &x)?;
        if shared.len() != 3 {
            return contract_err("hierarchy heads without 3 shared layers");
        }
        let po = tagging_head(&mut g, &model.store, &heads.pos, &shared[0], &b.pos)?;
        pp.extend(heads.pos.predict(&g, &po, &b.lengths));
        pg.extend(b.pos.iter().cloned());
        let co = tagging_head(&mut g, &model.store, &heads.chunk, &shared[1], &b.chunk)?;
        cp.extend(heads.chunk.predict(&g, &co, &b.lengths));
        cg.extend(b.chunk.iter().cloned());
        masks.extend(b.lengths.iter().map(|&l| vec![true; l]));
        let ps = parse_head(&mut g, &model.store, &heads.parse, &shared[2], &b.heads)?;
        hp.extend(ps.scores.iter().map(|&s| ParseHead::decode(g.value(s))));
        hg.extend(b.heads.iter().cloned());
    }
    let tokens = masks.iter().map(Vec::len).sum();
    Ok(Some(AuxReport {
        pos: MetricReport {
            metric: MetricKind::WordAccuracy,
            value: word_accuracy(&pp, &pg, &masks)?,
            support: tokens,
        },
        chunk: MetricReport {
            metric: MetricKind::WordAccuracy,
            value: word_accuracy(&cp, &cg, &masks)?,
            support: tokens,
        },
        parse: MetricReport {
            metric: MetricKind::Uas,
            value: uas(&hp, &hg)?,
            support: hg.iter().flatten().filter(|h| h.is_some()).count(),
        },
    }))
}
