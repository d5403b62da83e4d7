//! Evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Result};
use crate::model::MetricKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub value: f64,
    pub support: usize,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return contract_err(format!("prediction/gold length mismatch: {a} vs {b}"));
    }
    if a == 0 {
        return contract_err("metric over an empty set");
    }
    Ok(())
}

pub fn accuracy<T: PartialEq>(preds: &[T], golds: &[T]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Binary Matthews correlation; 0 when any marginal is empty.
pub fn matthews_cc(preds: &[usize], golds: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    let (mut tp, mut tn, mut fp, mut fn_) = (0f64, 0f64, 0f64, 0f64);
    for (&p, &g) in preds.iter().zip(golds) {
        match (p, g) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (1, 0) => fp += 1.0,
            (0, 1) => fn_ += 1.0,
            _ => return contract_err(format!("MCC needs binary labels, got {p}/{g}")),
        }
    }
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(((tp * tn - fp * fn_) / denom.sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return contract_err(format!("length mismatch: {} vs {}", x.len(), y.len()));
    }
    if x.len() < 2 {
        return contract_err("correlation needs at least 2 points");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return contract_err(format!("length mismatch: {} vs {}", x.len(), y.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Token accuracy over positions where `mask` is true.
pub fn word_accuracy(preds: &[Vec<usize>], golds: &[Vec<usize>], masks: &[Vec<bool>]) -> Result<f64> {
    if preds.len() != golds.len() || preds.len() != masks.len() {
        return contract_err("sentence counts differ");
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for ((p, g), m) in preds.iter().zip(golds).zip(masks) {
        if p.len() != g.len() || p.len() != m.len() {
            return contract_err("tag sequence misaligned with gold");
        }
        for ((a, b), &keep) in p.iter().zip(g).zip(m) {
            if keep {
                total += 1;
                hits += usize::from(a == b);
            }
        }
    }
    if total == 0 {
        return contract_err("no unmasked tokens");
    }
    Ok(hits as f64 / total as f64)
}

/// Unlabeled attachment score. `None` gold heads are skipped.
pub fn uas(preds: &[Vec<usize>], golds: &[Vec<Option<usize>>]) -> Result<f64> {
    if preds.len() != golds.len() {
        return contract_err("sentence counts differ");
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for (p, g) in preds.iter().zip(golds) {
        if p.len() != g.len() {
            return contract_err("head sequence misaligned with gold");
        }
        for (a, b) in p.iter().zip(g) {
            if let Some(b) = b {
                total += 1;
                hits += usize::from(a == b);
            }
        }
    }
    if total == 0 {
        return contract_err("no scored tokens");
    }
    Ok(hits as f64 / total as f64)
}
