use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-epoch dev metric samples of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub task: String,
    pub samples: Vec<f64>,
}

/// Means of consecutive non-overlapping windows; a trailing partial window
/// is averaged over its own size.
pub fn smooth_curve(samples: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Config("smoothing window must be ≥ 1".into()));
    }
    Ok(samples
        .chunks(window)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect())
}

/// Relative fall from the best sample to the last one, in percent.
pub fn peak_to_final_drop(samples: &[f64]) -> Option<f64> {
    let last = *samples.last()?;
    let peak = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak <= 0.0 {
        return Some(0.0);
    }
    Some((peak - last) / peak * 100.0)
}

/// Elementwise mean of equal-length curves, truncated to the shortest.
pub fn mean_curve(curves: &[&[f64]]) -> Vec<f64> {
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64)
        .collect()
}
