use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SingleClassification,
    PairClassification,
    SimilarityRegression,
    Tagging,
    Parsing,
}

impl TaskKind {
    pub fn is_pair(self) -> bool {
        matches!(self, TaskKind::PairClassification | TaskKind::SimilarityRegression)
    }

    pub fn is_classification(self) -> bool {
        matches!(self, TaskKind::SingleClassification | TaskKind::PairClassification)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "single" | "single_classification" => TaskKind::SingleClassification,
            "pair" | "pair_classification" => TaskKind::PairClassification,
            "similarity" | "similarity_regression" => TaskKind::SimilarityRegression,
            "tagging" => TaskKind::Tagging,
            "parsing" => TaskKind::Parsing,
            other => return Err(Error::Config(format!("unknown task kind {other:?}"))),
        })
    }

    pub fn default_metric(self) -> MetricKind {
        match self {
            TaskKind::SimilarityRegression => MetricKind::Pearson,
            TaskKind::Tagging => MetricKind::WordAccuracy,
            TaskKind::Parsing => MetricKind::Uas,
            _ => MetricKind::Accuracy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Mcc,
    Pearson,
    Spearman,
    WordAccuracy,
    Uas,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Mcc => "mcc",
            MetricKind::Pearson => "pearson",
            MetricKind::Spearman => "spearman",
            MetricKind::WordAccuracy => "word_accuracy",
            MetricKind::Uas => "uas",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "accuracy" | "acc" => MetricKind::Accuracy,
            "mcc" => MetricKind::Mcc,
            "pearson" => MetricKind::Pearson,
            "spearman" => MetricKind::Spearman,
            "word_accuracy" => MetricKind::WordAccuracy,
            "uas" => MetricKind::Uas,
            other => return Err(Error::Config(format!("unknown metric {other:?}"))),
        })
    }
}

/// A primary task: its data shape, label count, loss weight and metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    /// Ignored for regression, where the head has one output.
    pub num_labels: usize,
    pub loss_weight: f64,
    pub metric: MetricKind,
    /// Raw score interval mapped onto the regression head's `[0, 1]`.
    #[serde(default = "default_score_range")]
    pub score_range: (f64, f64),
}

fn default_score_range() -> (f64, f64) {
    (0.0, 5.0)
}

impl TaskSpec {
    pub fn new(name: &str, kind: TaskKind, num_labels: usize) -> Self {
        Self {
            name: name.to_string(),
            kind,
            num_labels,
            loss_weight: 1.0,
            metric: kind.default_metric(),
            score_range: default_score_range(),
        }
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.loss_weight = w;
        self
    }

    pub fn with_metric(mut self, m: MetricKind) -> Self {
        self.metric = m;
        self
    }

    /// Width of the task's output layer.
    pub fn output_dim(&self) -> usize {
        if self.kind == TaskKind::SimilarityRegression {
            1
        } else {
            self.num_labels
        }
    }

    pub fn normalize_score(&self, raw: f64) -> f64 {
        let (lo, hi) = self.score_range;
        ((raw - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn denormalize_score(&self, unit: f64) -> f64 {
        let (lo, hi) = self.score_range;
        lo + unit * (hi - lo)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == TaskKind::SimilarityRegression && !(self.score_range.1 > self.score_range.0) {
            return Err(Error::Config(format!("task {}: empty score range", self.name)));
        }
        if !(self.loss_weight >= 0.0 && self.loss_weight.is_finite()) {
            return Err(Error::Config(format!("task {}: loss weight must be ≥ 0", self.name)));
        }
        if self.kind.is_classification() && self.num_labels < 2 {
            return Err(Error::Config(format!("task {}: needs at least 2 labels", self.name)));
        }
        if matches!(self.kind, TaskKind::Tagging | TaskKind::Parsing) {
            return Err(Error::Config(format!(
                "task {}: token-level kinds are auxiliary, not primary",
                self.name
            )));
        }
        Ok(())
    }
}
