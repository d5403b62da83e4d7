use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::auxiliary::{generate_corpus, Split, ToyGrammar, CHUNK_TAGS, POS_TAGS};
use crate::data::{batch_iter, tag_batches, Batch, EncodedExample, LabelSet, RawExample, TagBatch, TaggedSentence, Vocab};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::{assemble, Mode, Model, ModelConfig, TaskKind, TaskSpec};
use crate::params::{stream_rng, stream_seed};

use super::curve::LearningCurve;
use super::optimizer::{Optimizer, OptimizerConfig};
use super::step::{evaluate, evaluate_aux, train_step, AuxReport};

/// How steps draw task batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Every step takes one batch from every task; shorter tasks wrap.
    RoundRobin,
    /// Every step takes one batch of one task, drawn by training-set size.
    Proportional,
}

impl Schedule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "round_robin" | "round-robin" => Ok(Schedule::RoundRobin),
            "proportional" => Ok(Schedule::Proportional),
            other => Err(Error::Config(format!("unknown schedule {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub max_len: usize,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            schedule: Schedule::RoundRobin,
            batch_size: 32,
            max_len: 60,
            eval_batch_size: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 || self.eval_batch_size == 0 || self.max_len == 0 {
            return Err(Error::Config("batch sizes and max length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub spec: TaskSpec,
    pub train: Vec<EncodedExample>,
    pub dev: Vec<EncodedExample>,
    pub test: Vec<EncodedExample>,
}

/// Tagged sentences for the hierarchy heads.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxData {
    pub train: Vec<TaggedSentence>,
    pub dev: Vec<TaggedSentence>,
    pub test: Vec<TaggedSentence>,
    pub pos: LabelSet,
    pub chunk: LabelSet,
}

/// Everything a run trains and evaluates on.
#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub vocab: Vocab,
    pub tasks: Vec<TaskData>,
    pub aux: Option<AuxData>,
    pub embeddings: Option<Tensor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 1400,
            dev: 200,
            test: 400,
        }
    }
}

/// Which synthetic tasks a suite holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTasks {
    /// One sentence classification task per grammar domain.
    Classification,
    /// The classification tasks plus an entailment and a similarity task.
    Mixed,
}

const PAIR_LABELS: [&str; 3] = ["entailment", "neutral", "contradiction"];

impl Suite {
    pub fn specs(&self) -> Vec<TaskSpec> {
        self.tasks.iter().map(|t| t.spec.clone()).collect()
    }

    /// Builds a suite from the toy grammar, with the vocabulary taken from
    /// the training splits.
    pub fn synthetic(grammar: &ToyGrammar, sizes: SplitSizes, which: SyntheticTasks) -> Result<Self> {
        let train = generate_corpus(grammar, sizes.train, Split::Train)?;
        let dev = generate_corpus(grammar, sizes.dev, Split::Dev)?;
        let test = generate_corpus(grammar, sizes.test, Split::Test)?;
        let mut sentences: Vec<&Vec<String>> = Vec::new();
        for e in train.single.iter().flatten() {
            sentences.push(&e.a);
        }
        if which == SyntheticTasks::Mixed {
            for e in train.pairs.iter().chain(&train.similarity) {
                sentences.push(&e.a);
                sentences.extend(e.b.as_ref());
            }
        }
        sentences.extend(train.tagged.iter().map(|s| &s.tokens));
        let vocab = Vocab::build(sentences, 1);

        let binary = LabelSet::from_names(&["neg", "pos"]);
        let enc = |xs: &[RawExample], labels: &LabelSet| -> Result<Vec<EncodedExample>> {
            crate::data::Dataset {
                kind: TaskKind::SingleClassification,
                origin: "synthetic".into(),
                examples: xs.to_vec(),
            }
            .encode(&vocab, labels)
        };
        let mut tasks = Vec::new();
        for d in 0..train.single.len() {
            tasks.push(TaskData {
                spec: TaskSpec::new(&format!("domain{d}"), TaskKind::SingleClassification, 2),
                train: enc(&train.single[d], &binary)?,
                dev: enc(&dev.single[d], &binary)?,
                test: enc(&test.single[d], &binary)?,
            });
        }
        if which == SyntheticTasks::Mixed {
            let nli = LabelSet::from_names(&PAIR_LABELS);
            tasks.push(TaskData {
                spec: TaskSpec::new("entail", TaskKind::PairClassification, 3),
                train: enc(&train.pairs, &nli)?,
                dev: enc(&dev.pairs, &nli)?,
                test: enc(&test.pairs, &nli)?,
            });
            tasks.push(TaskData {
                spec: TaskSpec::new("similar", TaskKind::SimilarityRegression, 1),
                train: enc(&train.similarity, &nli)?,
                dev: enc(&dev.similarity, &nli)?,
                test: enc(&test.similarity, &nli)?,
            });
        }
        Ok(Self {
            vocab,
            tasks,
            aux: Some(AuxData {
                train: train.tagged,
                dev: dev.tagged,
                test: test.tagged,
                pos: LabelSet::from_names(&POS_TAGS),
                chunk: LabelSet::from_names(&CHUNK_TAGS),
            }),
            embeddings: None,
        })
    }

    /// Model config with the suite-dependent sizes filled in.
    pub fn fill_config(&self, mut config: ModelConfig) -> ModelConfig {
        config.vocab_size = self.vocab.len();
        if let Some(aux) = &self.aux {
            config.pos_tags = aux.pos.len();
            config.chunk_tags = aux.chunk.len();
        }
        config
    }
}

/// Model and training settings of one experiment; run `i` uses seed
/// `seed + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    /// Trains every task as its own model even when mechanisms are on.
    #[serde(default)]
    pub per_task: bool,
}

impl ExperimentSetup {
    pub fn validate(&self, suite: &Suite) -> Result<()> {
        self.train.validate()?;
        let cfg = suite.fill_config(self.model.clone());
        cfg.validate(&suite.specs())?;
        if cfg.flags.elh && cfg.aux != crate::mechanisms::AuxSelection::NONE && suite.aux.as_ref().is_none_or(|a| a.train.is_empty()) {
            return Err(Error::Config("linguistic hierarchy needs tagged training data".into()));
        }
        for t in &suite.tasks {
            if t.train.is_empty() || t.dev.is_empty() {
                return Err(Error::Config(format!("task {} has an empty train or dev split", t.spec.name)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_index: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub epochs: usize,
    /// 1-based epoch of each task's selected snapshot.
    pub best_epochs: Vec<usize>,
    /// Mean over tasks of the dev metric at the selected snapshot.
    pub best_dev: f64,
    pub test: Vec<MetricReport>,
    pub aux_test: Option<AuxReport>,
    pub curves: Vec<LearningCurve>,
    pub train_loss: Vec<f64>,
    /// `epoch<TAB>task<TAB>split<TAB>metric<TAB>value` lines.
    pub events: Vec<String>,
}

impl RunReport {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn mean_test(&self) -> Option<f64> {
        if !self.completed() || self.test.is_empty() {
            return None;
        }
        Some(self.test.iter().map(|m| m.value).sum::<f64>() / self.test.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub code: String,
    pub tasks: Vec<String>,
    pub seed: u64,
    pub runs: Vec<RunReport>,
    /// Per-task test metric averaged over completed runs.
    pub mean_test: Vec<Option<f64>>,
    /// Mean over tasks of `mean_test`.
    pub mean: Option<f64>,
    pub failed: usize,
}

impl ExperimentReport {
    pub fn succeeded(&self) -> bool {
        self.failed == 0
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

struct Trained {
    model: Model,
    epochs: usize,
    best_epoch: usize,
    best_devs: Vec<f64>,
    curves: Vec<LearningCurve>,
    train_loss: Vec<f64>,
    events: Vec<String>,
}

/// Trains one run to completion or divergence. Configuration errors are
/// returned; divergence is reported in the run status.
///
/// Without any sharing (no mechanism, no hard sharing), or with
/// `per_task`, every task trains as its own model with its own early
/// stopping.
pub fn run_once(setup: &ExperimentSetup, suite: &Suite, run_index: usize) -> Result<RunReport> {
    setup.validate(suite)?;
    let seed = setup.seed + run_index as u64;
    let mut config = suite.fill_config(setup.model.clone());
    config.seed = seed;
    let independent = (setup.per_task || config.flags.is_empty() && !config.hard_sharing) && suite.tasks.len() > 1;
    let groups: Vec<Suite> = if independent {
        (0..suite.tasks.len())
            .map(|k| Suite {
                vocab: suite.vocab.clone(),
                tasks: vec![suite.tasks[k].clone()],
                aux: suite.aux.clone(),
                embeddings: suite.embeddings.clone(),
            })
            .collect()
    } else {
        vec![suite.clone()]
    };
    let mut report = RunReport {
        run_index,
        seed,
        status: RunStatus::Completed,
        epochs: 0,
        best_epochs: Vec::new(),
        best_dev: 0.0,
        test: Vec::new(),
        aux_test: None,
        curves: Vec::new(),
        train_loss: Vec::new(),
        events: Vec::new(),
    };
    let mut devs = Vec::new();
    let mut losses: Vec<Vec<f64>> = Vec::new();
    for group in &groups {
        let trained = match train(&config, setup, group, seed) {
            Ok(t) => t,
            Err(Error::Divergence { term }) => {
                report.status = RunStatus::Failed {
                    reason: format!("non-finite {term} loss"),
                };
                report.test.clear();
                return Ok(report);
            }
            Err(e) => return Err(e),
        };
        let tc = &setup.train;
        report.epochs = report.epochs.max(trained.epochs);
        report.events.extend(trained.events);
        report.curves.extend(trained.curves);
        losses.push(trained.train_loss);
        devs.extend(trained.best_devs);
        for (k, t) in group.tasks.iter().enumerate() {
            report.best_epochs.push(trained.best_epoch);
            if t.test.is_empty() {
                continue;
            }
            let m = evaluate(&trained.model, &t.test, k, tc.eval_batch_size, tc.max_len)?;
            report.events.push(format!(
                "{}\t{}\ttest\t{}\t{}",
                trained.best_epoch,
                t.spec.name,
                m.metric.as_str(),
                m.value
            ));
            report.test.push(m);
        }
        if let (Some(aux), true) = (&group.aux, trained.model.active().elh) {
            report.aux_test = evaluate_aux(
                &trained.model,
                &aux.test,
                &suite.vocab,
                &aux.pos,
                &aux.chunk,
                tc.eval_batch_size,
                tc.max_len,
            )?;
        }
    }
    report.best_dev = mean(&devs).unwrap_or(0.0);
    report.train_loss = (0..report.epochs)
        .map(|e| losses.iter().filter_map(|l| l.get(e)).sum())
        .collect();
    Ok(report)
}

fn train(config: &ModelConfig, setup: &ExperimentSetup, suite: &Suite, seed: u64) -> Result<Trained> {
    let mut model = assemble(config, &suite.specs())?;
    if let Some(e) = &suite.embeddings {
        model.embedding.install(&mut model.store, e.clone())?;
    }
    let tc = &setup.train;
    let oc = &tc.optimizer;
    let mut opt = Optimizer::new(oc.clone(), &model.store);
    let use_aux = model.active().elh && model.config.aux != crate::mechanisms::AuxSelection::NONE;
    let mut best_snapshot = model.store.snapshot();
    let mut out = Trained {
        epochs: 0,
        best_epoch: 0,
        best_devs: Vec::new(),
        curves: suite
            .tasks
            .iter()
            .map(|t| LearningCurve {
                task: t.spec.name.clone(),
                samples: Vec::new(),
            })
            .collect(),
        train_loss: Vec::new(),
        events: Vec::new(),
        model: model.clone(),
    };
    let mut best_mean = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut step = 0u64;
    let n = suite.tasks.len();
    let tag = if n == 1 { suite.tasks[0].spec.name.as_str() } else { "all" };
    for epoch in 1..=oc.epochs {
        let batches: Vec<Vec<Batch>> = suite
            .tasks
            .iter()
            .map(|t| {
                let s = stream_seed(seed, &format!("shuffle/{epoch}/{}", t.spec.name));
                batch_iter(&t.train, tc.batch_size, tc.max_len, Some(s))
            })
            .collect::<Result<_>>()?;
        let aux: Vec<TagBatch> = match (&suite.aux, use_aux) {
            (Some(a), true) => {
                let s = stream_seed(seed, &format!("shuffle/{epoch}/aux"));
                tag_batches(&a.train, &suite.vocab, &a.pos, &a.chunk, tc.batch_size, tc.max_len, Some(s))?
            }
            _ => Vec::new(),
        };
        let plan: Vec<Vec<Option<usize>>> = match tc.schedule {
            Schedule::RoundRobin => {
                let steps = batches.iter().map(Vec::len).max().unwrap_or(0);
                (0..steps)
                    .map(|s| batches.iter().map(|b| Some(s % b.len())).collect())
                    .collect()
            }
            Schedule::Proportional => {
                let steps: usize = batches.iter().map(Vec::len).sum();
                let sizes: Vec<usize> = suite.tasks.iter().map(|t| t.train.len()).collect();
                let dist = WeightedIndex::new(&sizes).map_err(|e| Error::Config(e.to_string()))?;
                let mut rng = stream_rng(seed, &format!("schedule/{epoch}"));
                let mut next = vec![0usize; n];
                (0..steps)
                    .map(|_| {
                        let k = dist.sample(&mut rng);
                        let mut row = vec![None; n];
                        row[k] = Some(next[k] % batches[k].len());
                        next[k] += 1;
                        row
                    })
                    .collect()
            }
        };
        let mut loss_sum = 0.0;
        for (s, row) in plan.iter().enumerate() {
            let picked: Vec<Option<&Batch>> = row.iter().zip(&batches).map(|(i, b)| i.map(|i| &b[i])).collect();
            let aux_batch = (!aux.is_empty()).then(|| &aux[s % aux.len()]);
            let r = train_step(&mut model, &mut opt, &picked, aux_batch, &Mode::train(seed, step))?;
            loss_sum += r.total;
            step += 1;
        }
        let epoch_loss = loss_sum / plan.len().max(1) as f64;
        out.train_loss.push(epoch_loss);
        out.events.push(format!("{epoch}\t{tag}\ttrain\tloss\t{epoch_loss}"));

        let mut devs = Vec::with_capacity(n);
        for (k, t) in suite.tasks.iter().enumerate() {
            let m = evaluate(&model, &t.dev, k, tc.eval_batch_size, tc.max_len)?;
            out.events
                .push(format!("{epoch}\t{}\tdev\t{}\t{}", t.spec.name, m.metric.as_str(), m.value));
            out.curves[k].samples.push(m.value);
            devs.push(m.value);
        }
        let dev_mean = mean(&devs).unwrap_or(0.0);
        out.epochs = epoch;
        if dev_mean > best_mean {
            best_mean = dev_mean;
            out.best_epoch = epoch;
            out.best_devs = devs;
            best_snapshot = model.store.snapshot();
            since_best = 0;
        } else {
            since_best += 1;
            if oc.patience > 0 && since_best >= oc.patience {
                break;
            }
        }
    }
    model.store.restore(&best_snapshot);
    out.model = model;
    Ok(out)
}

/// Runs `repeats` seeds and averages the completed ones.
pub fn run_experiment(setup: &ExperimentSetup, suite: &Suite, repeats: usize) -> Result<ExperimentReport> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be ≥ 1".into()));
    }
    setup.validate(suite)?;
    let runs = (0..repeats).map(|i| run_once(setup, suite, i)).collect::<Result<Vec<_>>>()?;
    Ok(summarize(setup, suite, runs))
}

/// Per-task and overall means over the completed runs.
pub fn summarize(setup: &ExperimentSetup, suite: &Suite, runs: Vec<RunReport>) -> ExperimentReport {
    let done: Vec<&RunReport> = runs.iter().filter(|r| r.completed()).collect();
    let mean_test: Vec<Option<f64>> = (0..suite.tasks.len())
        .map(|k| mean(&done.iter().filter_map(|r| r.test.get(k).map(|m| m.value)).collect::<Vec<_>>()))
        .collect();
    let overall = if mean_test.iter().all(Option::is_some) {
        mean(&mean_test.iter().flatten().copied().collect::<Vec<_>>())
    } else {
        None
    };
    ExperimentReport {
        code: setup.model.flags.code(),
        tasks: suite.tasks.iter().map(|t| t.spec.name.clone()).collect(),
        seed: setup.seed,
        failed: runs.len() - done.len(),
        runs,
        mean_test,
        mean: overall,
    }
}
