//! Task files: `task.<name>.<field> = value` lines in the flat config
//! syntax. Fields are `kind`, `train`, `dev`, `test`, `weight`, `metric`
//! and `score_range` (`lo,hi`). Relative paths resolve against the task
//! file's directory; tasks keep the order of their first line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, load_embeddings, load_tagged, EncodedExample, LabelSet, TaggedSentence, Vocab};
use crate::error::{Error, Result};
use crate::model::{MetricKind, TaskKind, TaskSpec};
use crate::trainer::{AuxData, Suite, TaskData};

use super::config::{parse_flat, DataConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub name: String,
    pub kind: TaskKind,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: Option<PathBuf>,
    pub weight: f64,
    pub metric: Option<MetricKind>,
    pub score_range: Option<(f64, f64)>,
}

pub fn parse_tasks(text: &str, origin: &str, base: &Path) -> Result<Vec<TaskEntry>> {
    let kv = parse_flat(text, origin)?;
    let mut lines: Vec<(usize, &str, &str, &str)> = Vec::new();
    for (key, (value, line)) in &kv {
        let mut parts = key.splitn(3, '.');
        let (Some("task"), Some(name), Some(field)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Format {
                path: origin.into(),
                line: *line,
                msg: format!("expected task.<name>.<field>, got {key:?}"),
            });
        };
        lines.push((*line, name, field, value));
    }
    lines.sort_by_key(|l| l.0);
    let mut names: Vec<&str> = Vec::new();
    for l in &lines {
        if !names.contains(&l.1) {
            names.push(l.1);
        }
    }
    let fmt = |line: usize, msg: String| Error::Format {
        path: origin.into(),
        line,
        msg,
    };
    let resolve = |v: &str| {
        let p = PathBuf::from(v);
        if p.is_relative() {
            base.join(p)
        } else {
            p
        }
    };
    let mut out = Vec::new();
    for name in names {
        let mut kind = None;
        let (mut train, mut dev, mut test) = (None, None, None);
        let mut weight = 1.0;
        let mut metric = None;
        let mut score_range = None;
        let mut first = 0;
        for &(line, _, field, value) in lines.iter().filter(|l| l.1 == name) {
            if first == 0 {
                first = line;
            }
            match field {
                "kind" => kind = Some(TaskKind::parse(value).map_err(|e| fmt(line, e.to_string()))?),
                "train" => train = Some(resolve(value)),
                "dev" => dev = Some(resolve(value)),
                "test" => test = Some(resolve(value)),
                "weight" => weight = value.parse().map_err(|_| fmt(line, format!("bad weight {value:?}")))?,
                "metric" => metric = Some(MetricKind::parse(value).map_err(|e| fmt(line, e.to_string()))?),
                "score_range" => {
                    let parsed = value
                        .split_once(',')
                        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
                    score_range = Some(parsed.ok_or_else(|| fmt(line, format!("bad score range {value:?}")))?);
                }
                other => return Err(fmt(line, format!("unknown task field {other:?}"))),
            }
        }
        let need = |v: Option<PathBuf>, f: &str| v.ok_or_else(|| fmt(first, format!("task {name} has no {f} file")));
        out.push(TaskEntry {
            name: name.to_string(),
            kind: kind.ok_or_else(|| fmt(first, format!("task {name} has no kind")))?,
            train: need(train, "train")?,
            dev: need(dev, "dev")?,
            test,
            weight,
            metric,
            score_range,
        });
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{origin}: no tasks")));
    }
    Ok(out)
}

pub fn load_tasks(path: &Path) -> Result<Vec<TaskEntry>> {
    let text = read(path)?;
    parse_tasks(&text, &path.display().to_string(), path.parent().unwrap_or(Path::new(".")))
}

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Path {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn exists(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Path {
            path: path.to_path_buf(),
            msg: "no such file".into(),
        })
    }
}

/// Every input file a run reads, with a role label.
pub fn input_files(tasks: &[TaskEntry], data: &DataConfig) -> Vec<(String, PathBuf)> {
    let mut out = Vec::new();
    for t in tasks {
        out.push((format!("{}.train", t.name), t.train.clone()));
        out.push((format!("{}.dev", t.name), t.dev.clone()));
        if let Some(p) = &t.test {
            out.push((format!("{}.test", t.name), p.clone()));
        }
    }
    for (role, p) in [
        ("embeddings", &data.embeddings),
        ("aux.train", &data.aux_train),
        ("aux.dev", &data.aux_dev),
        ("aux.test", &data.aux_test),
    ] {
        if let Some(p) = p {
            out.push((role.into(), p.clone()));
        }
    }
    out
}

/// Loads task and auxiliary files into a suite. The vocabulary comes from
/// the training splits; class labels from each task's training split.
pub fn load_suite(tasks: &[TaskEntry], data: &DataConfig, embed_dim: usize, seed: u64) -> Result<Suite> {
    for (_, p) in input_files(tasks, data) {
        exists(&p)?;
    }
    let mut raw = Vec::new();
    for t in tasks {
        let train = load_dataset(&t.train, t.kind)?;
        let dev = load_dataset(&t.dev, t.kind)?;
        let test = t.test.as_deref().map(|p| load_dataset(p, t.kind)).transpose()?;
        raw.push((train, dev, test));
    }
    let tagged = |p: &Option<PathBuf>| -> Result<Vec<TaggedSentence>> {
        p.as_deref().map(load_tagged).transpose().map(Option::unwrap_or_default)
    };
    let aux_train = tagged(&data.aux_train)?;
    let aux_dev = tagged(&data.aux_dev)?;
    let aux_test = tagged(&data.aux_test)?;

    let mut sentences: Vec<&Vec<String>> = Vec::new();
    for (train, _, _) in &raw {
        for e in &train.examples {
            sentences.push(&e.a);
            sentences.extend(e.b.as_ref());
        }
    }
    sentences.extend(aux_train.iter().map(|s| &s.tokens));
    let vocab = Vocab::build(sentences, data.min_count.max(1));

    let mut out = Vec::new();
    for (t, (train, dev, test)) in tasks.iter().zip(&raw) {
        let labels = LabelSet::from_examples(&train.examples);
        let num_labels = if t.kind == TaskKind::SimilarityRegression { 1 } else { labels.len() };
        let mut spec = TaskSpec::new(&t.name, t.kind, num_labels).with_weight(t.weight);
        if let Some(m) = t.metric {
            spec = spec.with_metric(m);
        }
        if let Some(r) = t.score_range {
            spec.score_range = r;
        }
        let enc = |d: &crate::data::Dataset| -> Result<Vec<EncodedExample>> { d.encode(&vocab, &labels) };
        out.push(TaskData {
            spec,
            train: enc(train)?,
            dev: enc(dev)?,
            test: test.as_ref().map(enc).transpose()?.unwrap_or_default(),
        });
    }
    let aux = if aux_train.is_empty() {
        None
    } else {
        let mut pos = Vec::new();
        let mut chunk = Vec::new();
        for s in &aux_train {
            for p in &s.pos {
                if !pos.contains(p) {
                    pos.push(p.clone());
                }
            }
            for c in &s.chunk {
                if !chunk.contains(c) {
                    chunk.push(c.clone());
                }
            }
        }
        let pos = LabelSet { labels: pos };
        let chunk = LabelSet { labels: chunk };
        Some(AuxData {
            train: aux_train,
            dev: aux_dev,
            test: aux_test,
            pos,
            chunk,
        })
    };
    let embeddings = data
        .embeddings
        .as_deref()
        .map(|p| load_embeddings(p, &vocab, embed_dim, seed))
        .transpose()?;
    Ok(Suite {
        vocab,
        tasks: out,
        aux,
        embeddings,
    })
}
