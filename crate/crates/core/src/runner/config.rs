//! Flat `section.key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! known; a key given twice keeps the last value. [`RunConfig::to_text`]
//! writes every key, so its output reproduces the config exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::auxiliary::{LexiconSizes, ToyGrammar};
use crate::error::{Error, Result};
use crate::mechanisms::AuxSelection;
use crate::model::ModelConfig;
use crate::trainer::{Algorithm, ExperimentSetup, Schedule, SplitSizes, SyntheticTasks, TrainConfig};

use super::code::CombinationCode;

/// Ordered `key → (value, line)` pairs of a flat config file.
pub fn parse_flat(text: &str, origin: &str) -> Result<BTreeMap<String, (String, usize)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Format {
                path: origin.into(),
                line: i + 1,
                msg: "expected `key = value`".into(),
            });
        };
        let k = k.trim();
        if k.is_empty() || !k.contains('.') {
            return Err(Error::Format {
                path: origin.into(),
                line: i + 1,
                msg: format!("key {k:?} needs a section prefix"),
            });
        }
        out.insert(k.to_string(), (v.trim().to_string(), i + 1));
    }
    Ok(out)
}

/// Settings of the bundled toy-grammar suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub tasks: SyntheticTasks,
    pub sizes: SplitSizes,
    pub lexicon: LexiconSizes,
    pub label_noise: f64,
    pub subordinate_rate: f64,
    pub modifier_rate: f64,
    pub negation_rate: f64,
    pub adverb_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let g = ToyGrammar::new(0);
        Self {
            seed: 7,
            tasks: SyntheticTasks::Classification,
            sizes: SplitSizes::default(),
            lexicon: LexiconSizes::default(),
            label_noise: g.label_noise,
            subordinate_rate: g.subordinate_rate,
            modifier_rate: g.modifier_rate,
            negation_rate: g.negation_rate,
            adverb_rate: g.adverb_rate,
        }
    }
}

impl SyntheticConfig {
    pub fn grammar(&self) -> ToyGrammar {
        let mut g = ToyGrammar::with_sizes(self.seed, self.lexicon);
        g.label_noise = self.label_noise;
        g.subordinate_rate = self.subordinate_rate;
        g.modifier_rate = self.modifier_rate;
        g.negation_rate = self.negation_rate;
        g.adverb_rate = self.adverb_rate;
        g
    }
}

/// External data locations besides the task files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub embeddings: Option<PathBuf>,
    pub aux_train: Option<PathBuf>,
    pub aux_dev: Option<PathBuf>,
    pub aux_test: Option<PathBuf>,
    pub min_count: usize,
}

/// Everything a config file can set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// `None` picks 3 with the hierarchy and 1 otherwise.
    pub shared_layers: Option<usize>,
    /// Separate model per task, as in single-task baselines.
    pub per_task: bool,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut train = TrainConfig::default();
        train.optimizer.lr = 0.02;
        train.optimizer.epochs = 12;
        let model = ModelConfig {
            hidden: 12,
            embed_dim: 24,
            dropout: 0.2,
            ..ModelConfig::default()
        };
        Self {
            model,
            shared_layers: None,
            per_task: false,
            train,
            data: DataConfig {
                min_count: 1,
                ..Default::default()
            },
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn aux_text(a: AuxSelection) -> String {
    let parts: Vec<&str> = [(a.pos, "pos"), (a.chunk, "chunk"), (a.parse, "parse")]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(",")
    }
}

pub fn parse_aux(s: &str) -> Result<AuxSelection> {
    let mut a = AuxSelection::NONE;
    if s == "none" {
        return Ok(a);
    }
    for p in s.split(',').map(str::trim) {
        match p {
            "pos" => a.pos = true,
            "chunk" => a.chunk = true,
            "parse" => a.parse = true,
            "all" => a = AuxSelection::ALL,
            other => return Err(Error::Config(format!("unknown auxiliary task {other:?}"))),
        }
    }
    Ok(a)
}

fn schedule_text(s: Schedule) -> &'static str {
    match s {
        Schedule::RoundRobin => "round_robin",
        Schedule::Proportional => "proportional",
    }
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string())
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let kv = parse_flat(text, origin)?;
        let mut c = Self::default();
        for (key, (value, line)) in &kv {
            c.set(key, value).map_err(|e| match e {
                Error::Config(msg) | Error::Usage(msg) => Error::Format {
                    path: origin.into(),
                    line: *line,
                    msg,
                },
                other => other,
            })?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Path {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut c = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut c.data.embeddings,
            &mut c.data.aux_train,
            &mut c.data.aux_dev,
            &mut c.data.aux_test,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
            }
        }
        let path = |v: &str| (v != "none").then(|| PathBuf::from(v));
        let m = &mut self.model;
        let t = &mut self.train;
        let s = &mut self.synthetic;
        match key {
            "model.hidden" => m.hidden = num(key, v)?,
            "model.embed_dim" => m.embed_dim = num(key, v)?,
            "model.dropout" => m.dropout = num(key, v)?,
            "model.lambda_oc" => m.lambda_oc = num(key, v)?,
            "model.lambda_adv" => m.lambda_adv = num(key, v)?,
            "model.hard_sharing" => m.hard_sharing = flag(key, v)?,
            "model.shared_layers" => {
                self.shared_layers = if v == "auto" { None } else { Some(num(key, v)?) };
            }
            "model.aux" => m.aux = parse_aux(v)?,
            "model.per_task" => self.per_task = flag(key, v)?,
            "model.parse_dep_dim" => m.parse_dep_dim = num(key, v)?,
            "model.parse_hidden_dim" => m.parse_hidden_dim = num(key, v)?,
            "train.optimizer" => t.optimizer.algorithm = Algorithm::parse(v)?,
            "train.lr" => t.optimizer.lr = num(key, v)?,
            "train.clip" => t.optimizer.clip = if v == "none" { None } else { Some(num(key, v)?) },
            "train.epochs" => t.optimizer.epochs = num(key, v)?,
            "train.patience" => t.optimizer.patience = num(key, v)?,
            "train.beta1" => t.optimizer.beta1 = num(key, v)?,
            "train.beta2" => t.optimizer.beta2 = num(key, v)?,
            "train.eps" => t.optimizer.eps = num(key, v)?,
            "train.schedule" => t.schedule = Schedule::parse(v)?,
            "train.batch_size" => t.batch_size = num(key, v)?,
            "train.max_len" => t.max_len = num(key, v)?,
            "train.eval_batch_size" => t.eval_batch_size = num(key, v)?,
            "data.embeddings" => self.data.embeddings = path(v),
            "data.aux_train" => self.data.aux_train = path(v),
            "data.aux_dev" => self.data.aux_dev = path(v),
            "data.aux_test" => self.data.aux_test = path(v),
            "data.min_count" => self.data.min_count = num(key, v)?,
            "synthetic.seed" => s.seed = num(key, v)?,
            "synthetic.tasks" => {
                s.tasks = match v {
                    "classification" => SyntheticTasks::Classification,
                    "mixed" => SyntheticTasks::Mixed,
                    _ => return Err(Error::Config(format!("{key}: expected classification or mixed"))),
                }
            }
            "synthetic.train" => s.sizes.train = num(key, v)?,
            "synthetic.dev" => s.sizes.dev = num(key, v)?,
            "synthetic.test" => s.sizes.test = num(key, v)?,
            "synthetic.domains" => s.lexicon.domains = num(key, v)?,
            "synthetic.polar_adjectives" => s.lexicon.polar_adjectives = num(key, v)?,
            "synthetic.neutral_adjectives" => s.lexicon.neutral_adjectives = num(key, v)?,
            "synthetic.polar_verbs" => s.lexicon.polar_verbs = num(key, v)?,
            "synthetic.nouns_per_domain" => s.lexicon.nouns_per_domain = num(key, v)?,
            "synthetic.label_noise" => s.label_noise = num(key, v)?,
            "synthetic.subordinate_rate" => s.subordinate_rate = num(key, v)?,
            "synthetic.modifier_rate" => s.modifier_rate = num(key, v)?,
            "synthetic.negation_rate" => s.negation_rate = num(key, v)?,
            "synthetic.adverb_rate" => s.adverb_rate = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Every key with its value, one per line, sorted by key.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let o = &t.optimizer;
        let s = &self.synthetic;
        let algorithm = match o.algorithm {
            Algorithm::Adam => "adam",
            Algorithm::Sgd => "sgd",
        };
        let tasks = match s.tasks {
            SyntheticTasks::Classification => "classification",
            SyntheticTasks::Mixed => "mixed",
        };
        let mut kv: Vec<(&str, String)> = vec![
            ("model.hidden", m.hidden.to_string()),
            ("model.embed_dim", m.embed_dim.to_string()),
            ("model.dropout", m.dropout.to_string()),
            ("model.lambda_oc", m.lambda_oc.to_string()),
            ("model.lambda_adv", m.lambda_adv.to_string()),
            ("model.hard_sharing", m.hard_sharing.to_string()),
            (
                "model.shared_layers",
                self.shared_layers.map_or_else(|| "auto".into(), |n| n.to_string()),
            ),
            ("model.aux", aux_text(m.aux)),
            ("model.per_task", self.per_task.to_string()),
            ("model.parse_dep_dim", m.parse_dep_dim.to_string()),
            ("model.parse_hidden_dim", m.parse_hidden_dim.to_string()),
            ("train.optimizer", algorithm.into()),
            ("train.lr", o.lr.to_string()),
            ("train.clip", o.clip.map_or_else(|| "none".into(), |c| c.to_string())),
            ("train.epochs", o.epochs.to_string()),
            ("train.patience", o.patience.to_string()),
            ("train.beta1", o.beta1.to_string()),
            ("train.beta2", o.beta2.to_string()),
            ("train.eps", o.eps.to_string()),
            ("train.schedule", schedule_text(t.schedule).into()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.max_len", t.max_len.to_string()),
            ("train.eval_batch_size", t.eval_batch_size.to_string()),
            ("data.embeddings", path_text(&self.data.embeddings)),
            ("data.aux_train", path_text(&self.data.aux_train)),
            ("data.aux_dev", path_text(&self.data.aux_dev)),
            ("data.aux_test", path_text(&self.data.aux_test)),
            ("data.min_count", self.data.min_count.to_string()),
            ("synthetic.seed", s.seed.to_string()),
            ("synthetic.tasks", tasks.into()),
            ("synthetic.train", s.sizes.train.to_string()),
            ("synthetic.dev", s.sizes.dev.to_string()),
            ("synthetic.test", s.sizes.test.to_string()),
            ("synthetic.domains", s.lexicon.domains.to_string()),
            ("synthetic.polar_adjectives", s.lexicon.polar_adjectives.to_string()),
            ("synthetic.neutral_adjectives", s.lexicon.neutral_adjectives.to_string()),
            ("synthetic.polar_verbs", s.lexicon.polar_verbs.to_string()),
            ("synthetic.nouns_per_domain", s.lexicon.nouns_per_domain.to_string()),
            ("synthetic.label_noise", s.label_noise.to_string()),
            ("synthetic.subordinate_rate", s.subordinate_rate.to_string()),
            ("synthetic.modifier_rate", s.modifier_rate.to_string()),
            ("synthetic.negation_rate", s.negation_rate.to_string()),
            ("synthetic.adverb_rate", s.adverb_rate.to_string()),
        ];
        kv.sort_by(|a, b| a.0.cmp(b.0));
        kv.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Experiment setup for one combination code.
    pub fn setup(&self, code: CombinationCode, seed: u64) -> ExperimentSetup {
        let flags = code.flags();
        let mut model = self.model.clone();
        model.flags = flags;
        model.shared_layers = self.shared_layers.unwrap_or(if flags.elh { 3 } else { 1 });
        ExperimentSetup {
            model,
            train: self.train.clone(),
            seed,
            per_task: self.per_task,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_sections_and_comments() {
        let c = RunConfig::parse(
            "# small model\nmodel.hidden = 8\n\ntrain.clip = none\nmodel.aux = pos, parse\ntrain.schedule = proportional\n",
            "x.cfg",
        )
        .unwrap();
        assert_eq!(c.model.hidden, 8);
        assert_eq!(c.train.optimizer.clip, None);
        assert_eq!(
            c.model.aux,
            AuxSelection {
                pos: true,
                chunk: false,
                parse: true
            }
        );
        assert_eq!(c.train.schedule, Schedule::Proportional);
    }

    #[test]
    fn errors_carry_lines() {
        let e = RunConfig::parse("model.hidden = 8\nmodel.colour = red\n", "x.cfg").unwrap_err();
        assert!(matches!(e, Error::Format { line: 2, .. }), "{e}");
        let e = RunConfig::parse("model.hidden = eight\n", "x.cfg").unwrap_err();
        assert!(matches!(e, Error::Format { line: 1, .. }));
        let e = RunConfig::parse("hidden = 8\n", "x.cfg").unwrap_err();
        assert!(matches!(e, Error::Format { line: 1, .. }));
        let e = RunConfig::parse("just words\n", "x.cfg").unwrap_err();
        assert!(matches!(e, Error::Format { line: 1, .. }));
    }

    #[test]
    fn hierarchy_picks_three_layers() {
        let c = RunConfig::default();
        assert_eq!(c.setup(CombinationCode::parse("A").unwrap(), 1).model.shared_layers, 3);
        assert_eq!(c.setup(CombinationCode::parse("D").unwrap(), 1).model.shared_layers, 1);
        let mut c2 = c.clone();
        c2.shared_layers = Some(2);
        assert_eq!(c2.setup(CombinationCode::parse("A").unwrap(), 1).model.shared_layers, 2);
    }

    proptest! {
        #[test]
        fn text_round_trips(hidden in 1usize..64, lr in 1e-5f64..1.0, drop in 0.0f64..0.9, clip in proptest::option::of(0.1f64..10.0), noise in 0.0f64..0.5) {
            let mut c = RunConfig::default();
            c.model.hidden = hidden;
            c.train.optimizer.lr = lr;
            c.model.dropout = drop;
            c.train.optimizer.clip = clip;
            c.synthetic.label_noise = noise;
            let back = RunConfig::parse(&c.to_text(), "round").unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
