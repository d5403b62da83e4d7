//! Run manifests and the on-disk layout of one experiment:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/report.json
//! <dir>/curves.tsv
//! <dir>/<run_index>/events.tsv
//! <dir>/<run_index>/run.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::trainer::{run_once, summarize, ExperimentReport, ExperimentSetup, Suite};

use super::code::CombinationCode;
use super::config::RunConfig;
use super::curves::{dev_series, write_curves, CodeCurve};
use super::tasks::{input_files, load_suite, TaskEntry};

pub const TOOL: &str = concat!("mtl ", env!("CARGO_PKG_VERSION"));

/// Where the task data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Synthetic,
    Files { tasks: Vec<TaskEntry> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to repeat an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub code: CombinationCode,
    pub seed: u64,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    /// Full config in the flat text format.
    pub config: String,
    pub source: Source,
    pub inputs: Vec<InputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Path {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    fs::canonicalize(p).map_err(|e| Error::Path {
        path: p.to_path_buf(),
        msg: e.to_string(),
    })
}

impl RunManifest {
    /// Resolves every input path and records its digest.
    pub fn new(code: CombinationCode, config: &RunConfig, source: Source, seed: u64, repeats: usize) -> Result<Self> {
        if repeats == 0 {
            return Err(Error::Config("repeats must be ≥ 1".into()));
        }
        let mut config = config.clone();
        let source = match source {
            Source::Synthetic => Source::Synthetic,
            Source::Files { mut tasks } => {
                for t in &mut tasks {
                    t.train = absolute(&t.train)?;
                    t.dev = absolute(&t.dev)?;
                    if let Some(p) = &t.test {
                        t.test = Some(absolute(p)?);
                    }
                }
                let d = &mut config.data;
                for p in [&mut d.embeddings, &mut d.aux_train, &mut d.aux_dev, &mut d.aux_test]
                    .into_iter()
                    .flatten()
                {
                    *p = absolute(p)?;
                }
                Source::Files { tasks }
            }
        };
        let mut inputs = Vec::new();
        if let Source::Files { tasks } = &source {
            for (role, path) in input_files(tasks, &config.data) {
                let sha256 = sha256_file(&path)?;
                inputs.push(InputDigest { role, path, sha256 });
            }
        }
        Ok(Self {
            tool: TOOL.into(),
            code,
            seed,
            repeats,
            seeds: (0..repeats as u64).map(|i| seed + i).collect(),
            config: config.to_text(),
            source,
            inputs,
        })
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::parse(&self.config, "manifest config")
    }

    pub fn setup(&self) -> Result<ExperimentSetup> {
        Ok(self.run_config()?.setup(self.code, self.seed))
    }

    /// Fails if any recorded input is missing or has changed.
    pub fn verify(&self) -> Result<()> {
        for i in &self.inputs {
            let now = sha256_file(&i.path)?;
            if now != i.sha256 {
                return Err(Error::Config(format!(
                    "{} ({}) changed since the manifest was written",
                    i.role,
                    i.path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn suite(&self) -> Result<Suite> {
        let config = self.run_config()?;
        match &self.source {
            Source::Synthetic => {
                let s = &config.synthetic;
                Suite::synthetic(&s.grammar(), s.sizes, s.tasks)
            }
            Source::Files { tasks } => load_suite(tasks, &config.data, config.model.embed_dim, self.seed),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::tasks::read(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Path {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Path {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Runs the manifest's experiment and writes every artifact under `dir`.
/// Inputs are verified and the setup validated before anything is
/// written or trained.
pub fn execute(manifest: &RunManifest, dir: &Path) -> Result<ExperimentReport> {
    manifest.verify()?;
    let suite = manifest.suite()?;
    execute_on(manifest, &suite, dir)
}

/// As [`execute`], with the suite already built from the manifest.
pub fn execute_on(manifest: &RunManifest, suite: &Suite, dir: &Path) -> Result<ExperimentReport> {
    let setup = manifest.setup()?;
    setup.validate(suite)?;
    if manifest.seeds.len() != manifest.repeats || manifest.seeds.iter().enumerate().any(|(i, &s)| s != manifest.seed + i as u64) {
        return Err(Error::Config("manifest seeds do not follow seed + run index".into()));
    }
    create_dir(dir)?;
    write(&dir.join("manifest.json"), &manifest.to_json()?)?;
    let mut runs = Vec::new();
    for i in 0..manifest.repeats {
        let run = run_once(&setup, suite, i)?;
        let rd = dir.join(i.to_string());
        create_dir(&rd)?;
        let events: String = run.events.iter().map(|l| format!("{l}\n")).collect();
        write(&rd.join("events.tsv"), &events)?;
        write(&rd.join("run.json"), &(serde_json::to_string_pretty(&run)? + "\n"))?;
        runs.push(run);
    }
    let report = summarize(&setup, suite, runs);
    write(&dir.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let series: Vec<Vec<f64>> = report
        .runs
        .iter()
        .filter(|r| r.completed())
        .map(|r| dev_series(&r.events.join("\n")))
        .collect::<Result<_>>()?;
    let curve = CodeCurve::from_runs(&report.code, &series)?;
    write(&dir.join("curves.tsv"), &write_curves(std::slice::from_ref(&curve)))?;
    Ok(report)
}
