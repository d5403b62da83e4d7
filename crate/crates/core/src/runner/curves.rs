//! Learning-curve artifacts built from per-run event logs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trainer::{mean_curve, peak_to_final_drop, smooth_curve};

pub const WINDOW: usize = 5;

/// Mean dev metric per epoch, averaged over the tasks in one event log.
/// Tasks that stopped early truncate the series to the shortest task.
pub fn dev_series(events: &str) -> Result<Vec<f64>> {
    let mut per_task: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, line) in events.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| Error::Format {
            path: "events".into(),
            line: i + 1,
            msg: msg.into(),
        };
        if f.len() != 5 {
            return Err(bad("expected five tab-separated fields"));
        }
        if f[2] != "dev" {
            continue;
        }
        let epoch: usize = f[0].parse().map_err(|_| bad("bad epoch"))?;
        let value: f64 = f[4].parse().map_err(|_| bad("bad value"))?;
        per_task.entry(f[1]).or_default().push((epoch, value));
    }
    let series: Vec<Vec<f64>> = per_task
        .into_values()
        .map(|mut v| {
            v.sort_by_key(|p| p.0);
            v.into_iter().map(|p| p.1).collect()
        })
        .collect();
    let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
    Ok(mean_curve(&refs))
}

/// One code's curve: the run-averaged series, its smoothing and the drop
/// from the smoothed peak to the smoothed final value.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeCurve {
    pub label: String,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub drop: Option<f64>,
}

impl CodeCurve {
    pub fn from_runs(label: &str, runs: &[Vec<f64>]) -> Result<Self> {
        let refs: Vec<&[f64]> = runs.iter().map(Vec::as_slice).collect();
        let raw = mean_curve(&refs);
        let smoothed = smooth_curve(&raw, WINDOW)?;
        let drop = peak_to_final_drop(&smoothed);
        Ok(Self {
            label: label.into(),
            raw,
            smoothed,
            drop,
        })
    }
}

/// `code, point, value` rows of the smoothed series.
pub fn write_curves(curves: &[CodeCurve]) -> String {
    let mut out = String::from("code\tpoint\tsmoothed_dev\n");
    for c in curves {
        for (i, v) in c.smoothed.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{v}\n", c.label, i + 1));
        }
    }
    out
}

pub fn write_drops(curves: &[CodeCurve]) -> String {
    let mut out = String::from("code\tpeak\tfinal\tdrop_percent\n");
    for c in curves {
        let peak = c.smoothed.iter().copied().fold(f64::NAN, f64::max);
        let last = c.smoothed.last().copied().unwrap_or(f64::NAN);
        let drop = c.drop.map_or_else(|| "nan".into(), |d| d.to_string());
        out.push_str(&format!("{}\t{peak}\t{last}\t{drop}\n", c.label));
    }
    out
}

fn missing(path: &Path, msg: &str) -> Error {
    Error::Path {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Event logs of `<out>/<label>/<run_index>/events.tsv`, in run order.
pub fn run_logs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| missing(dir, &e.to_string()))?;
    let mut runs: Vec<(usize, PathBuf)> = Vec::new();
    for e in entries {
        let e = e?;
        if let Some(i) = e.file_name().to_str().and_then(|n| n.parse::<usize>().ok()) {
            let log = e.path().join("events.tsv");
            if !log.is_file() {
                return Err(missing(&log, "no event log"));
            }
            runs.push((i, log));
        }
    }
    if runs.is_empty() {
        return Err(missing(dir, "no run directories with event logs"));
    }
    runs.sort();
    Ok(runs.into_iter().map(|r| r.1).collect())
}

/// Every subdirectory of `out` holding a manifest, sorted by name.
pub fn experiment_dirs(out: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(out).map_err(|e| missing(out, &e.to_string()))?;
    let mut labels = Vec::new();
    for e in entries {
        let e = e?;
        if e.path().join("manifest.json").is_file() {
            labels.extend(e.file_name().to_str().map(String::from));
        }
    }
    labels.sort();
    Ok(labels)
}

pub fn collect_curves(out: &Path, labels: &[String]) -> Result<Vec<CodeCurve>> {
    labels
        .iter()
        .map(|label| {
            let series = run_logs(&out.join(label))?
                .iter()
                .map(|p| dev_series(&super::tasks::read(p)?))
                .collect::<Result<Vec<_>>>()?;
            CodeCurve::from_runs(label, &series)
        })
        .collect()
}

/// Writes `curves.tsv` and `drops.tsv` under `out` for the given
/// experiments, or for every experiment found there.
pub fn curves_report(out: &Path, labels: Option<&[String]>) -> Result<Vec<CodeCurve>> {
    let found;
    let labels = match labels {
        Some(l) => l,
        None => {
            found = experiment_dirs(out)?;
            if found.is_empty() {
                return Err(missing(out, "no experiments found"));
            }
            &found
        }
    };
    let curves = collect_curves(out, labels)?;
    for (name, text) in [("curves.tsv", write_curves(&curves)), ("drops.tsv", write_drops(&curves))] {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| missing(&p, &e.to_string()))?;
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(values: &[f64]) -> String {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{}\tt\tdev\taccuracy\t{v}\n{}\tall\ttrain\tloss\t1\n", i + 1, i + 1))
            .collect()
    }

    #[test]
    fn series_averages_tasks() {
        let ev = "1\ta\tdev\taccuracy\t0.5\n1\tb\tdev\taccuracy\t0.7\n2\ta\tdev\taccuracy\t0.9\n\
                  2\tb\tdev\taccuracy\t0.5\n3\ta\tdev\taccuracy\t1\n3\ta\ttest\taccuracy\t0.2\n";
        let s = dev_series(ev).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0] - 0.6).abs() < 1e-12 && (s[1] - 0.7).abs() < 1e-12);
        assert!(matches!(dev_series("1\ta\tdev\n"), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn constant_log_has_no_drop() {
        let s = dev_series(&log(&[0.7; 12])).unwrap();
        let c = CodeCurve::from_runs("SINGLE", &[s]).unwrap();
        assert_eq!(c.drop, Some(0.0));
    }

    #[test]
    fn peak_then_decline() {
        let mut v = vec![0.8; 5];
        v.extend([0.65; 5]);
        let c = CodeCurve::from_runs("SINGLE", &[dev_series(&log(&v)).unwrap()]).unwrap();
        assert_eq!(c.smoothed.len(), 2);
        assert!((c.smoothed[0] - 0.8).abs() < 1e-12 && (c.smoothed[1] - 0.65).abs() < 1e-12);
        assert!((c.drop.unwrap() - 18.75).abs() < 1e-9);
    }

    #[test]
    fn two_codes_one_artifact() {
        let dir = tempfile::tempdir().unwrap();
        for (label, v) in [("SINGLE", 0.5), ("C", 0.9)] {
            let run = dir.path().join(label).join("0");
            fs::create_dir_all(&run).unwrap();
            fs::write(dir.path().join(label).join("manifest.json"), "{}").unwrap();
            fs::write(run.join("events.tsv"), log(&[v; 10])).unwrap();
        }
        let curves = curves_report(dir.path(), None).unwrap();
        assert_eq!(curves.len(), 2);
        let text = fs::read_to_string(dir.path().join("curves.tsv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2);
        assert!(text.lines().any(|l| l.starts_with("C\t1\t")) && text.lines().any(|l| l.starts_with("SINGLE\t2\t")));
        let drops = fs::read_to_string(dir.path().join("drops.tsv")).unwrap();
        assert_eq!(drops.lines().count(), 3);
    }

    #[test]
    fn missing_logs_are_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let e = curves_report(dir.path(), Some(&["A".to_string()])).unwrap_err();
        assert!(matches!(e, Error::Path { .. }));
        fs::create_dir_all(dir.path().join("A").join("0")).unwrap();
        let e = curves_report(dir.path(), Some(&["A".to_string()])).unwrap_err();
        assert!(matches!(e, Error::Path { .. }));
    }
}
