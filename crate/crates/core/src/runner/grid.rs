//! Ablation grids: one experiment per row, run on a bounded worker pool,
//! assembled into a table of per-task test metrics.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::AuxSelection;
use crate::trainer::ExperimentReport;

use super::code::CombinationCode;
use super::config::RunConfig;
use super::manifest::{execute_on, RunManifest, Source};

/// One table row: a combination code plus optional overrides. The label
/// names the row and its output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub label: String,
    pub code: CombinationCode,
    pub aux: Option<AuxSelection>,
    pub per_task: bool,
}

impl GridRow {
    pub fn code(code: CombinationCode) -> Self {
        Self {
            label: code.to_string(),
            code,
            aux: None,
            per_task: false,
        }
    }

    fn hierarchy(label: &str, aux: AuxSelection) -> Self {
        Self {
            label: label.into(),
            code: CombinationCode::parse("A").expect("valid code"),
            aux: Some(aux),
            per_task: false,
        }
    }

    pub fn config(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        if let Some(a) = self.aux {
            c.model.aux = a;
        }
        c.per_task |= self.per_task;
        c
    }
}

pub fn code_rows(codes: &[CombinationCode]) -> Vec<GridRow> {
    codes.iter().copied().map(GridRow::code).collect()
}

/// Rows of the hierarchy ablation: the single baseline, the hierarchy
/// trained per task, and the multi-task hierarchy with every subset of
/// auxiliary tasks.
pub fn hierarchy_rows() -> Vec<GridRow> {
    let aux = |pos, chunk, parse| AuxSelection { pos, chunk, parse };
    let mut slh = GridRow::hierarchy("SLH", AuxSelection::ALL);
    slh.per_task = true;
    vec![
        GridRow::code(CombinationCode::parse("SINGLE").expect("valid code")),
        slh,
        GridRow::hierarchy("NoAux", AuxSelection::NONE),
        GridRow::hierarchy("Pos", aux(true, false, false)),
        GridRow::hierarchy("Chunk", aux(false, true, false)),
        GridRow::hierarchy("Parse", aux(false, false, true)),
        GridRow::hierarchy("Pos+Chunk", aux(true, true, false)),
        GridRow::hierarchy("Pos+Parse", aux(true, false, true)),
        GridRow::hierarchy("Chunk+Parse", aux(false, true, true)),
        GridRow::hierarchy("ELH", AuxSelection::ALL),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLine {
    pub label: String,
    pub values: Vec<Option<f64>>,
    pub ave: Option<f64>,
    pub improvement: Option<f64>,
    /// Why the cell is marked, if it is.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub tasks: Vec<String>,
    pub lines: Vec<GridLine>,
}

impl GridTable {
    /// Builds lines from per-row outcomes. Improvement is relative to the
    /// row labelled SINGLE, when there is one.
    pub fn assemble(tasks: Vec<String>, cells: Vec<(String, std::result::Result<ExperimentReport, String>)>) -> Self {
        let mut lines: Vec<GridLine> = cells
            .into_iter()
            .map(|(label, cell)| match cell {
                Ok(r) => {
                    let values = r.mean_test.clone();
                    let ave = if !values.is_empty() && values.iter().all(Option::is_some) {
                        Some(values.iter().flatten().sum::<f64>() / values.len() as f64)
                    } else {
                        None
                    };
                    let failure = (r.failed > 0).then(|| format!("{} of {} runs failed", r.failed, r.runs.len()));
                    GridLine {
                        label,
                        values,
                        ave,
                        improvement: None,
                        failure,
                    }
                }
                Err(e) => GridLine {
                    label,
                    values: vec![None; tasks.len()],
                    ave: None,
                    improvement: None,
                    failure: Some(e),
                },
            })
            .collect();
        let base = lines.iter().find(|l| l.label == "SINGLE").and_then(|l| l.ave);
        for l in &mut lines {
            l.improvement = base.zip(l.ave).map(|(b, a)| a - b);
        }
        Self { tasks, lines }
    }

    pub fn failed(&self) -> usize {
        self.lines.iter().filter(|l| l.failure.is_some()).count()
    }

    pub fn to_tsv(&self) -> String {
        let num = |v: Option<f64>| v.map_or_else(|| "NA".into(), |x| x.to_string());
        let mut out = format!("code\t{}\tAve.\tImprovement\tstatus\n", self.tasks.join("\t"));
        for l in &self.lines {
            let mut cols = vec![l.label.clone()];
            cols.extend(l.values.iter().map(|&v| num(v)));
            cols.push(num(l.ave));
            cols.push(num(l.improvement));
            cols.push(l.failure.as_ref().map_or_else(|| "ok".into(), |f| format!("FAILED: {f}")));
            out.push_str(&cols.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Aligned table with metrics in percent.
    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{:.2}", 100.0 * x));
        let mut rows: Vec<Vec<String>> = vec![];
        let mut head = vec!["Code".to_string()];
        head.extend(self.tasks.iter().cloned());
        head.extend(["Ave.".into(), "Improvement".into()]);
        rows.push(head);
        for l in &self.lines {
            let mut label = l.label.clone();
            if l.failure.is_some() {
                label.push('*');
            }
            let mut r = vec![label];
            r.extend(l.values.iter().map(|&v| pct(v)));
            r.push(pct(l.ave));
            r.push(l.improvement.map_or_else(|| "-".into(), |x| format!("{:+.2}", 100.0 * x)));
            rows.push(r);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, &w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        if self.failed() > 0 {
            out.push_str("* failed cell\n");
        }
        out
    }
}

/// Grid settings shared by every row.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub rows: Vec<GridRow>,
    pub config: RunConfig,
    pub source: Source,
    pub seed: u64,
    pub repeats: usize,
    pub workers: usize,
}

/// Runs every row under `out/<label>/` and writes `grid.tsv` and
/// `grid.txt`. Configuration problems in any row are reported before
/// training starts.
pub fn run_grid(spec: &GridSpec, out: &Path) -> Result<GridTable> {
    if spec.rows.is_empty() {
        return Err(Error::Usage("empty grid".into()));
    }
    if spec.workers == 0 {
        return Err(Error::Config("workers must be ≥ 1".into()));
    }
    for (i, r) in spec.rows.iter().enumerate() {
        if spec.rows[..i].iter().any(|o| o.label == r.label) {
            return Err(Error::Usage(format!("row {} appears twice", r.label)));
        }
    }
    let manifests = spec
        .rows
        .iter()
        .map(|r| RunManifest::new(r.code, &r.config(&spec.config), spec.source.clone(), spec.seed, spec.repeats))
        .collect::<Result<Vec<_>>>()?;
    manifests[0].verify()?;
    let suite = manifests[0].suite()?;
    for m in &manifests {
        m.setup()?.validate(&suite)?;
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<std::result::Result<ExperimentReport, String>>>> =
        Mutex::new(vec![None; spec.rows.len()]);
    std::thread::scope(|scope| {
        for _ in 0..spec.workers.min(spec.rows.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= spec.rows.len() {
                    break;
                }
                let cell = execute_on(&manifests[i], &suite, &out.join(&spec.rows[i].label)).map_err(|e| e.to_string());
                slots.lock().expect("result slots")[i] = Some(cell);
            });
        }
    });
    let cells = spec
        .rows
        .iter()
        .zip(slots.into_inner().expect("result slots"))
        .map(|(r, c)| (r.label.clone(), c.unwrap_or_else(|| Err("not run".into()))))
        .collect();
    let table = GridTable::assemble(suite.tasks.iter().map(|t| t.spec.name.clone()).collect(), cells);
    for (name, text) in [("grid.tsv", table.to_tsv()), ("grid.txt", table.to_text())] {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::Path {
            path: p.clone(),
            msg: e.to_string(),
        })?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{RunReport, RunStatus};

    fn report(code: &str, values: &[f64], failed: usize) -> ExperimentReport {
        let run = |status| RunReport {
            run_index: 0,
            seed: 1,
            status,
            epochs: 1,
            best_epochs: vec![],
            best_dev: 0.0,
            test: vec![],
            aux_test: None,
            curves: vec![],
            train_loss: vec![],
            events: vec![],
        };
        let mut runs = vec![run(RunStatus::Completed)];
        runs.extend((0..failed).map(|_| run(RunStatus::Failed { reason: "x".into() })));
        ExperimentReport {
            code: code.into(),
            tasks: vec![],
            seed: 1,
            runs,
            mean_test: values.iter().map(|&v| Some(v)).collect(),
            mean: None,
            failed,
        }
    }

    #[test]
    fn improvement_is_relative_to_single() {
        let tasks = vec!["a".to_string(), "b".to_string()];
        let t = GridTable::assemble(
            tasks,
            vec![
                ("SINGLE".into(), Ok(report("SINGLE", &[0.5, 0.7], 0))),
                ("A".into(), Ok(report("A", &[0.8, 0.9], 0))),
            ],
        );
        assert_eq!(t.lines.len(), 2);
        assert_eq!(t.lines[0].improvement, Some(0.0));
        let a = &t.lines[1];
        assert!((a.ave.unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(a.improvement, Some(a.ave.unwrap() - t.lines[0].ave.unwrap()));
        let tsv = t.to_tsv();
        assert_eq!(tsv.lines().next().unwrap(), "code\ta\tb\tAve.\tImprovement\tstatus");
        assert_eq!(tsv.lines().count(), 3);
        assert!(t.to_text().contains("+25.00"));
    }

    #[test]
    fn failed_cells_are_marked() {
        let t = GridTable::assemble(
            vec!["a".into()],
            vec![
                ("SINGLE".into(), Err("boom".into())),
                ("B".into(), Ok(report("B", &[0.6], 1))),
            ],
        );
        assert_eq!(t.failed(), 2);
        assert_eq!(t.lines[1].improvement, None);
        let tsv = t.to_tsv();
        assert!(tsv.contains("SINGLE\tNA\tNA\tNA\tFAILED: boom"));
        assert!(tsv.contains("FAILED: 1 of 2 runs failed"));
        assert!(t.to_text().contains("SINGLE*"));
    }

    #[test]
    fn hierarchy_rows_cover_subsets() {
        let rows = hierarchy_rows();
        let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            ["SINGLE", "SLH", "NoAux", "Pos", "Chunk", "Parse", "Pos+Chunk", "Pos+Parse", "Chunk+Parse", "ELH"]
        );
        let mut subsets: Vec<[bool; 3]> = rows[2..].iter().map(|r| r.aux.map(|a| [a.pos, a.chunk, a.parse]).unwrap()).collect();
        subsets.sort();
        subsets.dedup();
        assert_eq!(subsets.len(), 8);
        assert!(rows[1].per_task && rows[1].config(&RunConfig::default()).per_task);
    }
}
