//! The `mtl` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

use super::code::CombinationCode;
use super::config::RunConfig;
use super::curves::{curves_report, write_drops};
use super::grid::{code_rows, hierarchy_rows, run_grid, GridSpec};
use super::manifest::{execute, RunManifest, Source};
use super::tasks::load_tasks;

#[derive(Parser, Debug)]
#[command(name = "mtl", version, about = "Multi-task text classification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one combination code, repeated over consecutive seeds.
    Run(RunArgs),
    /// Train a table of codes and write grid.tsv / grid.txt.
    Grid(GridArgs),
    /// Smoothed dev curves and peak-to-final drops from event logs.
    Curves(CurvesArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Flat `section.key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task file listing dataset paths.
    #[arg(long, conflicts_with = "synthetic")]
    pub tasks: Option<PathBuf>,
    /// Use the bundled toy-grammar tasks.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Combination of A-E, or SINGLE.
    #[arg(long, required_unless_present = "manifest")]
    pub code: Option<String>,
    /// Repeat the experiment recorded in a manifest.json.
    #[arg(long, conflicts_with_all = ["code", "config", "tasks", "synthetic"])]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// Comma-separated codes.
    #[arg(long, conflicts_with_all = ["full_grid", "elh_ablation"])]
    pub code: Option<String>,
    /// Every row of the standard ablation table.
    #[arg(long)]
    pub full_grid: bool,
    /// Hierarchy rows with partial auxiliary tasks.
    #[arg(long, conflicts_with = "full_grid")]
    pub elh_ablation: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct CurvesArgs {
    /// Output directory holding `<code>/<run>/events.tsv`.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Comma-separated experiment labels; all found under --out by default.
    #[arg(long)]
    pub code: Option<String>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn source(d: &DataArgs) -> Result<Source> {
    match (&d.tasks, d.synthetic) {
        (Some(p), false) => Ok(Source::Files { tasks: load_tasks(p)? }),
        (None, true) => Ok(Source::Synthetic),
        _ => Err(Error::Usage("give --tasks FILE or --synthetic".into())),
    }
}

/// Runs a parsed command. `Ok(false)` means a run or cell failed.
pub fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(a) => {
            let (manifest, dir) = match &a.manifest {
                Some(p) => {
                    let m = RunManifest::load(p)?;
                    let dir = a.data.out.join(m.code.to_string());
                    (m, dir)
                }
                None => {
                    let code = CombinationCode::parse(a.code.as_deref().unwrap_or_default())?;
                    let config = load_config(a.data.config.as_deref())?;
                    let m = RunManifest::new(code, &config, source(&a.data)?, a.data.seed, a.data.repeats)?;
                    (m, a.data.out.join(code.to_string()))
                }
            };
            let report = execute(&manifest, &dir)?;
            for (task, v) in report.tasks.iter().zip(&report.mean_test) {
                println!("{}\t{task}\t{}", report.code, v.map_or_else(|| "NA".into(), |x| format!("{x:.4}")));
            }
            if let Some(m) = report.mean {
                println!("{}\tmean\t{m:.4}", report.code);
            }
            if !report.succeeded() {
                eprintln!("{} of {} runs failed", report.failed, report.runs.len());
            }
            eprintln!("wrote {}", dir.display());
            Ok(report.succeeded())
        }
        Command::Grid(a) => {
            let rows = if a.full_grid {
                code_rows(&CombinationCode::full_grid())
            } else if a.elh_ablation {
                hierarchy_rows()
            } else {
                match &a.code {
                    Some(list) => code_rows(&CombinationCode::parse_list(list)?),
                    None => return Err(Error::Usage("give --code LIST, --full-grid or --elh-ablation".into())),
                }
            };
            let spec = GridSpec {
                rows,
                config: load_config(a.data.config.as_deref())?,
                source: source(&a.data)?,
                seed: a.data.seed,
                repeats: a.data.repeats,
                workers: a.workers,
            };
            let table = run_grid(&spec, &a.data.out)?;
            print!("{}", table.to_text());
            Ok(table.failed() == 0)
        }
        Command::Curves(a) => {
            let labels: Option<Vec<String>> = a
                .code
                .map(|s| s.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect());
            let curves = curves_report(&a.out, labels.as_deref())?;
            print!("{}", write_drops(&curves));
            Ok(true)
        }
    }
}

/// Parses arguments and runs. Exit status 0 when everything succeeded,
/// 1 when a run or grid cell failed, 2 on usage, config, path or data
/// errors.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
