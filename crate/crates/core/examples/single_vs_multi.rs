//! Trains the single-task baseline and one multi-task code on the toy
//! domains and compares test accuracy. Takes about half a minute.

use mtl_core::runner::{CombinationCode, RunConfig};
use mtl_core::trainer::{run_experiment, Suite};

fn main() -> mtl_core::Result<()> {
    let mut config = RunConfig::default();
    config.synthetic.sizes.test = 200;
    config.synthetic.lexicon.domains = 3;
    let s = &config.synthetic;
    let suite = Suite::synthetic(&s.grammar(), s.sizes, s.tasks)?;

    for code in ["SINGLE", "E"] {
        let setup = config.setup(CombinationCode::parse(code)?, 1);
        let report = run_experiment(&setup, &suite, 1)?;
        let run = &report.runs[0];
        let per_task: Vec<String> = run.test.iter().map(|m| format!("{:.3}", m.value)).collect();
        println!(
            "{code:>6}: mean {:.4} over [{}], best epochs {:?}",
            report.mean.unwrap_or(f64::NAN),
            per_task.join(", "),
            run.best_epochs
        );
    }
    Ok(())
}
