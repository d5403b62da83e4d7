//! A reduced hierarchy ablation: every subset of auxiliary tasks, each row
//! written under a temporary output directory, two rows at a time.

use mtl_core::runner::{hierarchy_rows, run_grid, GridSpec, RunConfig, Source};

fn main() -> mtl_core::Result<()> {
    let mut config = RunConfig::default();
    config.synthetic.sizes.train = 60;
    config.synthetic.sizes.dev = 20;
    config.synthetic.sizes.test = 40;
    config.synthetic.lexicon.domains = 2;
    config.model.hidden = 6;
    config.model.embed_dim = 8;
    config.train.optimizer.epochs = 3;

    let out = tempfile::tempdir()?;
    let spec = GridSpec {
        rows: hierarchy_rows(),
        config,
        source: Source::Synthetic,
        seed: 1,
        repeats: 1,
        workers: 2,
    };
    let table = run_grid(&spec, out.path())?;
    print!("{}", table.to_text());
    println!("\n{}", table.to_tsv().lines().next().unwrap_or_default());
    Ok(())
}
