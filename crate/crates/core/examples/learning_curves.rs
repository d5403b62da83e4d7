//! Overfits two codes on a small noisy suite, then reads their event logs
//! back into smoothed dev curves and peak-to-final drops.

use mtl_core::runner::{curves_report, execute, write_drops, CombinationCode, RunConfig, RunManifest, Source};

fn main() -> mtl_core::Result<()> {
    let mut config = RunConfig::default();
    let s = &mut config.synthetic;
    s.sizes.train = 150;
    s.lexicon.domains = 2;
    s.lexicon.polar_adjectives = 12;
    s.lexicon.polar_verbs = 6;
    s.label_noise = 0.3;
    s.subordinate_rate = 0.0;
    s.negation_rate = 0.0;
    config.model.hidden = 32;
    config.model.embed_dim = 32;
    config.model.dropout = 0.0;
    config.train.batch_size = 8;
    config.train.optimizer.lr = 0.003;
    config.train.optimizer.epochs = 30;
    config.train.optimizer.patience = 0;

    let out = tempfile::tempdir()?;
    for code in ["SINGLE", "C"] {
        let code = CombinationCode::parse(code)?;
        let manifest = RunManifest::new(code, &config, Source::Synthetic, 1, 2)?;
        execute(&manifest, &out.path().join(code.to_string()))?;
    }
    let curves = curves_report(out.path(), None)?;
    for c in &curves {
        let points: Vec<String> = c.smoothed.iter().map(|v| format!("{v:.3}")).collect();
        println!("{:>6}: {}", c.label, points.join(" "));
    }
    print!("{}", write_drops(&curves));
    Ok(())
}
