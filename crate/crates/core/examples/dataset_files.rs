//! Writes toy corpora to TSV and CoNLL-style files, runs an experiment from
//! a task file, then repeats it from the recorded manifest and compares
//! the reports byte for byte.

use std::fs;

use mtl_core::auxiliary::{generate_corpus, LexiconSizes, Split, ToyGrammar};
use mtl_core::data::{write_dataset, write_tagged};
use mtl_core::runner::{execute, load_tasks, CombinationCode, RunConfig, RunManifest, Source};

fn main() -> mtl_core::Result<()> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let grammar = ToyGrammar::with_sizes(
        2,
        LexiconSizes {
            domains: 2,
            ..LexiconSizes::default()
        },
    );
    let mut task_file = String::new();
    for (split, n) in [(Split::Train, 60), (Split::Dev, 20), (Split::Test, 20)] {
        let corpus = generate_corpus(&grammar, n, split)?;
        let name = split.name();
        for (d, examples) in corpus.single.iter().enumerate() {
            fs::write(root.join(format!("d{d}.{name}.tsv")), write_dataset(examples))?;
            task_file.push_str(&format!("task.d{d}.kind = single\ntask.d{d}.{name} = d{d}.{name}.tsv\n"));
        }
        fs::write(root.join(format!("tags.{name}.conll")), write_tagged(&corpus.tagged))?;
    }
    fs::write(root.join("tasks.cfg"), &task_file)?;
    fs::write(
        root.join("run.cfg"),
        "model.hidden = 6\nmodel.embed_dim = 8\ntrain.epochs = 3\n\
         data.aux_train = tags.train.conll\ndata.aux_dev = tags.dev.conll\ndata.aux_test = tags.test.conll\n",
    )?;

    let config = RunConfig::load(&root.join("run.cfg"))?;
    let tasks = load_tasks(&root.join("tasks.cfg"))?;
    let manifest = RunManifest::new(CombinationCode::parse("A")?, &config, Source::Files { tasks }, 4, 2)?;
    for input in &manifest.inputs {
        println!("{:<10} {}", input.role, &input.sha256[..16]);
    }
    let first = execute(&manifest, &root.join("first"))?;
    println!("mean test {:.4}", first.mean.unwrap_or(f64::NAN));

    let recorded = RunManifest::load(&root.join("first/manifest.json"))?;
    execute(&recorded, &root.join("again"))?;
    let same = fs::read(root.join("first/report.json"))? == fs::read(root.join("again/report.json"))?;
    println!("rerun identical: {same}");
    Ok(())
}
