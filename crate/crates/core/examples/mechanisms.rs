//! Builds the full ensemble on toy data and lists the loss terms each
//! combination code contributes to one forward pass, then toggles
//! mechanisms off at runtime on the same weights.

use mtl_core::autodiff::{Graph, Tensor};
use mtl_core::auxiliary::{LexiconSizes, ToyGrammar};
use mtl_core::data::{batch_iter, tag_batches};
use mtl_core::mechanisms::oc_penalty;
use mtl_core::model::{assemble, Flags, Mode, ModelConfig};
use mtl_core::trainer::{SplitSizes, Suite, SyntheticTasks};

fn main() -> mtl_core::Result<()> {
    let sizes = LexiconSizes {
        domains: 3,
        ..LexiconSizes::default()
    };
    let grammar = ToyGrammar::with_sizes(5, sizes);
    let split = SplitSizes {
        train: 16,
        dev: 4,
        test: 4,
    };
    let suite = Suite::synthetic(&grammar, split, SyntheticTasks::Mixed)?;

    let mut config = suite.fill_config(ModelConfig::for_flags(Flags::parse("ABCDE")?));
    config.hidden = 8;
    config.embed_dim = 12;
    let mut model = assemble(&config, &suite.specs())?;
    println!("{} tasks, {} parameters", suite.tasks.len(), model.num_parameters());

    let batches = suite
        .tasks
        .iter()
        .map(|t| Ok(batch_iter(&t.train, 4, 40, None)?.remove(0)))
        .collect::<mtl_core::Result<Vec<_>>>()?;
    let aux = suite.aux.as_ref().expect("synthetic suites carry tagged data");
    let tags = tag_batches(&aux.train, &suite.vocab, &aux.pos, &aux.chunk, 4, 40, None)?.remove(0);
    let refs: Vec<_> = batches.iter().map(Some).collect();

    // with everything off the assembled shared encoder still runs, so the
    // last row is plain hard sharing
    for code in ["ABCDE", "ACE", "D", "SINGLE"] {
        model.set_active(Flags::parse(code)?)?;
        let mut g = Graph::new();
        let out = model.forward(&mut g, &refs, Some(&tags), &Mode::eval())?;
        let terms: Vec<String> = out
            .bundle
            .terms()
            .iter()
            .map(|(name, v)| format!("{name}={:.4}", g.scalar_value(*v)))
            .collect();
        println!("{code:>6}: total {:.4}  {}", g.scalar_value(out.total), terms.join(" "));
    }

    // shared and private features active at different positions are orthogonal
    let mut g = Graph::new();
    let s = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 0.0, 0.0])?);
    let p = g.constant(Tensor::matrix(2, 2, vec![0.0, 0.0, 3.0, -1.0])?);
    let q = g.constant(Tensor::matrix(2, 2, vec![1.0, 1.0, 1.0, 1.0])?);
    let zero = oc_penalty(&mut g, &[(s, p)], 0.01)?;
    let some = oc_penalty(&mut g, &[(s, q)], 0.01)?;
    println!("orthogonality: {} vs {:.4}", g.scalar_value(zero), g.scalar_value(some));
    Ok(())
}
