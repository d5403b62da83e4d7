use super::*;
use crate::autodiff::Tensor;
use crate::auxiliary::{LexiconSizes, ToyGrammar};
use crate::data::{batch_iter, Batch};
use crate::error::Error;
use crate::model::{assemble, Flags, Mode, ModelConfig};

fn tiny_suite(which: SyntheticTasks) -> Suite {
    let g = ToyGrammar::with_sizes(
        4,
        LexiconSizes {
            domains: 2,
            polar_adjectives: 6,
            neutral_adjectives: 2,
            polar_verbs: 4,
            nouns_per_domain: 4,
        },
    );
    let sizes = SplitSizes {
        train: 24,
        dev: 8,
        test: 8,
    };
    Suite::synthetic(&g, sizes, which).unwrap()
}

fn tiny_setup(code: &str, epochs: usize) -> ExperimentSetup {
    let mut model = ModelConfig::for_flags(Flags::parse(code).unwrap());
    model.hidden = 4;
    model.embed_dim = 6;
    model.parse_dep_dim = 5;
    model.parse_hidden_dim = 6;
    let mut train = TrainConfig::default();
    train.optimizer.epochs = epochs;
    train.optimizer.lr = 0.01;
    train.batch_size = 8;
    ExperimentSetup { model, train, seed: 3, per_task: false }
}

fn model_for(suite: &Suite, code: &str) -> crate::model::Model {
    let cfg = suite.fill_config(tiny_setup(code, 1).model);
    assemble(&cfg, &suite.specs()).unwrap()
}

fn first_batches(suite: &Suite, size: usize) -> Vec<Batch> {
    suite
        .tasks
        .iter()
        .map(|t| batch_iter(&t.train, size, 40, None).unwrap().remove(0))
        .collect()
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let mut model = model_for(&suite, "BD");
    let before = model.store.snapshot();
    let cfg = OptimizerConfig {
        lr: 0.0,
        ..Default::default()
    };
    let mut opt = Optimizer::new(cfg, &model.store);
    let b = first_batches(&suite, 8);
    let picked: Vec<Option<&Batch>> = b.iter().map(Some).collect();
    let r = train_step(&mut model, &mut opt, &picked, None, &Mode::train(1, 0)).unwrap();
    assert!(r.total > 0.0);
    assert_eq!(model.store.snapshot(), before);
}

#[test]
fn single_task_step_has_only_the_task_term() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let mut model = model_for(&suite, "SINGLE");
    let mut opt = Optimizer::new(OptimizerConfig::default(), &model.store);
    let b = first_batches(&suite, 8);
    let r = train_step(&mut model, &mut opt, &[Some(&b[0]), None], None, &Mode::train(1, 0)).unwrap();
    assert_eq!(r.terms.len(), 1);
    assert_eq!(r.terms[0].0, "task");
    assert_eq!(r.terms[0].1, r.total);
}

#[test]
fn loss_descends_on_a_fixed_pair() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let mut cfg = suite.fill_config(ModelConfig::default());
    cfg.dropout = 0.0;
    let spec = vec![suite.tasks[0].spec.clone()];
    let mut model = assemble(&cfg, &spec).unwrap();
    let two: Vec<_> = suite.tasks[0].train[..2].to_vec();
    let batch = batch_iter(&two, 2, 40, None).unwrap().remove(0);
    let mut opt = Optimizer::new(OptimizerConfig::default(), &model.store);
    let mut last = f64::INFINITY;
    for step in 0..50 {
        let r = train_step(&mut model, &mut opt, &[Some(&batch)], None, &Mode::train(1, step)).unwrap();
        assert!(r.total < last, "step {step}: {} after {last}", r.total);
        last = r.total;
    }
}

#[test]
fn clipped_norm_is_bounded() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let mut model = model_for(&suite, "DE");
    let cfg = OptimizerConfig {
        clip: Some(1e-3),
        ..Default::default()
    };
    let mut opt = Optimizer::new(cfg, &model.store);
    let b = first_batches(&suite, 8);
    let picked: Vec<Option<&Batch>> = b.iter().map(Some).collect();
    let r = train_step(&mut model, &mut opt, &picked, None, &Mode::train(1, 0)).unwrap();
    assert!(r.grad_norm > 1e-3);
    assert!(r.clipped_norm <= 1e-3 + 1e-9);
}

#[test]
fn non_finite_loss_names_the_term() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let mut model = model_for(&suite, "SINGLE");
    let id = model.store.id("embedding").unwrap();
    model.store.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v = f64::NAN);
    let mut opt = Optimizer::new(OptimizerConfig::default(), &model.store);
    let b = first_batches(&suite, 8);
    let err = train_step(&mut model, &mut opt, &[Some(&b[0]), None], None, &Mode::train(1, 0)).unwrap_err();
    assert!(matches!(err, Error::Divergence { ref term } if term == "task"));
}

#[test]
fn zero_weight_task_is_isolated() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    for code in ["SINGLE", "D", "AD"] {
        let mut with_cfg = suite.fill_config(tiny_setup(code, 1).model);
        with_cfg.hard_sharing = true;
        let mut specs = suite.specs();
        specs[1] = specs[1].clone().with_weight(0.0);
        let mut with = assemble(&with_cfg, &specs).unwrap();
        let mut without = assemble(&with_cfg, &specs[..1]).unwrap();
        let b = first_batches(&suite, 8);
        let aux_data = suite.aux.as_ref().unwrap();
        let aux = crate::data::tag_batches(&aux_data.train, &suite.vocab, &aux_data.pos, &aux_data.chunk, 6, 40, None)
            .unwrap()
            .remove(0);
        let aux = with_cfg.flags.elh.then_some(&aux);
        let mut o1 = Optimizer::new(OptimizerConfig::default(), &with.store);
        let mut o2 = Optimizer::new(OptimizerConfig::default(), &without.store);
        for step in 0..3 {
            let m = Mode::train(5, step);
            train_step(&mut with, &mut o1, &[Some(&b[0]), Some(&b[1])], aux, &m).unwrap();
            train_step(&mut without, &mut o2, &[Some(&b[0])], aux, &m).unwrap();
        }
        for p in without.store.iter() {
            let q = with.store.by_name(&p.name).unwrap();
            assert_eq!(p.value, q.value, "{code}: {}", p.name);
        }
    }
}

#[test]
fn evaluation_is_repeatable_and_memorizes() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let mut cfg = suite.fill_config(ModelConfig::default());
    cfg.dropout = 0.0;
    let spec = vec![suite.tasks[0].spec.clone()];
    let mut model = assemble(&cfg, &spec).unwrap();
    let data: Vec<_> = suite.tasks[0].train[..8].to_vec();
    let batch = batch_iter(&data, 8, 40, None).unwrap().remove(0);
    let mut opt = Optimizer::new(
        OptimizerConfig {
            lr: 0.02,
            ..Default::default()
        },
        &model.store,
    );
    for step in 0..150 {
        train_step(&mut model, &mut opt, &[Some(&batch)], None, &Mode::train(1, step)).unwrap();
    }
    let a = evaluate(&model, &data, 0, 4, 40).unwrap();
    let b = evaluate(&model, &data, 0, 3, 40).unwrap();
    assert_eq!(a, b);
    assert!(a.value >= 0.99, "memorized accuracy {}", a.value);
    assert_eq!(a.support, 8);
}

#[test]
fn empty_aux_split_is_omitted() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let model = model_for(&suite, "A");
    let aux = suite.aux.as_ref().unwrap();
    let none = evaluate_aux(&model, &[], &suite.vocab, &aux.pos, &aux.chunk, 8, 40).unwrap();
    assert!(none.is_none());
    let some = evaluate_aux(&model, &aux.dev, &suite.vocab, &aux.pos, &aux.chunk, 8, 40).unwrap();
    let r = some.unwrap();
    assert!((0.0..=1.0).contains(&r.parse.value));
    let plain = model_for(&suite, "B");
    assert!(evaluate_aux(&plain, &aux.dev, &suite.vocab, &aux.pos, &aux.chunk, 8, 40).unwrap().is_none());
}

#[test]
fn repeats_use_consecutive_seeds_and_average() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let setup = tiny_setup("AE", 2);
    let r = run_experiment(&setup, &suite, 3).unwrap();
    assert_eq!(r.runs.iter().map(|x| x.seed).collect::<Vec<_>>(), vec![3, 4, 5]);
    assert_eq!(r.failed, 0);
    for k in 0..2 {
        let m = r.runs.iter().map(|x| x.test[k].value).sum::<f64>() / 3.0;
        assert!((r.mean_test[k].unwrap() - m).abs() < 1e-12);
    }
    assert!(r.runs[0].aux_test.is_some());
    let one = run_experiment(&setup, &suite, 1).unwrap();
    assert_eq!(one.mean, one.runs[0].mean_test());
    assert_eq!(one.runs[0], r.runs[0]);
}

#[test]
fn identical_setups_give_identical_reports() {
    let suite = tiny_suite(SyntheticTasks::Mixed);
    let setup = tiny_setup("BC", 2);
    let a = run_experiment(&setup, &suite, 1).unwrap();
    let b = run_experiment(&setup, &suite, 1).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.tasks.len(), 4);
    let run = &a.runs[0];
    assert_eq!(run.curves[0].samples.len(), run.epochs);
    let dev_lines = run.events.iter().filter(|l| l.split('\t').nth(2) == Some("dev")).count();
    assert_eq!(dev_lines, run.epochs * 4);
    assert!(run.events.iter().all(|l| l.split('\t').count() == 5));
}

#[test]
fn proportional_schedule_trains() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let mut setup = tiny_setup("D", 2);
    setup.train.schedule = Schedule::Proportional;
    let r = run_experiment(&setup, &suite, 1).unwrap();
    assert!(r.succeeded());
    assert_eq!(r.runs[0].train_loss.len(), 2);
}

#[test]
fn diverged_runs_are_marked_failed() {
    let mut suite = tiny_suite(SyntheticTasks::Classification);
    let shape = [suite.vocab.len(), 6];
    suite.embeddings = Some(Tensor::filled(&shape, f64::INFINITY));
    let r = run_experiment(&tiny_setup("SINGLE", 2), &suite, 2).unwrap();
    assert_eq!(r.failed, 2);
    assert!(!r.succeeded());
    assert_eq!(r.mean, None);
    assert!(matches!(&r.runs[0].status, RunStatus::Failed { reason } if reason.contains("task")));
}

#[test]
fn early_stopping_respects_patience() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let mut setup = tiny_setup("SINGLE", 40);
    setup.train.optimizer.lr = 0.0;
    setup.train.optimizer.patience = 3;
    let r = run_once(&setup, &suite, 0).unwrap();
    // a frozen model never improves after its first epoch
    assert_eq!(r.best_epochs, vec![1, 1]);
    assert_eq!(r.epochs, 4);
}

#[test]
fn config_errors_surface_before_training() {
    let suite = tiny_suite(SyntheticTasks::Classification);
    let mut one = suite.clone();
    one.tasks.truncate(1);
    assert!(matches!(run_experiment(&tiny_setup("E", 1), &one, 1), Err(Error::Config(_))));
    let mut bad = tiny_setup("A", 1);
    bad.model.shared_layers = 2;
    assert!(matches!(run_experiment(&bad, &suite, 1), Err(Error::Config(_))));
    assert!(matches!(run_experiment(&tiny_setup("B", 1), &suite, 0), Err(Error::Config(_))));
}
