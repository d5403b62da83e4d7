use std::ops::Range;

use rand::Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::data::{Batch, TagBatch, Target, PAD};
use crate::error::{contract_err, Error, Result};
use crate::mechanisms::{
    adversarial_loss, compose_losses, elh_losses, oc_penalty, Discriminator, ElhHeads, GateLevel,
    GateParams, JointLabelSpace, LossBundle,
};
use crate::model::encoder::take_rows;
use crate::model::{multitask_loss, pair_merge, pool, Flags, ModelConfig, PrivateEncoder, TaskKind, TaskSpec};
use crate::nn::{Activation, BiLstm, EmbeddingTable, Mlp, Seq};
use crate::params::{stream_rng, ParamStore};

/// Training or evaluation pass. Dropout masks are drawn from streams keyed
/// by `(seed, step, site)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    pub training: bool,
    pub seed: u64,
    pub step: u64,
}

impl Mode {
    pub fn eval() -> Self {
        Self {
            training: false,
            seed: 0,
            step: 0,
        }
    }

    pub fn train(seed: u64, step: u64) -> Self {
        Self {
            training: true,
            seed,
            step,
        }
    }
}

/// Everything one primary task owns.
#[derive(Clone, Debug)]
pub struct TaskModule {
    pub private: PrivateEncoder,
    pub features: Option<BiLstm>,
    /// Own softmax head (sigmoid unit for regression).
    pub head: Mlp,
    pub gate: Option<GateParams>,
    /// Projection of the merged pair vector into the joint label space input.
    pub joint_proj: Option<Mlp>,
    pub joint_slot: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputKind {
    Logits,
    Joint(usize),
    Regression,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Class(usize),
    Score(f64),
}

/// Per-task results of a forward pass.
#[derive(Clone, Debug)]
pub struct TaskForward {
    pub task: usize,
    /// Logits, joint logits or `[0, 1]` regression outputs.
    pub output: Var,
    pub kind: OutputKind,
    /// Unweighted task loss.
    pub loss: Var,
    /// One pooled vector batch per input view.
    pub pooled: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub tasks: Vec<TaskForward>,
    pub bundle: LossBundle,
    pub total: Var,
}

#[derive(Clone, Copy, Debug)]
enum Owner {
    Task(usize),
    Aux,
}

#[derive(Clone, Debug)]
struct Block {
    owner: Owner,
    view: usize,
    rows: Range<usize>,
}

/// The assembled network and its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub tasks: Vec<TaskSpec>,
    pub store: ParamStore,
    pub embedding: EmbeddingTable,
    pub shared: Vec<BiLstm>,
    pub modules: Vec<TaskModule>,
    pub joint: Option<JointLabelSpace>,
    pub discriminator: Option<Discriminator>,
    pub elh: Option<ElhHeads>,
    active: Flags,
}

/// Builds the network a configuration describes.
pub fn assemble(config: &ModelConfig, tasks: &[TaskSpec]) -> Result<Model> {
    config.validate(tasks)?;
    let f = config.flags;
    let (h, e) = (config.hidden, config.embed_dim);
    let state = 2 * h;
    let mut store = ParamStore::new(config.seed);
    let embedding = EmbeddingTable::new(&mut store, "embedding", config.vocab_size, e)?;
    let mut shared = Vec::new();
    if config.shared_present() {
        for n in 0..config.shared_layers {
            shared.push(BiLstm::new(&mut store, &format!("shared.{n}"), e + n * state, h)?);
        }
    }
    let joint_sizes: Vec<usize> = tasks
        .iter()
        .filter(|t| t.kind.is_classification())
        .map(|t| t.num_labels)
        .collect();
    let joint = if f.label_embed && !joint_sizes.is_empty() {
        Some(JointLabelSpace::new(&mut store, 2 * state, &joint_sizes)?)
    } else {
        None
    };
    let mut modules = Vec::new();
    let mut slot = 0;
    for t in tasks {
        let prefix = format!("task.{}", t.name);
        let private = if t.kind.is_pair() {
            PrivateEncoder::new_pair(&mut store, &prefix, e, h)?
        } else {
            PrivateEncoder::new_single(&mut store, &prefix, e, h)?
        };
        let features = if config.feature_extractor_present() {
            let width = state + shared.len() * state;
            Some(BiLstm::new(&mut store, &format!("{prefix}.features"), width, h)?)
        } else {
            None
        };
        let pooled = 2 * state;
        let head_in = if t.kind.is_pair() { 4 * pooled } else { pooled };
        let head = if t.kind == TaskKind::SimilarityRegression {
            Mlp::new(&mut store, &format!("{prefix}.head"), &[head_in, 1], &[Activation::Sigmoid])?
        } else {
            Mlp::new(&mut store, &format!("{prefix}.head"), &[head_in, t.num_labels], &[Activation::Linear])?
        };
        let gate = if f.gate {
            Some(GateParams::new(&mut store, &format!("{prefix}.gate"), state, pooled)?)
        } else {
            None
        };
        let (joint_slot, joint_proj) = if joint.is_some() && t.kind.is_classification() {
            slot += 1;
            let proj = if t.kind.is_pair() {
                Some(Mlp::new(
                    &mut store,
                    &format!("{prefix}.joint_proj"),
                    &[head_in, pooled],
                    &[Activation::Tanh],
                )?)
            } else {
                None
            };
            (Some(slot - 1), proj)
        } else {
            (None, None)
        };
        modules.push(TaskModule {
            private,
            features,
            head,
            gate,
            joint_proj,
            joint_slot,
        });
    }
    let discriminator = if f.adversarial {
        Some(Discriminator::new(&mut store, state, tasks.len())?)
    } else {
        None
    };
    let elh = if f.elh {
        Some(ElhHeads::new(
            &mut store,
            state,
            config.pos_tags,
            config.chunk_tags,
            config.parse_dep_dim,
            config.parse_hidden_dim,
        )?)
    } else {
        None
    };
    Ok(Model {
        config: config.clone(),
        tasks: tasks.to_vec(),
        store,
        embedding,
        shared,
        modules,
        joint,
        discriminator,
        elh,
        active: f,
    })
}

impl Model {
    pub fn code(&self) -> String {
        self.config.flags.code()
    }

    pub fn active(&self) -> Flags {
        self.active
    }

    /// Restricts which built mechanisms take part in forward passes.
    pub fn set_active(&mut self, flags: Flags) -> Result<()> {
        if !self.config.flags.contains(flags) {
            return Err(Error::Config(format!(
                "cannot activate {} on a model built with {}",
                flags.code(),
                self.config.flags.code()
            )));
        }
        self.active = flags;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn embed(&self, g: &mut Graph, ids: &[Vec<usize>], lengths: &[usize]) -> Result<Seq> {
        self.embedding.lookup_batch(g, &self.store, ids, lengths)
    }

    /// Stacked shared BiLSTMs; layer `n` reads the embeddings concatenated
    /// with every lower layer's output.
    pub fn shared_encode(&self, g: &mut Graph, x: &Seq) -> Result<Vec<Seq>> {
        if self.shared.is_empty() {
            return contract_err("model has no shared encoder");
        }
        let mut layers: Vec<Seq> = Vec::with_capacity(self.shared.len());
        for lstm in &self.shared {
            let input = if layers.is_empty() {
                x.clone()
            } else {
                let mut parts = vec![x];
                parts.extend(layers.iter());
                Seq::concat(g, &parts)?
            };
            layers.push(lstm.forward(g, &self.store, &input)?);
        }
        Ok(layers)
    }

    pub fn private_encode(&self, g: &mut Graph, task: usize, views: &[Seq]) -> Result<Vec<Seq>> {
        self.modules[task].private.encode(g, &self.store, views)
    }

    /// Task feature extractor over `[p; s¹; …; s^M]`, or `p` alone without
    /// a shared part. Identity when the model has no feature extractor.
    pub fn task_feature_encode(&self, g: &mut Graph, task: usize, p: &Seq, shared: Option<&[Seq]>) -> Result<Seq> {
        let Some(fe) = &self.modules[task].features else {
            return Ok(p.clone());
        };
        let input = match shared {
            Some(layers) if !layers.is_empty() => {
                let mut parts = vec![p];
                parts.extend(layers.iter());
                Seq::concat(g, &parts)?
            }
            _ => p.clone(),
        };
        fe.forward(g, &self.store, &input)
    }

    /// Head input for a task from its pooled view vectors.
    fn head_input(&self, g: &mut Graph, task: usize, pooled: &[Var]) -> Result<Var> {
        if self.tasks[task].kind.is_pair() {
            if pooled.len() != 2 {
                return contract_err("pair task needs two pooled vectors");
            }
            pair_merge(g, pooled[0], pooled[1])
        } else {
            Ok(pooled[0])
        }
    }

    /// Raw output of a task from its pooled vectors.
    fn task_logits(&self, g: &mut Graph, task: usize, pooled: &[Var]) -> Result<(Var, OutputKind)> {
        let m = &self.modules[task];
        let x = self.head_input(g, task, pooled)?;
        if let (true, Some(joint), Some(slot)) = (self.active.label_embed, &self.joint, m.joint_slot) {
            let x = match &m.joint_proj {
                Some(p) => p.forward(g, &self.store, x)?,
                None => x,
            };
            return Ok((joint.logits(g, &self.store, x)?, OutputKind::Joint(slot)));
        }
        let out = m.head.forward(g, &self.store, x)?;
        if self.tasks[task].kind == TaskKind::SimilarityRegression {
            Ok((out, OutputKind::Regression))
        } else {
            Ok((out, OutputKind::Logits))
        }
    }

    /// Label distribution of a task (a `[0, 1]` score for regression).
    pub fn task_output(&self, g: &mut Graph, task: usize, pooled: &[Var]) -> Result<Var> {
        let (out, kind) = self.task_logits(g, task, pooled)?;
        match kind {
            OutputKind::Regression => Ok(out),
            _ => g.softmax(out),
        }
    }

    fn task_loss(&self, g: &mut Graph, task: usize, out: Var, kind: OutputKind, targets: &[Target]) -> Result<Var> {
        let spec = &self.tasks[task];
        let n = targets.len() as f64;
        match kind {
            OutputKind::Regression => {
                let y = targets
                    .iter()
                    .map(|t| match t {
                        Target::Score(s) => Ok(spec.normalize_score(*s)),
                        Target::Class(_) => contract_err("class target for a regression task"),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let y = g.constant(Tensor::new(vec![targets.len(), 1], y)?);
                let d = g.sub(out, y)?;
                let sq = g.mul(d, d)?;
                let s = g.sum_all(sq)?;
                g.scale(s, 1.0 / n)
            }
            OutputKind::Logits | OutputKind::Joint(_) => {
                let labels = targets
                    .iter()
                    .map(|t| match t {
                        Target::Class(c) => Ok(*c),
                        Target::Score(_) => contract_err("score target for a classification task"),
                    })
                    .collect::<Result<Vec<_>>>()?;
                if let OutputKind::Joint(slot) = kind {
                    let joint = self.joint.as_ref().expect("joint output implies a joint space");
                    let t = labels
                        .iter()
                        .map(|&l| joint.target(slot, l).map(Some))
                        .collect::<Result<Vec<_>>>()?;
                    g.cross_entropy(out, &t, None, 1.0 / n)
                } else {
                    let t: Vec<Option<usize>> = labels.into_iter().map(Some).collect();
                    g.cross_entropy(out, &t, None, 1.0 / n)
                }
            }
        }
    }

    /// Decoded predictions of a forward pass, scores on the raw scale.
    pub fn predictions(&self, g: &Graph, tf: &TaskForward) -> Vec<Prediction> {
        let v = g.value(tf.output);
        match tf.kind {
            OutputKind::Regression => v
                .data()
                .iter()
                .map(|&u| Prediction::Score(self.tasks[tf.task].denormalize_score(u)))
                .collect(),
            OutputKind::Joint(slot) => self
                .joint
                .as_ref()
                .expect("joint output implies a joint space")
                .predict(v.data(), slot)
                .into_iter()
                .map(Prediction::Class)
                .collect(),
            OutputKind::Logits => {
                let cols = v.shape()[1];
                v.data()
                    .chunks(cols)
                    .map(|row| {
                        let mut best = 0;
                        for (i, &x) in row.iter().enumerate() {
                            if x > row[best] {
                                best = i;
                            }
                        }
                        Prediction::Class(best)
                    })
                    .collect()
            }
        }
    }

    fn dropout_blocks(&self, g: &mut Graph, seq: &Seq, blocks: &[Block], site: &str, mode: &Mode) -> Result<Seq> {
        let rate = self.config.dropout;
        if !mode.training || rate == 0.0 {
            return Ok(seq.clone());
        }
        let width = seq.width(g);
        let rows = seq.batch();
        let keep = 1.0 / (1.0 - rate);
        let mut masks = vec![vec![0.0; rows * width]; seq.max_len()];
        for b in blocks {
            let mut rng = stream_rng(mode.seed, &format!("dropout/{}/{site}/{}", mode.step, self.block_key(b)));
            for mask in masks.iter_mut() {
                for v in &mut mask[b.rows.start * width..b.rows.end * width] {
                    *v = if rng.gen::<f64>() < rate { 0.0 } else { keep };
                }
            }
        }
        let steps = seq
            .steps
            .iter()
            .zip(masks)
            .map(|(&s, m)| {
                let m = g.constant(Tensor::new(vec![rows, width], m)?);
                g.mul(s, m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(seq.with_steps(steps))
    }

    fn block_key(&self, b: &Block) -> String {
        match b.owner {
            Owner::Task(t) => format!("{}/{}", self.tasks[t].name, b.view),
            Owner::Aux => "aux".into(),
        }
    }

    fn dropout_rows(&self, g: &mut Graph, x: Var, key: &str, mode: &Mode) -> Result<Var> {
        let rate = self.config.dropout;
        if !mode.training || rate == 0.0 {
            return Ok(x);
        }
        let shape = g.shape(x).to_vec();
        let keep = 1.0 / (1.0 - rate);
        let mut rng = stream_rng(mode.seed, &format!("dropout/{}/pool/{key}", mode.step));
        let mask = (0..shape.iter().product::<usize>())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let m = g.constant(Tensor::new(shape, mask)?);
        g.mul(x, m)
    }

    /// Full forward pass over one batch per task (`None` skips a task) and
    /// an optional auxiliary batch.
    pub fn forward(
        &self,
        g: &mut Graph,
        batches: &[Option<&Batch>],
        aux: Option<&TagBatch>,
        mode: &Mode,
    ) -> Result<ForwardOutput> {
        if batches.len() != self.tasks.len() {
            return contract_err(format!("{} batches for {} tasks", batches.len(), self.tasks.len()));
        }
        let act = self.active;
        let store = &self.store;
        let present: Vec<usize> = (0..self.tasks.len())
            .filter(|&k| batches[k].is_some_and(|b| !b.is_empty()))
            .collect();
        if present.is_empty() {
            return contract_err("forward pass without any task batch");
        }
        for &k in &present {
            let b = batches[k].expect("present");
            if self.tasks[k].kind.is_pair() != b.ids_b.is_some() {
                return contract_err(format!("task {} got the wrong number of sentences", self.tasks[k].name));
            }
        }
        let use_aux = act.elh && self.elh.is_some() && (aux.is_some() || !mode.training);
        if act.elh && mode.training && aux.is_none() && self.config.aux != crate::mechanisms::AuxSelection::NONE {
            return Err(Error::Config("hierarchy enabled but no auxiliary batch".into()));
        }

        // Union of every sentence in the step: single-sentence tasks, then
        // first and second sentences of pair tasks, then auxiliary ones.
        let mut blocks: Vec<Block> = Vec::new();
        let mut ids: Vec<Vec<usize>> = Vec::new();
        let mut lengths: Vec<usize> = Vec::new();
        let mut push = |owner, view, rows_ids: &[Vec<usize>], lens: &[usize], blocks: &mut Vec<Block>| {
            let start = lengths.len();
            for (r, &l) in rows_ids.iter().zip(lens) {
                ids.push(r[..l].to_vec());
                lengths.push(l);
            }
            blocks.push(Block {
                owner,
                view,
                rows: start..lengths.len(),
            });
        };
        let singles: Vec<usize> = present.iter().copied().filter(|&k| !self.tasks[k].kind.is_pair()).collect();
        let pairs: Vec<usize> = present.iter().copied().filter(|&k| self.tasks[k].kind.is_pair()).collect();
        for &k in &singles {
            let b = batches[k].expect("present");
            push(Owner::Task(k), 0, &b.ids_a, &b.lengths_a, &mut blocks);
        }
        for view in 0..2 {
            for &k in &pairs {
                let b = batches[k].expect("present");
                let (i, l) = if view == 0 {
                    (&b.ids_a, &b.lengths_a)
                } else {
                    (b.ids_b.as_ref().expect("pair"), b.lengths_b.as_ref().expect("pair"))
                };
                push(Owner::Task(k), view, i, l, &mut blocks);
            }
        }
        if let (true, Some(a)) = (use_aux, aux) {
            push(Owner::Aux, 0, &a.ids, &a.lengths, &mut blocks);
        }
        if lengths.contains(&0) {
            return contract_err("empty sentence in batch");
        }
        let width = lengths.iter().copied().max().unwrap_or(0);
        let padded: Vec<Vec<usize>> = ids
            .into_iter()
            .map(|mut v| {
                v.resize(width, PAD);
                v
            })
            .collect();
        let emb = self.embed(g, &padded, &lengths)?;
        let emb = self.dropout_blocks(g, &emb, &blocks, "embedding", mode)?;
        let shared = if self.shared.is_empty() {
            Vec::new()
        } else {
            self.shared_encode(g, &emb)?
        };

        let block_of = |k: usize, view: usize| -> &Block {
            blocks
                .iter()
                .find(|b| matches!(b.owner, Owner::Task(t) if t == k) && b.view == view)
                .expect("task block")
        };
        // Rows a task's encoders run over: its own, or with gates every
        // present task of the same arity.
        let group_rows = |k: usize, view: usize| -> Range<usize> {
            let pair = self.tasks[k].kind.is_pair();
            let members = if pair { &pairs } else { &singles };
            if act.gate {
                let first = block_of(members[0], view).rows.start;
                let last = block_of(*members.last().expect("nonempty"), view).rows.end;
                first..last
            } else {
                block_of(k, view).rows.clone()
            }
        };

        // Private and task-feature encodings per task over its rows.
        struct Enc {
            rows: Vec<Range<usize>>,
            private: Vec<Seq>,
            features: Vec<Seq>,
        }
        let mut encs: Vec<Option<Enc>> = Vec::new();
        encs.resize_with(self.tasks.len(), || None);
        for k in 0..self.tasks.len() {
            let pair = self.tasks[k].kind.is_pair();
            let members = if pair { &pairs } else { &singles };
            let needed = if act.gate { !members.is_empty() } else { present.contains(&k) };
            if !needed {
                continue;
            }
            let arity = if pair { 2 } else { 1 };
            let anchor = if present.contains(&k) { k } else { members[0] };
            let rows: Vec<Range<usize>> = (0..arity).map(|v| group_rows(anchor, v)).collect();
            let views = rows
                .iter()
                .map(|r| take_rows(g, &emb, r.start, r.len()))
                .collect::<Result<Vec<_>>>()?;
            let private = self.private_encode(g, k, &views)?;
            let mut features = Vec::with_capacity(arity);
            for (v, r) in rows.iter().enumerate() {
                let layers = shared
                    .iter()
                    .map(|s| take_rows(g, s, r.start, r.len()))
                    .collect::<Result<Vec<_>>>()?;
                let sh = if layers.is_empty() { None } else { Some(layers.as_slice()) };
                features.push(self.task_feature_encode(g, k, &private[v], sh)?);
            }
            encs[k] = Some(Enc {
                rows,
                private,
                features,
            });
        }

        // Gate donations, computed once per donor over its rows.
        struct Donation {
            steps: Vec<Seq>,
            pooled: Vec<Var>,
        }
        let mut donations: Vec<Option<Donation>> = Vec::new();
        donations.resize_with(self.tasks.len(), || None);
        if act.gate {
            for k in 0..self.tasks.len() {
                let (Some(enc), Some(gate)) = (&encs[k], &self.modules[k].gate) else {
                    continue;
                };
                let mut steps = Vec::new();
                let mut pooled = Vec::new();
                for f in &enc.features {
                    let d = f
                        .steps
                        .iter()
                        .map(|&s| gate.donation(g, store, s, GateLevel::Features))
                        .collect::<Result<Vec<_>>>()?;
                    steps.push(f.with_steps(d));
                    let v = pool(g, f)?;
                    pooled.push(gate.donation(g, store, v, GateLevel::Pooled)?);
                }
                donations[k] = Some(Donation { steps, pooled });
            }
        }

        let mut task_out = Vec::new();
        let mut losses = Vec::new();
        let mut weights = Vec::new();
        let mut oc_terms = Vec::new();
        let mut adv_terms = Vec::new();
        for &k in &present {
            let batch = batches[k].expect("present");
            let enc = encs[k].as_ref().expect("encoded");
            let arity = enc.rows.len();
            let donors: Vec<usize> = if act.gate {
                let pair = self.tasks[k].kind.is_pair();
                (0..self.tasks.len())
                    .filter(|&n| n != k && self.tasks[n].kind.is_pair() == pair && donations[n].is_some())
                    .collect()
            } else {
                Vec::new()
            };
            let mut pooled = Vec::with_capacity(arity);
            let mut own_private = Vec::with_capacity(arity);
            for v in 0..arity {
                let block = block_of(k, v).rows.clone();
                let off = block.start - enc.rows[v].start;
                let n = block.len();
                let own = take_rows(g, &enc.features[v], off, n)?;
                own_private.push(take_rows(g, &enc.private[v], off, n)?);
                let merged = if donors.is_empty() {
                    own
                } else {
                    let mut steps = own.steps.clone();
                    for &d in &donors {
                        let don = donations[d].as_ref().expect("donor");
                        let dv = take_rows(g, &don.steps[v], off, n)?;
                        for (s, &x) in steps.iter_mut().zip(&dv.steps) {
                            *s = g.add(*s, x)?;
                        }
                    }
                    own.with_steps(steps)
                };
                let mut vec = pool(g, &merged)?;
                for &d in &donors {
                    let don = donations[d].as_ref().expect("donor");
                    let dv = g.slice(don.pooled[v], 0, off, n)?;
                    vec = g.add(vec, dv)?;
                }
                let key = format!("{}/{v}", self.tasks[k].name);
                pooled.push(self.dropout_rows(g, vec, &key, mode)?);
            }
            let (output, kind) = self.task_logits(g, k, &pooled)?;
            let loss = self.task_loss(g, k, output, kind, &batch.targets)?;
            losses.push(loss);
            weights.push(self.tasks[k].loss_weight);

            // a zero-weight task contributes no loss at all
            let weighted = self.tasks[k].loss_weight > 0.0;
            if act.oc && weighted && !shared.is_empty() {
                let bsz = batch.len();
                let mut pairs_sp = Vec::new();
                for v in 0..arity {
                    let block = block_of(k, v).rows.clone();
                    let layers = shared
                        .iter()
                        .map(|s| take_rows(g, s, block.start, block.len()))
                        .collect::<Result<Vec<_>>>()?;
                    for r in 0..bsz {
                        let p = own_private[v].example(g, r)?;
                        for s in &layers {
                            pairs_sp.push((s.example(g, r)?, p));
                        }
                    }
                }
                oc_terms.push(oc_penalty(g, &pairs_sp, self.config.lambda_oc / bsz as f64)?);
            }
            if let (true, true, Some(disc)) = (act.adversarial, weighted, &self.discriminator) {
                let top = shared.last().expect("adversarial training uses the shared encoder");
                let mut per_view = Vec::new();
                for v in 0..arity {
                    let block = block_of(k, v).rows.clone();
                    let s = take_rows(g, top, block.start, block.len())?;
                    per_view.push(adversarial_loss(g, store, disc, &s, k, self.config.lambda_adv)?);
                }
                let mut l = per_view[0];
                for &x in &per_view[1..] {
                    l = g.add(l, x)?;
                }
                adv_terms.push(g.scale(l, 1.0 / arity as f64)?);
            }
            task_out.push(TaskForward {
                task: k,
                output,
                kind,
                loss,
                pooled,
            });
        }

        let task_total = multitask_loss(g, &losses, &weights)?;
        let mut bundle = LossBundle::new(act, task_total);
        if use_aux {
            let heads = self.elh.as_ref().expect("elh heads");
            let layers = match blocks.iter().find(|b| matches!(b.owner, Owner::Aux)) {
                Some(b) => Some(
                    shared
                        .iter()
                        .map(|s| take_rows(g, s, b.rows.start, b.rows.len()))
                        .collect::<Result<Vec<_>>>()?,
                ),
                None => None,
            };
            let l = match &layers {
                Some(layers) => elh_losses(g, store, heads, layers, aux, self.config.aux, mode.training)?,
                None => {
                    let dummy = vec![emb.clone(), emb.clone(), emb.clone()];
                    elh_losses(g, store, heads, &dummy, None, self.config.aux, mode.training)?
                }
            };
            bundle.pos = l.pos;
            bundle.chunk = l.chunk;
            bundle.parse = l.parse;
        }
        if act.oc && !oc_terms.is_empty() {
            bundle.oc = Some(sum(g, &oc_terms)?);
        }
        if act.adversarial && !adv_terms.is_empty() {
            bundle.adversarial = Some(sum(g, &adv_terms)?);
        }
        let total = compose_losses(g, &bundle)?;
        Ok(ForwardOutput {
            tasks: task_out,
            bundle,
            total,
        })
    }
}

fn sum(g: &mut Graph, xs: &[Var]) -> Result<Var> {
    let mut t = xs[0];
    for &x in &xs[1..] {
        t = g.add(t, x)?;
    }
    Ok(t)
}
