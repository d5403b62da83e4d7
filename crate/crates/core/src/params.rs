//! Named parameter storage and the checkpoint container.
//!
//! Every parameter draws its initial values from its own RNG stream, seeded
//! from the model seed and the parameter's path. Adding or removing a module
//! therefore never shifts the initial values of any other parameter.
//!
//! Checkpoint layout (UTF-8 text, `\n` line endings):
//!
//! ```text
//! mtl-checkpoint 1
//! <count>
//! <path> <trainable:0|1> <rank> <dim>...
//! <hex f64 bits> <hex f64 bits> ...
//! ```
//!
//! One header line and one value line per parameter, in path order. Values
//! are written as the 16-digit hex of their IEEE-754 bits, so a reload is
//! bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Uniform on `[-bound, bound]`.
    Uniform(f64),
    Normal { mean: f64, std: f64 },
    Value(Tensor),
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    pub trainable: bool,
    /// Rows kept at their initial value (the embedding padding row).
    pub frozen_rows: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    seed: u64,
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
}

/// Deterministic seed for a named stream.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

pub fn stream_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, name))
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter {name}")));
        }
        let numel: usize = shape.iter().product();
        let mut rng = stream_rng(self.seed, name);
        let value = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Const(c) => Tensor::filled(shape, c),
            Init::Uniform(bound) => {
                let data = (0..numel).map(|_| rng.gen_range(-bound..=bound)).collect();
                Tensor::new(shape.to_vec(), data)?
            }
            Init::Normal { mean, std } => {
                let dist = Normal::new(mean, std)
                    .map_err(|e| Error::Config(format!("normal init for {name}: {e}")))?;
                let data = (0..numel).map(|_| dist.sample(&mut rng)).collect();
                Tensor::new(shape.to_vec(), data)?
            }
            Init::Value(t) => {
                if t.shape() != shape {
                    return Err(Error::Dimension(format!(
                        "initial value {:?} for {name} declared {shape:?}",
                        t.shape()
                    )));
                }
                t
            }
        };
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            grad: vec![0.0; numel],
            value,
            trainable: true,
            frozen_rows: Vec::new(),
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Parameter paths in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds the gradients computed on `graph` into the stored buffers.
    pub fn accumulate_grads(&mut self, graph: &Graph) {
        for (id, var) in graph.bound_params() {
            let p = &mut self.params[id.0];
            if !p.trainable {
                continue;
            }
            if let Some(g) = graph.grad(var) {
                p.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            if !p.frozen_rows.is_empty() {
                let cols = *p.value.shape().last().unwrap_or(&1);
                for &r in &p.frozen_rows {
                    p.grad[r * cols..(r + 1) * cols].iter_mut().for_each(|g| *g = 0.0);
                }
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Snapshot of every value, in id order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            p.value = v.clone();
        }
    }

    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mtl-checkpoint 1");
        let _ = writeln!(out, "{}", self.params.len());
        for id in self.by_name.values() {
            let p = &self.params[id.0];
            let _ = write!(
                out,
                "{} {} {}",
                p.name,
                u8::from(p.trainable),
                p.value.rank()
            );
            for d in p.value.shape() {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            let hex: Vec<String> = p
                .value
                .data()
                .iter()
                .map(|v| format!("{:016x}", v.to_bits()))
                .collect();
            out.push_str(&hex.join(" "));
            out.push('\n');
        }
        out
    }

    /// Loads values into parameters with matching paths and shapes. Every
    /// stored parameter must appear in the checkpoint.
    pub fn load_checkpoint_str(&mut self, text: &str, origin: &str) -> Result<()> {
        let fmt = |line: usize, msg: String| Error::Format {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, "mtl-checkpoint 1")) => {}
            _ => return Err(fmt(1, "missing checkpoint header".into())),
        }
        let (ln, count) = lines.next().ok_or_else(|| fmt(2, "missing count".into()))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| fmt(ln, "bad parameter count".into()))?;
        let mut seen = 0;
        for _ in 0..count {
            let (hl, header) = lines.next().ok_or_else(|| fmt(0, "truncated".into()))?;
            let fields: Vec<&str> = header.split(' ').collect();
            if fields.len() < 3 {
                return Err(fmt(hl, "short parameter header".into()));
            }
            let rank: usize = fields[2].parse().map_err(|_| fmt(hl, "bad rank".into()))?;
            if fields.len() != 3 + rank {
                return Err(fmt(hl, "rank does not match dims".into()));
            }
            let shape = fields[3..]
                .iter()
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| fmt(hl, "bad dim".into()))?;
            let (vl, values) = lines.next().ok_or_else(|| fmt(hl + 1, "missing values".into()))?;
            let data = if values.is_empty() {
                Vec::new()
            } else {
                values
                    .split(' ')
                    .map(|h| u64::from_str_radix(h, 16).map(f64::from_bits))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| fmt(vl, "bad hex value".into()))?
            };
            let tensor = Tensor::new(shape, data).map_err(|e| fmt(vl, e.to_string()))?;
            let id = self
                .id(fields[0])
                .ok_or_else(|| fmt(hl, format!("unknown parameter {}", fields[0])))?;
            let p = &mut self.params[id.0];
            if p.value.shape() != tensor.shape() {
                return Err(fmt(hl, format!("shape mismatch for {}", p.name)));
            }
            p.value = tensor;
            p.trainable = fields[1] == "1";
            seen += 1;
        }
        if seen != self.params.len() {
            return Err(fmt(0, format!("checkpoint holds {seen} of {} parameters", self.params.len())));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.load_checkpoint_str(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_is_independent_of_registration_order() {
        let mut a = ParamStore::new(7);
        a.add("x.w", &[3, 2], Init::Uniform(0.5)).unwrap();
        a.add("y.w", &[2, 2], Init::Uniform(0.5)).unwrap();
        let mut b = ParamStore::new(7);
        b.add("y.w", &[2, 2], Init::Uniform(0.5)).unwrap();
        assert_eq!(a.by_name("y.w").unwrap().value, b.by_name("y.w").unwrap().value);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new(0);
        s.add("w", &[1], Init::Zeros).unwrap();
        assert!(s.add("w", &[1], Init::Zeros).is_err());
    }

    #[test]
    fn checkpoint_rejects_shape_mismatch() {
        let mut s = ParamStore::new(0);
        s.add("w", &[2], Init::Const(1.0)).unwrap();
        let text = s.to_checkpoint_string();
        let mut other = ParamStore::new(0);
        other.add("w", &[3], Init::Zeros).unwrap();
        assert!(other.load_checkpoint_str(&text, "mem").is_err());
    }

    proptest! {
        #[test]
        fn checkpoint_round_trips_bit_exactly(
            vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6),
            seed in any::<u64>(),
        ) {
            let mut s = ParamStore::new(seed);
            s.add("enc.w", &[2, 3], Init::Value(Tensor::new(vec![2, 3], vals.clone()).unwrap())).unwrap();
            s.add("enc.b", &[4], Init::Normal { mean: 0.0, std: 1.0 }).unwrap();
            let text = s.to_checkpoint_string();
            let mut t = ParamStore::new(seed.wrapping_add(1));
            t.add("enc.w", &[2, 3], Init::Zeros).unwrap();
            t.add("enc.b", &[4], Init::Zeros).unwrap();
            t.load_checkpoint_str(&text, "mem").unwrap();
            for (a, b) in s.iter().zip(t.iter()) {
                let bits_a: Vec<u64> = a.value.data().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = b.value.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }
            prop_assert_eq!(t.to_checkpoint_string(), text);
        }
    }
}
