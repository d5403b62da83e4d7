use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::AuxSelection;
use crate::model::TaskSpec;

/// Mechanism switches, lettered A to E.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flags {
    /// A: auxiliary POS, chunking and parsing on the shared layers.
    pub elh: bool,
    /// B: gated feature exchange between tasks.
    pub gate: bool,
    /// C: one softmax over the joint label space.
    pub label_embed: bool,
    /// D: orthogonality penalty between shared and private features.
    pub oc: bool,
    /// E: adversarial task discriminator on the shared encoder.
    pub adversarial: bool,
}

impl Flags {
    pub const LETTERS: &'static str = "ABCDE";

    /// Parses a combination code such as `"CBA"`; `""` and `"SINGLE"` are
    /// the empty set.
    pub fn parse(code: &str) -> Result<Self> {
        let mut f = Flags::default();
        if code.eq_ignore_ascii_case("single") {
            return Ok(f);
        }
        for ch in code.chars() {
            match ch.to_ascii_uppercase() {
                'A' => f.elh = true,
                'B' => f.gate = true,
                'C' => f.label_embed = true,
                'D' => f.oc = true,
                'E' => f.adversarial = true,
                other => {
                    return Err(Error::Usage(format!(
                        "unknown mechanism letter {other:?}; valid letters are A, B, C, D, E or SINGLE"
                    )))
                }
            }
        }
        Ok(f)
    }

    pub fn bits(&self) -> [bool; 5] {
        [self.elh, self.gate, self.label_embed, self.oc, self.adversarial]
    }

    pub fn from_bits(b: [bool; 5]) -> Self {
        Self {
            elh: b[0],
            gate: b[1],
            label_embed: b[2],
            oc: b[3],
            adversarial: b[4],
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.bits().contains(&true)
    }

    /// Canonical code, letters in alphabetical order.
    pub fn code(&self) -> String {
        if self.is_empty() {
            return "SINGLE".into();
        }
        Self::LETTERS
            .chars()
            .zip(self.bits())
            .filter_map(|(c, on)| on.then_some(c))
            .collect()
    }

    pub fn contains(&self, other: Flags) -> bool {
        self.bits().iter().zip(other.bits()).all(|(&a, b)| a || !b)
    }

    pub fn without(&self, other: Flags) -> Flags {
        let mut b = self.bits();
        for (x, y) in b.iter_mut().zip(other.bits()) {
            *x = *x && !y;
        }
        Flags::from_bits(b)
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub flags: Flags,
    /// Keep the shared encoder even with no mechanism that needs it.
    pub hard_sharing: bool,
    pub shared_layers: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    pub lambda_oc: f64,
    pub lambda_adv: f64,
    pub seed: u64,
    pub vocab_size: usize,
    pub aux: AuxSelection,
    pub pos_tags: usize,
    pub chunk_tags: usize,
    pub parse_dep_dim: usize,
    pub parse_hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            flags: Flags::default(),
            hard_sharing: false,
            shared_layers: 1,
            hidden: 16,
            embed_dim: 32,
            dropout: 0.5,
            lambda_oc: 0.01,
            lambda_adv: 0.05,
            seed: 1,
            vocab_size: 2,
            aux: AuxSelection::ALL,
            pos_tags: 0,
            chunk_tags: 0,
            parse_dep_dim: 50,
            parse_hidden_dim: 100,
        }
    }
}

impl ModelConfig {
    /// Defaults for a combination code: three shared layers with the
    /// hierarchy, one otherwise.
    pub fn for_flags(flags: Flags) -> Self {
        Self {
            flags,
            shared_layers: if flags.elh { 3 } else { 1 },
            ..Self::default()
        }
    }

    pub fn shared_present(&self) -> bool {
        let f = self.flags;
        self.hard_sharing || f.elh || f.label_embed || f.oc || f.adversarial
    }

    /// The task feature extractor sits between the private encoder and
    /// pooling in every multi-task configuration.
    pub fn feature_extractor_present(&self) -> bool {
        self.hard_sharing || !self.flags.is_empty()
    }

    pub fn validate(&self, tasks: &[TaskSpec]) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if tasks.is_empty() {
            return cfg("no tasks".into());
        }
        for (i, t) in tasks.iter().enumerate() {
            t.validate()?;
            if tasks[..i].iter().any(|o| o.name == t.name) {
                return cfg(format!("duplicate task name {:?}", t.name));
            }
        }
        if self.hidden == 0 || self.embed_dim == 0 {
            return cfg("hidden and embedding sizes must be positive".into());
        }
        if self.vocab_size < 2 {
            return cfg("vocabulary must hold the reserved ids".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return cfg(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lambda_oc >= 0.0 && self.lambda_adv >= 0.0) {
            return cfg("mechanism weights must be ≥ 0".into());
        }
        if self.shared_present() && self.shared_layers == 0 {
            return cfg("shared encoder needs at least one layer".into());
        }
        if self.flags.elh {
            if self.shared_layers != 3 {
                return cfg(format!(
                    "linguistic hierarchy needs exactly 3 shared layers, got {}",
                    self.shared_layers
                ));
            }
            if self.pos_tags == 0 || self.chunk_tags == 0 {
                return cfg("linguistic hierarchy needs POS and chunk inventories".into());
            }
        }
        if self.flags.adversarial && tasks.len() < 2 {
            return cfg("adversarial training needs at least 2 tasks".into());
        }
        Ok(())
    }
}
