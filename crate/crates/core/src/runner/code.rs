use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Flags;

/// Canonical name of a mechanism combination: the active letters in
/// alphabetical order, or `SINGLE` for none.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CombinationCode(Flags);

impl CombinationCode {
    pub fn parse(s: &str) -> Result<Self> {
        Flags::parse(s.trim()).map(Self)
    }

    pub fn flags(self) -> Flags {
        self.0
    }

    pub fn is_single(self) -> bool {
        self.0.is_empty()
    }

    /// Rows of the full ablation grid: the baseline, each mechanism alone,
    /// every pair, then the three larger combinations.
    pub fn full_grid() -> Vec<Self> {
        let letters = ["A", "B", "C", "D", "E"];
        let mut out = vec![Self::default()];
        out.extend(letters.iter().map(|l| Self::parse(l).expect("valid letter")));
        for i in 0..letters.len() {
            for j in i + 1..letters.len() {
                out.push(Self::parse(&format!("{}{}", letters[i], letters[j])).expect("valid pair"));
            }
        }
        out.extend(["ABC", "ABCD", "ABCDE"].iter().map(|c| Self::parse(c).expect("valid code")));
        out
    }

    /// Parses a comma-separated list, dropping repeats.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let mut out: Vec<Self> = Vec::new();
        for part in s.split(',') {
            let c = Self::parse(part)?;
            if !out.contains(&c) {
                out.push(c);
            }
        }
        if out.is_empty() {
            return Err(Error::Usage("empty code list".into()));
        }
        Ok(out)
    }
}

impl From<Flags> for CombinationCode {
    fn from(f: Flags) -> Self {
        Self(f)
    }
}

impl fmt::Display for CombinationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.code())
    }
}

impl FromStr for CombinationCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl TryFrom<String> for CombinationCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<CombinationCode> for String {
    fn from(c: CombinationCode) -> String {
        c.to_string()
    }
}
