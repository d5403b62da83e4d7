use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Token ↔ id map. Ids 0 and 1 are padding and unknown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<String>", from = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub const PAD_TOKEN: &'static str = "<pad>";
    pub const UNK_TOKEN: &'static str = "<unk>";

    /// Keeps tokens seen at least `min_count` times, most frequent first,
    /// ties in lexicographic order.
    pub fn build<'a, I, S>(sentences: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a String>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for sent in sentences {
            for tok in sent {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens = vec![Self::PAD_TOKEN.to_string(), Self::UNK_TOKEN.to_string()];
        tokens.extend(
            kept.into_iter()
                .map(|(t, _)| t.to_string())
                .filter(|t| t != Self::PAD_TOKEN && t != Self::UNK_TOKEN),
        );
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(text: &[&str]) -> Vec<Vec<String>> {
        text.iter()
            .map(|s| s.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn high_min_count_leaves_reserved_only() {
        let c = corpus(&["a b", "a"]);
        let v = Vocab::build(&c, 3);
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("a"), UNK);
    }

    #[test]
    fn doubling_the_corpus_keeps_ids() {
        let c = corpus(&["x y y z", "z z w"]);
        let mut doubled = c.clone();
        doubled.extend(c.clone());
        assert_eq!(Vocab::build(&c, 1), Vocab::build(&doubled, 1));
    }

    #[test]
    fn ties_break_lexicographically() {
        // counts: b=2, a=2, d=1, c=1 → order a, b, c, d
        let c = corpus(&["b a d", "c a b"]);
        let v = Vocab::build(&c, 1);
        let order: Vec<&str> = v.tokens()[2..].iter().map(String::as_str).collect();
        let mut expect: Vec<(&str, i32)> = vec![("b", 2), ("a", 2), ("d", 1), ("c", 1)];
        expect.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(y.0)));
        assert_eq!(order, expect.iter().map(|e| e.0).collect::<Vec<_>>());
        assert_eq!(v.id("a"), 2);
    }
}
