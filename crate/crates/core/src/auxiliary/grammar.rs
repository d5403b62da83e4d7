use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{RawExample, RawLabel, TaggedSentence};
use crate::error::{Error, Result};
use crate::params::{stream_rng, stream_seed};

pub const POS_TAGS: [&str; 8] = ["DET", "ADJ", "NOUN", "COP", "VERB", "NEG", "ADV", "CONJ"];
pub const CHUNK_TAGS: [&str; 9] = [
    "B-NP", "I-NP", "B-VP", "I-VP", "B-ADJP", "I-ADJP", "B-SBAR", "I-SBAR", "O",
];

const DETERMINERS: [&str; 6] = ["the", "a", "this", "that", "every", "my"];
const COPULAS: [&str; 4] = ["is", "was", "seems", "remains"];
const NEGATORS: [&str; 3] = ["not", "never", "hardly"];
const ADVERBS: [&str; 5] = ["very", "really", "quite", "so", "truly"];
const CONJUNCTIONS: [&str; 6] = ["although", "because", "while", "since", "though", "whereas"];

/// How a sentence's class label is read off its derivation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelRule {
    /// Polarity of the main clause predicate after its own negation;
    /// subordinate clauses and noun modifiers are distractors.
    MainClausePolarity,
    /// Whether any clause contains a negator.
    ContainsNegation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    /// Token sequences are assigned to splits by hash bucket, so splits
    /// never share a sentence.
    fn owns(self, tokens: &[String]) -> bool {
        let bucket = stream_seed(0, &tokens.join(" ")) % 10;
        match self {
            Split::Train => bucket < 7,
            Split::Dev => bucket == 7,
            Split::Test => bucket >= 8,
        }
    }
}

/// Word lists of the grammar. Content words are pseudo-words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub positive_adjectives: Vec<String>,
    pub negative_adjectives: Vec<String>,
    pub neutral_adjectives: Vec<String>,
    pub positive_verbs: Vec<String>,
    pub negative_verbs: Vec<String>,
    /// One noun list per domain.
    pub nouns: Vec<Vec<String>>,
}

/// Sizes used to build a [`Lexicon`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconSizes {
    pub domains: usize,
    pub polar_adjectives: usize,
    pub neutral_adjectives: usize,
    pub polar_verbs: usize,
    pub nouns_per_domain: usize,
}

impl Default for LexiconSizes {
    fn default() -> Self {
        Self {
            domains: 6,
            polar_adjectives: 120,
            neutral_adjectives: 40,
            polar_verbs: 50,
            nouns_per_domain: 30,
        }
    }
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st"];
const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
const CODAS: [&str; 5] = ["", "n", "r", "m", "sk"];

fn pseudo_word(rng: &mut ChaCha8Rng, taken: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).expect("nonempty"));
            w.push_str(NUCLEI.choose(rng).expect("nonempty"));
        }
        w.push_str(CODAS.choose(rng).expect("nonempty"));
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

impl Lexicon {
    pub fn generate(seed: u64, sizes: LexiconSizes) -> Self {
        let mut rng = stream_rng(seed, "grammar.lexicon");
        let mut taken: HashSet<String> = DETERMINERS
            .iter()
            .chain(&COPULAS)
            .chain(&NEGATORS)
            .chain(&ADVERBS)
            .chain(&CONJUNCTIONS)
            .map(|s| s.to_string())
            .collect();
        let mut words = |n: usize| (0..n).map(|_| pseudo_word(&mut rng, &mut taken)).collect::<Vec<_>>();
        let positive_adjectives = words(sizes.polar_adjectives);
        let negative_adjectives = words(sizes.polar_adjectives);
        let neutral_adjectives = words(sizes.neutral_adjectives);
        let positive_verbs = words(sizes.polar_verbs);
        let negative_verbs = words(sizes.polar_verbs);
        let nouns = (0..sizes.domains).map(|_| words(sizes.nouns_per_domain)).collect();
        Self {
            positive_adjectives,
            negative_adjectives,
            neutral_adjectives,
            positive_verbs,
            negative_verbs,
            nouns,
        }
    }

    pub fn domains(&self) -> usize {
        self.nouns.len()
    }
}

/// Seeded generative grammar with gold POS, chunk, head and label for every
/// sentence it produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyGrammar {
    pub seed: u64,
    pub lexicon: Lexicon,
    pub label_rule: LabelRule,
    /// Probability of flipping a training class label after derivation.
    /// Dev and test labels stay clean.
    pub label_noise: f64,
    pub subordinate_rate: f64,
    pub modifier_rate: f64,
    pub negation_rate: f64,
    pub adverb_rate: f64,
}

impl ToyGrammar {
    pub fn new(seed: u64) -> Self {
        Self::with_sizes(seed, LexiconSizes::default())
    }

    pub fn with_sizes(seed: u64, sizes: LexiconSizes) -> Self {
        Self {
            seed,
            lexicon: Lexicon::generate(seed, sizes),
            label_rule: LabelRule::MainClausePolarity,
            label_noise: 0.0,
            subordinate_rate: 0.6,
            modifier_rate: 0.5,
            negation_rate: 0.35,
            adverb_rate: 0.3,
        }
    }

    fn check(&self) -> Result<()> {
        let l = &self.lexicon;
        if l.nouns.is_empty()
            || l.nouns.iter().any(Vec::is_empty)
            || l.positive_adjectives.is_empty()
            || l.negative_adjectives.is_empty()
            || l.positive_verbs.is_empty()
            || l.negative_verbs.is_empty()
        {
            return Err(Error::Config("grammar has an empty word class".into()));
        }
        Ok(())
    }

    /// Derives one sentence of a domain.
    pub fn derive(&self, rng: &mut ChaCha8Rng, domain: usize) -> Derivation {
        let mut b = Builder::default();
        let main_first = rng.gen::<f64>() >= 0.5;
        let sub = rng.gen::<f64>() < self.subordinate_rate;
        let (main, sub_head, conj) = if sub && !main_first {
            let conj = b.push(CONJUNCTIONS.choose(rng).expect("nonempty"), "CONJ", "B-SBAR");
            let s = self.clause(&mut b, rng, domain);
            let m = self.clause(&mut b, rng, domain);
            (m, Some(s), Some(conj))
        } else {
            let m = self.clause(&mut b, rng, domain);
            if sub {
                let conj = b.push(CONJUNCTIONS.choose(rng).expect("nonempty"), "CONJ", "B-SBAR");
                let s = self.clause(&mut b, rng, domain);
                (m, Some(s), Some(conj))
            } else {
                (m, None, None)
            }
        };
        b.heads[main.head] = 0;
        if let (Some(s), Some(c)) = (sub_head, conj) {
            b.heads[s.head] = main.head + 1;
            b.heads[c] = s.head + 1;
        }
        let negated = main.negated || sub_head.is_some_and(|s| s.negated);
        Derivation {
            sentence: TaggedSentence {
                tokens: b.tokens,
                pos: b.pos,
                chunk: b.chunk,
                heads: b.heads,
            },
            polarity: main.positive != main.negated,
            has_negation: negated,
            domain,
        }
    }

    fn noun_phrase(&self, b: &mut Builder, rng: &mut ChaCha8Rng, domain: usize) -> usize {
        let l = &self.lexicon;
        let det = b.push(DETERMINERS.choose(rng).expect("nonempty"), "DET", "B-NP");
        let modifier = if rng.gen::<f64>() < self.modifier_rate {
            let pool = match rng.gen_range(0..3) {
                0 => &l.positive_adjectives,
                1 => &l.negative_adjectives,
                _ if !l.neutral_adjectives.is_empty() => &l.neutral_adjectives,
                _ => &l.positive_adjectives,
            };
            Some(b.push(pool.choose(rng).expect("nonempty"), "ADJ", "I-NP"))
        } else {
            None
        };
        let noun = b.push(l.nouns[domain].choose(rng).expect("nonempty"), "NOUN", "I-NP");
        b.heads[det] = noun + 1;
        if let Some(m) = modifier {
            b.heads[m] = noun + 1;
        }
        noun
    }

    fn clause(&self, b: &mut Builder, rng: &mut ChaCha8Rng, domain: usize) -> Clause {
        let l = &self.lexicon;
        let positive = rng.gen::<f64>() < 0.5;
        let negated = rng.gen::<f64>() < self.negation_rate;
        let subject = self.noun_phrase(b, rng, domain);
        if rng.gen::<f64>() < 0.5 {
            let cop = b.push(COPULAS.choose(rng).expect("nonempty"), "COP", "B-VP");
            let neg = negated.then(|| b.push(NEGATORS.choose(rng).expect("nonempty"), "NEG", "I-VP"));
            let adv = (rng.gen::<f64>() < self.adverb_rate)
                .then(|| b.push(ADVERBS.choose(rng).expect("nonempty"), "ADV", "B-ADJP"));
            let pool = if positive { &l.positive_adjectives } else { &l.negative_adjectives };
            let chunk = if adv.is_some() { "I-ADJP" } else { "B-ADJP" };
            let adj = b.push(pool.choose(rng).expect("nonempty"), "ADJ", chunk);
            for dep in [Some(subject), Some(cop), neg, adv].into_iter().flatten() {
                b.heads[dep] = adj + 1;
            }
            Clause {
                head: adj,
                positive,
                negated,
            }
        } else {
            let neg = negated.then(|| b.push(NEGATORS.choose(rng).expect("nonempty"), "NEG", "B-VP"));
            let pool = if positive { &l.positive_verbs } else { &l.negative_verbs };
            let chunk = if neg.is_some() { "I-VP" } else { "B-VP" };
            let verb = b.push(pool.choose(rng).expect("nonempty"), "VERB", chunk);
            let object = self.noun_phrase(b, rng, domain);
            for dep in [Some(subject), neg, Some(object)].into_iter().flatten() {
                b.heads[dep] = verb + 1;
            }
            Clause {
                head: verb,
                positive,
                negated,
            }
        }
    }

    /// Class label of a derivation under the grammar's rule, before noise.
    pub fn label(&self, d: &Derivation) -> bool {
        match self.label_rule {
            LabelRule::MainClausePolarity => d.polarity,
            LabelRule::ContainsNegation => d.has_negation,
        }
    }
}

#[derive(Default)]
struct Builder {
    tokens: Vec<String>,
    pos: Vec<String>,
    chunk: Vec<String>,
    heads: Vec<usize>,
}

impl Builder {
    fn push(&mut self, word: &str, pos: &str, chunk: &str) -> usize {
        self.tokens.push(word.to_string());
        self.pos.push(pos.to_string());
        self.chunk.push(chunk.to_string());
        self.heads.push(0);
        self.tokens.len() - 1
    }
}

#[derive(Clone, Copy)]
struct Clause {
    head: usize,
    positive: bool,
    negated: bool,
}

/// A generated sentence with its gold annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivation {
    pub sentence: TaggedSentence,
    /// Main-clause polarity after negation.
    pub polarity: bool,
    pub has_negation: bool,
    pub domain: usize,
}

/// Generated data for one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub split: Split,
    pub tagged: Vec<TaggedSentence>,
    /// One single-sentence classification set per domain.
    pub single: Vec<Vec<RawExample>>,
    /// Entailment pairs labelled `entailment`, `neutral` or `contradiction`.
    pub pairs: Vec<RawExample>,
    /// Pairs scored in `[0, 5]` by edit cost.
    pub similarity: Vec<RawExample>,
}

fn class_label(positive: bool) -> &'static str {
    if positive {
        "pos"
    } else {
        "neg"
    }
}

/// Draws derivations from `stream` until `n` land in `split`.
fn draw(grammar: &ToyGrammar, rng: &mut ChaCha8Rng, split: Split, domain: usize, n: usize) -> Vec<Derivation> {
    let mut out = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    let mut attempts = 0usize;
    while out.len() < n && attempts < n * 200 + 1000 {
        attempts += 1;
        let d = grammar.derive(rng, domain);
        if split.owns(&d.sentence.tokens) && seen.insert(d.sentence.tokens.clone()) {
            out.push(d);
        }
    }
    out
}

/// Edit applied to a premise to make a hypothesis, with its label and cost.
fn edit_pair(grammar: &ToyGrammar, rng: &mut ChaCha8Rng, d: &Derivation) -> (Vec<String>, &'static str, f64) {
    let s = &d.sentence;
    let l = &grammar.lexicon;
    let mut tokens = s.tokens.clone();
    let root = s.heads.iter().position(|&h| h == 0).expect("sentence has a root");
    let choice = rng.gen_range(0..4);
    let mut cost = 0.0;
    let label;
    match choice {
        0 => {
            let keep: Vec<bool> = (0..tokens.len()).map(|i| in_main_clause(s, i, root)).collect();
            tokens = tokens.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(t, _)| t).collect();
            cost += if keep.iter().all(|&k| k) { 0.0 } else { 1.0 };
            label = "entailment";
        }
        1 => {
            let pos = &s.pos[root];
            let polar_swap = |w: &str| -> Option<String> {
                let (from, to) = if pos == "ADJ" {
                    (&l.positive_adjectives, &l.negative_adjectives)
                } else {
                    (&l.positive_verbs, &l.negative_verbs)
                };
                if let Some(i) = from.iter().position(|x| x == w) {
                    return Some(to[i % to.len()].clone());
                }
                let i = to.iter().position(|x| x == w)?;
                Some(from[i % from.len()].clone())
            };
            tokens[root] = polar_swap(&tokens[root]).unwrap_or_else(|| tokens[root].clone());
            cost += 3.0;
            label = "contradiction";
        }
        2 => {
            let nouns: Vec<usize> = (0..tokens.len()).filter(|&i| s.pos[i] == "NOUN").collect();
            let i = *nouns.choose(rng).expect("every clause has a noun");
            let pool = &l.nouns[d.domain];
            let mut replacement = pool.choose(rng).expect("nonempty").clone();
            if pool.len() > 1 {
                while replacement == tokens[i] {
                    replacement = pool.choose(rng).expect("nonempty").clone();
                }
            }
            tokens[i] = replacement;
            cost += 2.0;
            label = "neutral";
        }
        _ => {
            let neg = (0..tokens.len()).find(|&i| s.pos[i] == "NEG" && s.heads[i] == root + 1);
            match neg {
                Some(i) => {
                    tokens.remove(i);
                }
                None => {
                    let at = (0..tokens.len())
                        .find(|&i| s.heads[i] == root + 1 && s.pos[i] == "COP")
                        .map_or(root, |c| c + 1);
                    tokens.insert(at, NEGATORS[0].to_string());
                }
            }
            cost += 2.5;
            label = "contradiction";
        }
    }
    (tokens, label, cost)
}

fn in_main_clause(s: &TaggedSentence, i: usize, root: usize) -> bool {
    let mut j = i;
    loop {
        if j == root {
            return true;
        }
        let h = s.heads[j];
        if h == 0 {
            return false;
        }
        // a predicate attached to the main head starts the subordinate clause
        if h - 1 == root && matches!(s.pos[j].as_str(), "ADJ" | "VERB") {
            return false;
        }
        j = h - 1;
    }
}

/// Generates `n` items of every kind for a split: tagged sentences, one
/// classification set per domain, entailment pairs and similarity pairs.
pub fn generate_corpus(grammar: &ToyGrammar, n: usize, split: Split) -> Result<Corpus> {
    grammar.check()?;
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    let domains = grammar.lexicon.domains();
    let key = |what: &str| format!("grammar/{}/{what}", split.name());
    let mut rng = stream_rng(grammar.seed, &key("tagged"));
    let tagged = (0..domains)
        .flat_map(|d| draw(grammar, &mut rng, split, d, n.div_ceil(domains)))
        .take(n)
        .map(|d| d.sentence)
        .collect();
    let single = (0..domains)
        .map(|d| {
            let mut rng = stream_rng(grammar.seed, &key(&format!("single/{d}")));
            let mut noise = stream_rng(grammar.seed, &key(&format!("noise/{d}")));
            draw(grammar, &mut rng, split, d, n)
                .into_iter()
                .map(|der| {
                    let mut y = grammar.label(&der);
                    if split == Split::Train && noise.gen::<f64>() < grammar.label_noise {
                        y = !y;
                    }
                    RawExample {
                        a: der.sentence.tokens,
                        b: None,
                        label: RawLabel::Class(class_label(y).into()),
                        line: 0,
                    }
                })
                .collect()
        })
        .collect();
    let mut pair_rng = stream_rng(grammar.seed, &key("pairs"));
    let mut pairs = Vec::with_capacity(n);
    let mut similarity = Vec::with_capacity(n);
    for i in 0..n {
        let d = i % domains;
        for (out, scored) in [(&mut pairs, false), (&mut similarity, true)] {
            let der = draw(grammar, &mut pair_rng, split, d, 1).pop().expect("draw succeeds");
            let (hyp, label, cost) = edit_pair(grammar, &mut pair_rng, &der);
            let label = if scored {
                RawLabel::Score((5.0 - cost).clamp(0.0, 5.0))
            } else {
                RawLabel::Class(label.into())
            };
            out.push(RawExample {
                a: der.sentence.tokens,
                b: Some(hyp),
                label,
                line: 0,
            });
        }
    }
    Ok(Corpus {
        split,
        tagged,
        single,
        pairs,
        similarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn derivations_are_valid_trees() {
        let g = ToyGrammar::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let domain = rng.gen_range(0..6);
            let d = g.derive(&mut rng, domain);
            let s = &d.sentence;
            s.validate().unwrap();
            assert_eq!(s.heads.iter().filter(|&&h| h == 0).count(), 1);
            for i in 0..s.tokens.len() {
                let mut j = i;
                for _ in 0..=s.tokens.len() {
                    if s.heads[j] == 0 {
                        break;
                    }
                    j = s.heads[j] - 1;
                }
                assert_eq!(s.heads[j], 0, "cycle in {:?}", s);
            }
            assert!(s.pos.iter().all(|p| POS_TAGS.contains(&p.as_str())));
            assert!(s.chunk.iter().all(|c| CHUNK_TAGS.contains(&c.as_str())));
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let g = ToyGrammar::new(5);
        let a = generate_corpus(&g, 20, Split::Train).unwrap();
        let b = generate_corpus(&ToyGrammar::new(5), 20, Split::Train).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.single.len(), 6);
        assert!(a.single.iter().all(|s| s.len() == 20));
        assert_eq!(a.tagged.len(), 20);
        assert_eq!(a.pairs.len(), 20);
    }

    #[test]
    fn splits_do_not_overlap() {
        let g = ToyGrammar::new(7);
        let train = generate_corpus(&g, 200, Split::Train).unwrap();
        let test = generate_corpus(&g, 60, Split::Test).unwrap();
        let seen: HashSet<&Vec<String>> = train.single.iter().flatten().map(|e| &e.a).collect();
        let overlap = test.single.iter().flatten().filter(|e| seen.contains(&e.a)).count();
        assert_eq!(overlap, 0);
    }

    #[test]
    fn noise_flips_training_labels_only() {
        let clean = ToyGrammar::new(6);
        let mut noisy = clean.clone();
        noisy.label_noise = 0.5;
        let flipped = |split| {
            let a = generate_corpus(&clean, 100, split).unwrap();
            let b = generate_corpus(&noisy, 100, split).unwrap();
            a.single.iter().flatten().zip(b.single.iter().flatten()).filter(|(x, y)| x.label != y.label).count()
        };
        assert!(flipped(Split::Train) > 200);
        assert_eq!(flipped(Split::Dev), 0);
        assert_eq!(flipped(Split::Test), 0);
    }

    #[test]
    fn empty_grammar_is_config_error() {
        let mut g = ToyGrammar::new(1);
        g.lexicon.nouns.clear();
        assert!(matches!(generate_corpus(&g, 5, Split::Train), Err(Error::Config(_))));
    }

    #[test]
    fn labels_follow_main_clause() {
        let g = ToyGrammar::new(9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut both = [false, false];
        for _ in 0..200 {
            let d = g.derive(&mut rng, 0);
            both[usize::from(d.polarity)] = true;
            let root = d.sentence.heads.iter().position(|&h| h == 0).unwrap();
            let w = &d.sentence.tokens[root];
            let positive_word = g.lexicon.positive_adjectives.contains(w) || g.lexicon.positive_verbs.contains(w);
            let negated = (0..d.sentence.tokens.len())
                .any(|i| d.sentence.pos[i] == "NEG" && d.sentence.heads[i] == root + 1);
            assert_eq!(d.polarity, positive_word != negated);
        }
        assert_eq!(both, [true, true]);
    }

    #[test]
    fn negation_probe_is_linearly_perfect() {
        let mut g = ToyGrammar::new(11);
        g.label_rule = LabelRule::ContainsNegation;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<(Vec<f64>, bool)> = (0..400)
            .map(|_| {
                let d = g.derive(&mut rng, 1);
                let feats = POS_TAGS
                    .iter()
                    .map(|t| d.sentence.pos.iter().filter(|p| p == t).count() as f64)
                    .chain(std::iter::once(1.0))
                    .collect();
                (feats, g.label(&d))
            })
            .collect();
        let mut w = vec![0.0; POS_TAGS.len() + 1];
        for _ in 0..50 {
            for (x, y) in &data {
                let s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
                let target = if *y { 1.0 } else { -1.0 };
                if s * target <= 0.0 {
                    w.iter_mut().zip(x).for_each(|(a, b)| *a += target * b);
                }
            }
        }
        let correct = data
            .iter()
            .filter(|(x, y)| (w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() > 0.0) == *y)
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn pair_labels_and_scores() {
        let g = ToyGrammar::new(2);
        let c = generate_corpus(&g, 60, Split::Dev).unwrap();
        let labels: HashSet<String> = c
            .pairs
            .iter()
            .map(|e| match &e.label {
                RawLabel::Class(l) => l.clone(),
                RawLabel::Score(_) => unreachable!(),
            })
            .collect();
        assert_eq!(labels.len(), 3);
        for e in &c.similarity {
            let RawLabel::Score(s) = e.label else { panic!() };
            assert!((0.0..=5.0).contains(&s));
        }
    }
}
