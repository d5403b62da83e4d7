use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::TaskKind;

/// Lowercased whitespace tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RawLabel {
    Class(String),
    Score(f64),
}

/// One line of a sentence or sentence-pair file, before id mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawExample {
    pub a: Vec<String>,
    pub b: Option<Vec<String>>,
    pub label: RawLabel,
    /// 1-based source line, 0 when generated in memory.
    #[serde(default)]
    pub line: usize,
}

impl RawExample {
    pub fn single(a: Vec<String>, label: &str) -> Self {
        Self {
            a,
            b: None,
            label: RawLabel::Class(label.to_string()),
            line: 0,
        }
    }
}

/// Sentence with gold POS, chunk and head annotation. Heads are 1-based
/// token positions, 0 for the artificial root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub chunk: Vec<String>,
    pub heads: Vec<usize>,
}

impl TaggedSentence {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        if n == 0 {
            return Err("empty sentence".into());
        }
        if self.pos.len() != n || self.chunk.len() != n || self.heads.len() != n {
            return Err("tag columns not aligned with tokens".into());
        }
        for (i, &h) in self.heads.iter().enumerate() {
            if h > n {
                return Err(format!("head {h} beyond sentence length {n}"));
            }
            if h == i + 1 {
                return Err(format!("token {} is its own head", i + 1));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Score(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    pub a: Vec<usize>,
    pub b: Option<Vec<usize>>,
    pub target: Target,
}

/// Class labels in order of first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub labels: Vec<String>,
}

impl LabelSet {
    pub fn from_examples(examples: &[RawExample]) -> Self {
        let mut labels: Vec<String> = Vec::new();
        for ex in examples {
            if let RawLabel::Class(l) = &ex.label {
                if !labels.contains(l) {
                    labels.push(l.clone());
                }
            }
        }
        Self { labels }
    }

    pub fn from_names(names: &[&str]) -> Self {
        Self {
            labels: names.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Parsed dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: TaskKind,
    pub origin: String,
    pub examples: Vec<RawExample>,
}

impl Dataset {
    pub fn encode(&self, vocab: &Vocab, labels: &LabelSet) -> Result<Vec<EncodedExample>> {
        self.examples
            .iter()
            .map(|ex| {
                let target = match &ex.label {
                    RawLabel::Score(s) => Target::Score(*s),
                    RawLabel::Class(l) => Target::Class(labels.id(l).ok_or_else(|| Error::Label {
                        path: self.origin.clone(),
                        line: ex.line,
                        label: l.clone(),
                    })?),
                };
                Ok(EncodedExample {
                    a: vocab.encode(&ex.a),
                    b: ex.b.as_ref().map(|b| vocab.encode(b)),
                    target,
                })
            })
            .collect()
    }
}

fn format_err(origin: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: origin.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parses TSV text for a sentence-level task kind.
pub fn parse_dataset(text: &str, kind: TaskKind, origin: &str) -> Result<Dataset> {
    let columns = match kind {
        TaskKind::SingleClassification => 2,
        TaskKind::PairClassification | TaskKind::SimilarityRegression => 3,
        TaskKind::Tagging | TaskKind::Parsing => {
            return Err(Error::Config(format!("{kind:?} data uses the CoNLL reader")));
        }
    };
    let mut examples = Vec::new();
    for (i, line) in text.split('\n').enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns {
            return Err(format_err(
                origin,
                lineno,
                format!("expected {columns} tab-separated fields, found {}", fields.len()),
            ));
        }
        let a = tokenize(fields[0]);
        if a.is_empty() {
            return Err(format_err(origin, lineno, "empty sentence"));
        }
        let b = if columns == 3 {
            let b = tokenize(fields[1]);
            if b.is_empty() {
                return Err(format_err(origin, lineno, "empty second sentence"));
            }
            Some(b)
        } else {
            None
        };
        let raw_label = fields[columns - 1].trim();
        let label = if kind == TaskKind::SimilarityRegression {
            let score: f64 = raw_label
                .parse()
                .map_err(|_| format_err(origin, lineno, format!("score {raw_label:?} is not a number")))?;
            if !score.is_finite() {
                return Err(format_err(origin, lineno, "non-finite score"));
            }
            RawLabel::Score(score)
        } else {
            if raw_label.is_empty() {
                return Err(format_err(origin, lineno, "empty label"));
            }
            RawLabel::Class(raw_label.to_string())
        };
        examples.push(RawExample {
            a,
            b,
            label,
            line: lineno,
        });
    }
    Ok(Dataset {
        kind,
        origin: origin.to_string(),
        examples,
    })
}

pub fn load_dataset(path: &Path, kind: TaskKind) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Path {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    parse_dataset(&text, kind, &path.display().to_string())
}

/// Serializes examples in the TSV layout `parse_dataset` reads.
pub fn write_dataset(examples: &[RawExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&ex.a.join(" "));
        out.push('\t');
        if let Some(b) = &ex.b {
            out.push_str(&b.join(" "));
            out.push('\t');
        }
        match &ex.label {
            RawLabel::Class(l) => out.push_str(l),
            RawLabel::Score(s) => out.push_str(&s.to_string()),
        }
        out.push('\n');
    }
    out
}

/// Parses the 4-column `token POS chunk head` format; blank lines separate
/// sentences.
pub fn parse_tagged(text: &str, origin: &str) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    let mut cur = TaggedSentence {
        tokens: vec![],
        pos: vec![],
        chunk: vec![],
        heads: vec![],
    };
    let mut start_line = 1;
    let mut flush = |cur: &mut TaggedSentence, line: usize| -> Result<()> {
        if cur.tokens.is_empty() {
            return Ok(());
        }
        cur.validate().map_err(|m| format_err(origin, line, m))?;
        out.push(std::mem::replace(
            cur,
            TaggedSentence {
                tokens: vec![],
                pos: vec![],
                chunk: vec![],
                heads: vec![],
            },
        ));
        Ok(())
    };
    for (i, line) in text.split('\n').enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            flush(&mut cur, start_line)?;
            start_line = lineno + 1;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(format_err(origin, lineno, format!("expected 4 columns, found {}", fields.len())));
        }
        let head: usize = fields[3]
            .parse()
            .map_err(|_| format_err(origin, lineno, format!("head {:?} is not an index", fields[3])))?;
        cur.tokens.push(fields[0].to_lowercase());
        cur.pos.push(fields[1].to_string());
        cur.chunk.push(fields[2].to_string());
        cur.heads.push(head);
    }
    flush(&mut cur, start_line)?;
    Ok(out)
}

pub fn load_tagged(path: &Path) -> Result<Vec<TaggedSentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Path {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    parse_tagged(&text, &path.display().to_string())
}

pub fn write_tagged(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for i in 0..s.tokens.len() {
            out.push_str(&format!("{} {} {} {}\n", s.tokens[i], s.pos[i], s.chunk[i], s.heads[i]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_line_tsv_keeps_order() {
        let d = parse_dataset("Good film\tpos\nbad plot\tneg\n", TaskKind::SingleClassification, "t").unwrap();
        assert_eq!(d.examples.len(), 2);
        assert_eq!(d.examples[0].a, vec!["good", "film"]);
        assert_eq!(d.examples[1].label, RawLabel::Class("neg".into()));
        assert_eq!(d.examples[1].line, 2);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = parse_dataset("a\tb\nno tab here\n", TaskKind::SingleClassification, "f.tsv").unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
        let err = parse_dataset("a\tb\tx\n", TaskKind::SimilarityRegression, "s.tsv").unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn unknown_label_is_a_label_error() {
        let train = parse_dataset("a\tpos\n", TaskKind::SingleClassification, "train").unwrap();
        let test = parse_dataset("b\tpos\nc\tmeh\n", TaskKind::SingleClassification, "test").unwrap();
        let labels = LabelSet::from_examples(&train.examples);
        let vocab = Vocab::build(train.examples.iter().map(|e| &e.a), 1);
        let err = test.encode(&vocab, &labels).unwrap_err();
        assert!(matches!(err, Error::Label { line: 2, .. }));
    }

    #[test]
    fn conll_heads_are_one_based() {
        let s = parse_tagged("the DT B-NP 2\ncat NN I-NP 0\n\n", "c").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].heads, vec![2, 0]);
        assert!(parse_tagged("cat NN B-NP 1\n", "c").is_err());
        assert!(parse_tagged("cat NN B-NP 3\n", "c").is_err());
        let err = parse_tagged("cat NN B-NP\n", "c").unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z]{1,6}"
    }

    proptest! {
        #[test]
        fn tsv_round_trips(rows in proptest::collection::vec(
            (proptest::collection::vec(word(), 1..5), proptest::collection::vec(word(), 1..5), -10.0f64..10.0), 1..8)
        ) {
            let examples: Vec<RawExample> = rows.iter().enumerate().map(|(i, (a, b, s))| RawExample {
                a: a.clone(), b: Some(b.clone()), label: RawLabel::Score(*s), line: i + 1,
            }).collect();
            let text = write_dataset(&examples);
            let back = parse_dataset(&text, TaskKind::SimilarityRegression, "mem").unwrap();
            prop_assert_eq!(back.examples, examples);
        }

        #[test]
        fn conll_round_trips(sents in proptest::collection::vec(proptest::collection::vec(word(), 1..6), 1..4)) {
            let tagged: Vec<TaggedSentence> = sents.iter().map(|toks| {
                let n = toks.len();
                TaggedSentence {
                    tokens: toks.clone(),
                    pos: vec!["NN".into(); n],
                    chunk: vec!["O".into(); n],
                    heads: (0..n).map(|i| if i == 0 { 0 } else { 1 }).collect(),
                }
            }).collect();
            let back = parse_tagged(&write_tagged(&tagged), "mem").unwrap();
            prop_assert_eq!(back, tagged);
        }
    }
}
