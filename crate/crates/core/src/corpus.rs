//! Dataset schema, JSON-lines loading and word-level IOB tags.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive index pair. Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(span: Span) -> Self {
        [span.start, span.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

/// One IOB tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WordLabel {
    O,
    B,
    I,
}

impl WordLabel {
    pub const COUNT: usize = 3;
    pub const ALL: [WordLabel; 3] = [WordLabel::O, WordLabel::B, WordLabel::I];

    /// Class index used by the classifier: O=0, B=1, I=2.
    pub fn id(self) -> usize {
        match self {
            WordLabel::O => 0,
            WordLabel::B => 1,
            WordLabel::I => 2,
        }
    }

    pub fn from_id(id: usize) -> Option<Self> {
        WordLabel::ALL.get(id).copied()
    }
}

/// A sentence paired with one aspect and that aspect's gold opinion spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceExample {
    pub id: String,
    pub words: Vec<String>,
    #[serde(rename = "aspect")]
    pub aspect_span: Span,
    #[serde(rename = "opinions")]
    pub opinion_spans: Vec<Span>,
}

impl SentenceExample {
    /// Builds an example and checks every invariant.
    pub fn new(
        id: impl Into<String>,
        words: Vec<String>,
        aspect_span: Span,
        opinion_spans: Vec<Span>,
    ) -> Result<Self> {
        let example = SentenceExample {
            id: id.into(),
            words,
            aspect_span,
            opinion_spans,
        };
        example.validate()?;
        Ok(example)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidExample {
            id: self.id.clone(),
            message,
        };
        let n = self.words.len();
        if n == 0 {
            return Err(invalid("sentence has no words".into()));
        }
        if let Some(w) = self
            .words
            .iter()
            .find(|w| w.is_empty() || w.chars().any(char::is_whitespace))
        {
            return Err(invalid(format!("word {w:?} is empty or contains whitespace")));
        }
        let check = |what: &str, span: &Span| {
            if span.start > span.end || span.end >= n {
                Err(invalid(format!("{what} span {span} out of range for {n} words")))
            } else {
                Ok(())
            }
        };
        check("aspect", &self.aspect_span)?;
        for span in &self.opinion_spans {
            check("opinion", span)?;
            if span.overlaps(&self.aspect_span) {
                return Err(invalid(format!(
                    "opinion span {span} overlaps aspect {}",
                    self.aspect_span
                )));
            }
        }
        for pair in self.opinion_spans.windows(2) {
            if pair[1].start <= pair[0].end {
                return Err(invalid(format!(
                    "opinion spans {} and {} overlap or are unsorted",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(())
    }

    pub fn aspect_words(&self) -> &[String] {
        &self.words[self.aspect_span.start..=self.aspect_span.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub examples: Vec<SentenceExample>,
    pub split: Split,
}

impl Dataset {
    pub fn new(examples: Vec<SentenceExample>, split: Split) -> Result<Self> {
        let mut seen = HashSet::new();
        for ex in &examples {
            ex.validate()?;
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
        }
        Ok(Dataset { examples, split })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Writes the dataset in the JSON-lines schema read by [`load_dataset`].
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for ex in &self.examples {
            serde_json::to_writer(&mut out, ex).expect("serializing an example cannot fail");
            out.push(b'\n');
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    words: Vec<String>,
    aspect: [usize; 2],
    opinions: Option<Vec<[usize; 2]>>,
}

fn parse_jsonl(text: &str, split: Split, require_opinions: bool) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let opinions = match raw.opinions {
            Some(o) => o,
            None if require_opinions => {
                return Err(Error::MalformedLine {
                    line: line_no,
                    message: "missing field `opinions`".into(),
                })
            }
            None => Vec::new(),
        };
        let example = SentenceExample::new(
            raw.id,
            raw.words,
            raw.aspect.into(),
            opinions.into_iter().map(Span::from).collect(),
        )?;
        if !seen.insert(example.id.clone()) {
            return Err(Error::DuplicateId(example.id));
        }
        examples.push(example);
    }
    Ok(Dataset { examples, split })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a JSON-lines dataset. Blank lines are ignored.
pub fn load_dataset(path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    parse_jsonl(&read_text(path.as_ref())?, split, true)
}

/// Like [`load_dataset`] but `opinions` may be omitted (treated as empty).
/// Used for prediction inputs.
pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_jsonl(&read_text(path.as_ref())?, Split::Test, false)
}

/// Word-level IOB tags for the example's opinion spans.
pub fn derive_word_labels(example: &SentenceExample) -> Vec<WordLabel> {
    let mut labels = vec![WordLabel::O; example.words.len()];
    for span in &example.opinion_spans {
        labels[span.start] = WordLabel::B;
        for label in &mut labels[span.start + 1..=span.end] {
            *label = WordLabel::I;
        }
    }
    labels
}

fn parse_tagged_column(column: &str) -> Vec<(&str, &str)> {
    column
        .split_whitespace()
        .map(|tok| match tok.rfind('\\') {
            Some(pos) => (&tok[..pos], &tok[pos + 1..]),
            None => (tok, "O"),
        })
        .collect()
}

fn tag_spans(tags: &[(&str, &str)]) -> Vec<Span> {
    let labels: Vec<WordLabel> = tags
        .iter()
        .map(|(_, t)| {
            if t.starts_with('B') {
                WordLabel::B
            } else if t.starts_with('I') {
                WordLabel::I
            } else {
                WordLabel::O
            }
        })
        .collect();
    crate::eval::decode_spans(&labels)
}

/// Converts the tab-separated distribution format into the native schema.
///
/// Each record is `sentence \t target_tags \t opinion_tags`, optionally
/// preceded by an id column. Tag columns hold `word\TAG` tokens. A header
/// line whose columns include `sentence` is skipped. Rows whose target
/// column has several aspect spans produce one example per span.
pub fn convert_legacy_tsv(path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let text = read_text(path.as_ref())?;
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if i == 0 && cols.iter().any(|c| c.trim() == "sentence") {
            continue;
        }
        let (id, sentence, targets, opinions) = match cols.as_slice() {
            [s, t, o] => (format!("L{line_no}"), *s, *t, *o),
            [id, s, t, o] => (id.trim().to_string(), *s, *t, *o),
            _ => {
                return Err(Error::ColumnCount {
                    line: line_no,
                    expected: 3,
                    found: cols.len(),
                })
            }
        };
        let words: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
        let target_tags = parse_tagged_column(targets);
        let opinion_tags = parse_tagged_column(opinions);
        if target_tags.len() != words.len() || opinion_tags.len() != words.len() {
            return Err(Error::MalformedLine {
                line: line_no,
                message: format!(
                    "{} words but {} target tags and {} opinion tags",
                    words.len(),
                    target_tags.len(),
                    opinion_tags.len()
                ),
            });
        }
        let aspects = tag_spans(&target_tags);
        if aspects.is_empty() {
            return Err(Error::MalformedLine {
                line: line_no,
                message: "no aspect tagged".into(),
            });
        }
        let opinion_spans = tag_spans(&opinion_tags);
        for (k, aspect) in aspects.iter().enumerate() {
            let ex_id = if aspects.len() == 1 {
                id.clone()
            } else {
                format!("{id}#{k}")
            };
            examples.push(SentenceExample::new(
                ex_id,
                words.clone(),
                *aspect,
                opinion_spans.clone(),
            )?);
        }
    }
    Dataset::new(examples, split)
}
