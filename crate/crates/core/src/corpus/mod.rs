//! Multi-reference corpora: loading, the single-reference expansion used for
//! stage-1 training, per-epoch reference sampling, and statistics.

mod stats;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Sentence;

pub use stats::{compute_stats, CorpusStats};
pub use synth::{synth_fixture, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("split: unknown value `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRefExample {
    pub id: String,
    pub source: Vec<String>,
    /// Index 0 is the original ground truth; the rest are generated references.
    pub references: Vec<Sentence>,
}

impl MultiRefExample {
    fn validate(&self) -> Result<()> {
        if self.source.is_empty() {
            return Err(Error::EmptySequence {
                id: self.id.clone(),
                what: "source".into(),
            });
        }
        if self.references.is_empty() {
            return Err(Error::EmptyReferences { id: self.id.clone() });
        }
        if let Some(i) = self.references.iter().position(Sentence::is_empty) {
            return Err(Error::EmptySequence {
                id: self.id.clone(),
                what: format!("reference {i}"),
            });
        }
        Ok(())
    }
}

/// One line of a corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub source: Vec<String>,
    pub references: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    split: Split,
    examples: Vec<MultiRefExample>,
    vocab: BTreeMap<String, u32>,
}

impl Corpus {
    pub fn new(split: Split, examples: Vec<MultiRefExample>) -> Result<Self> {
        let mut ids = HashSet::new();
        for ex in &examples {
            ex.validate()?;
            if !ids.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
        }
        let mut tokens: Vec<&str> = examples
            .iter()
            .flat_map(|ex| ex.references.iter())
            .flat_map(|r| r.tokens().iter().map(String::as_str))
            .collect();
        tokens.sort_unstable();
        tokens.dedup();
        let vocab = tokens
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t.to_owned(), i as u32))
            .collect();
        Ok(Corpus { split, examples, vocab })
    }

    pub fn load(path: impl AsRef<Path>, split: Split) -> Result<Self> {
        Self::load_with(path, split, false)
    }

    pub fn load_with(path: impl AsRef<Path>, split: Split, lowercase: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), split, lowercase)
    }

    pub fn from_reader(reader: impl BufRead, split: Split, lowercase: bool) -> Result<Self> {
        let mut examples = Vec::new();
        let mut ids = HashSet::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            if !ids.insert(record.id.clone()) {
                return Err(Error::DuplicateId(record.id));
            }
            let example = MultiRefExample {
                id: record.id,
                source: record.source,
                references: record
                    .references
                    .iter()
                    .map(|r| Sentence::normalized(r, lowercase))
                    .collect(),
            };
            example.validate()?;
            examples.push(example);
        }
        Self::new(split, examples)
    }

    pub fn write_jsonl(&self, mut writer: impl Write) -> Result<()> {
        for ex in &self.examples {
            let record = CorpusRecord {
                id: ex.id.clone(),
                source: ex.source.clone(),
                references: ex.references.iter().map(|r| r.raw().to_owned()).collect(),
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        self.write_jsonl(&mut writer)?;
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn examples(&self) -> &[MultiRefExample] {
        &self.examples
    }

    pub fn vocab(&self) -> &BTreeMap<String, u32> {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn total_references(&self) -> usize {
        self.examples.iter().map(|e| e.references.len()).sum()
    }

    /// The same corpus keeping only each example's original ground truth.
    pub fn single_reference(&self) -> Corpus {
        let examples = self
            .examples
            .iter()
            .map(|e| MultiRefExample {
                id: e.id.clone(),
                source: e.source.clone(),
                references: vec![e.references[0].clone()],
            })
            .collect();
        Corpus::new(self.split, examples).expect("subset of a valid corpus is valid")
    }

    /// References of every example, in corpus order.
    pub fn refsets(&self) -> Vec<Vec<Sentence>> {
        self.examples.iter().map(|e| e.references.clone()).collect()
    }
}

/// A (source, single reference) training unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ExpandedPair {
    pub example_id: String,
    pub ref_index: usize,
    /// Position of the example in its corpus.
    #[serde(skip)]
    pub example_index: usize,
}

/// Duplicates every source once per reference, optionally shuffled.
pub fn expand_multiref(corpus: &Corpus, shuffle_seed: Option<u64>) -> Vec<ExpandedPair> {
    let mut pairs: Vec<ExpandedPair> = corpus
        .examples
        .iter()
        .enumerate()
        .flat_map(|(i, ex)| {
            (0..ex.references.len()).map(move |k| ExpandedPair {
                example_id: ex.id.clone(),
                ref_index: k,
                example_index: i,
            })
        })
        .collect();
    if let Some(seed) = shuffle_seed {
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    pairs
}

/// One uniformly drawn reference per example, fresh for every epoch.
pub fn sample_one_view(corpus: &Corpus, epoch: u64, seed: u64) -> Vec<ExpandedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    corpus
        .examples
        .iter()
        .enumerate()
        .map(|(i, ex)| ExpandedPair {
            example_id: ex.id.clone(),
            ref_index: rng.gen_range(0..ex.references.len()),
            example_index: i,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_with(k: usize, n: usize) -> Corpus {
        let examples = (0..n)
            .map(|i| MultiRefExample {
                id: format!("ex{i}"),
                source: vec!["RAIN".into()],
                references: (0..k).map(|j| Sentence::new(&format!("ref {i} {j}"))).collect(),
            })
            .collect();
        Corpus::new(Split::Train, examples).unwrap()
    }

    #[test]
    fn loads_two_line_fixture() {
        let text = r#"{"id": "a", "source": ["RAIN"], "references": ["it rains", "rain falls"]}
{"id": "b", "source": ["SUN", "NORTH"], "references": ["the sun shines"]}
"#;
        let corpus = Corpus::from_reader(text.as_bytes(), Split::Dev, false).unwrap();
        assert_eq!(corpus.len(), 2);
        let vocab: Vec<&str> = corpus.vocab().keys().map(String::as_str).collect();
        assert_eq!(vocab, ["falls", "it", "rain", "rains", "shines", "sun", "the"]);
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let text = r#"{"id": "a", "source": ["X"], "references": ["x"]}
{"id": "a", "source": ["Y"], "references": ["y"]}"#;
        let err = Corpus::from_reader(text.as_bytes(), Split::Train, false).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn empty_references_are_rejected() {
        let text = r#"{"id": "a", "source": ["X"], "references": []}"#;
        let err = Corpus::from_reader(text.as_bytes(), Split::Train, false).unwrap_err();
        assert!(matches!(err, Error::EmptyReferences { .. }));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "{\"id\": \"a\", \"source\": [\"X\"], \"references\": [\"x\"]}\nnot json\n";
        let err = Corpus::from_reader(text.as_bytes(), Split::Train, false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn whitespace_only_reference_is_rejected() {
        let text = r#"{"id": "a", "source": ["X"], "references": ["x", "   "]}"#;
        let err = Corpus::from_reader(text.as_bytes(), Split::Train, false).unwrap_err();
        assert!(matches!(err, Error::EmptySequence { .. }));
    }

    #[test]
    fn expansion_cardinality() {
        let corpus = corpus_with(5, 3);
        let pairs = expand_multiref(&corpus, None);
        assert_eq!(pairs.len(), 15);
        for ex in corpus.examples() {
            assert_eq!(pairs.iter().filter(|p| p.example_id == ex.id).count(), 5);
        }
    }

    #[test]
    fn shuffled_expansion_is_same_multiset() {
        let corpus = corpus_with(5, 3);
        let mut a = expand_multiref(&corpus, Some(1));
        let mut b = expand_multiref(&corpus, Some(2));
        assert_ne!(a, b);
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(a, expand_multiref(&corpus, None));
    }

    #[test]
    fn single_reference_expansion_is_bijection() {
        let corpus = corpus_with(1, 4);
        let pairs = expand_multiref(&corpus, Some(9));
        let ids: HashSet<_> = pairs.iter().map(|p| p.example_id.clone()).collect();
        assert_eq!(pairs.len(), 4);
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn sample_one_single_reference_is_always_zero() {
        let corpus = corpus_with(1, 10);
        for epoch in 0..5 {
            assert!(sample_one_view(&corpus, epoch, 3).iter().all(|p| p.ref_index == 0));
        }
    }

    #[test]
    fn sample_one_is_reproducible() {
        let corpus = corpus_with(5, 100);
        let e0 = sample_one_view(&corpus, 0, 42);
        let e1 = sample_one_view(&corpus, 1, 42);
        assert_eq!(e0, sample_one_view(&corpus, 0, 42));
        assert_eq!(e1, sample_one_view(&corpus, 1, 42));
        assert_ne!(e0, e1);
        assert_eq!(e0.len(), 100);
    }

    #[test]
    fn sample_one_is_uniform() {
        let corpus = corpus_with(5, 1);
        let epochs = 10_000;
        let mut counts = [0usize; 5];
        for epoch in 0..epochs {
            counts[sample_one_view(&corpus, epoch, 11)[0].ref_index] += 1;
        }
        for c in counts {
            let freq = c as f64 / epochs as f64;
            assert!((freq - 0.2).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let corpus = corpus_with(2, 3);
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let back = Corpus::from_reader(buf.as_slice(), Split::Train, false).unwrap();
        assert_eq!(back.examples(), corpus.examples());
    }
}
