use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, Split};
use crate::error::{Error, Result};
use crate::metrics::{pairwise_bleu, BleuConfig};
use crate::semantic::{rfbrt, SemanticScorer};
use crate::text::order_free_mean;

/// Dataset statistics over reference text (source symbols are not counted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub split: Split,
    pub num_references: usize,
    pub vocab_size: usize,
    pub total_words: usize,
    /// Running reference tokens missing from the training vocabulary.
    pub total_oovs: Option<usize>,
    /// Token types occurring exactly once; reported for the training split.
    pub singletons: Option<usize>,
    pub avg_pwb: Option<f64>,
    pub avg_rfbrt: Option<f64>,
    pub k: Option<usize>,
    pub scorer: Option<String>,
}

/// `k` generated references (indices `1..=k`) per example feed `avg_pwb`
/// (diversity among them) and `avg_rfbrt` (agreement with reference 0);
/// both are per-example values averaged over the corpus.
pub fn compute_stats(
    corpus: &Corpus,
    train_ref: Option<&Corpus>,
    k: Option<usize>,
    scorer: &dyn SemanticScorer,
) -> Result<CorpusStats> {
    if corpus.split() != Split::Train && train_ref.is_none() {
        return Err(Error::MissingTrainReference {
            split: corpus.split().to_string(),
        });
    }

    let mut freq: HashMap<&str, usize> = HashMap::new();
    let mut total_words = 0;
    for ex in corpus.examples() {
        for r in &ex.references {
            total_words += r.len();
            for t in r.tokens() {
                *freq.entry(t.as_str()).or_insert(0) += 1;
            }
        }
    }

    let total_oovs = train_ref.map(|train| {
        freq.iter()
            .filter(|(t, _)| !train.vocab().contains_key(**t))
            .map(|(_, c)| c)
            .sum()
    });
    let singletons = (corpus.split() == Split::Train).then(|| freq.values().filter(|&&c| c == 1).count());

    let (avg_pwb, avg_rfbrt) = match k {
        None => (None, None),
        Some(k) => {
            if k == 0 {
                return Err(Error::config("k: must be at least 1"));
            }
            let bleu = BleuConfig::sentence();
            let mut pwbs = Vec::with_capacity(corpus.len());
            let mut rts = Vec::with_capacity(corpus.len());
            for ex in corpus.examples() {
                if ex.references.len() < k + 1 {
                    return Err(Error::InsufficientReferences {
                        id: ex.id.clone(),
                        have: ex.references.len(),
                        need: k + 1,
                    });
                }
                let generated = &ex.references[1..=k];
                if k >= 2 {
                    pwbs.push(pairwise_bleu(generated, &bleu)?);
                }
                rts.push(rfbrt(&ex.references[0], generated, scorer)?);
            }
            let pwb = (k >= 2).then(|| order_free_mean(pwbs));
            (pwb, Some(order_free_mean(rts)))
        }
    };

    Ok(CorpusStats {
        split: corpus.split(),
        num_references: corpus.total_references(),
        vocab_size: freq.len(),
        total_words,
        total_oovs,
        singletons,
        avg_pwb,
        avg_rfbrt,
        k,
        scorer: k.map(|_| scorer.name().to_owned()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MultiRefExample;
    use crate::semantic::SurrogateScorer;
    use crate::text::Sentence;

    fn corpus(split: Split, refs: &[&[&str]]) -> Corpus {
        let examples = refs
            .iter()
            .enumerate()
            .map(|(i, rs)| MultiRefExample {
                id: format!("e{i}"),
                source: vec!["X".into()],
                references: rs.iter().map(|r| Sentence::new(r)).collect(),
            })
            .collect();
        Corpus::new(split, examples).unwrap()
    }

    #[test]
    fn identical_generated_refs_have_pwb_100() {
        let c = corpus(Split::Train, &[&["gt here", "a b c", "a b c", "a b c"]]);
        let st = compute_stats(&c, None, Some(3), &SurrogateScorer::default()).unwrap();
        assert!((st.avg_pwb.unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn dev_sharing_train_vocab_has_no_oovs() {
        let train = corpus(Split::Train, &[&["a b c", "c d"]]);
        let dev = corpus(Split::Dev, &[&["d c b a"]]);
        let st = compute_stats(&dev, Some(&train), None, &SurrogateScorer::default()).unwrap();
        assert_eq!(st.total_oovs, Some(0));
        assert_eq!(st.singletons, None);
    }

    #[test]
    fn counts_oov_occurrences() {
        let train = corpus(Split::Train, &[&["a b"]]);
        let dev = corpus(Split::Dev, &[&["a z z y"]]);
        let st = compute_stats(&dev, Some(&train), None, &SurrogateScorer::default()).unwrap();
        assert_eq!(st.total_oovs, Some(3));
    }

    #[test]
    fn self_oov_is_zero_and_doubled_tokens_have_no_singletons() {
        let train = corpus(Split::Train, &[&["a b", "b a"], &["c c"]]);
        let st = compute_stats(&train, Some(&train), None, &SurrogateScorer::default()).unwrap();
        assert_eq!(st.total_oovs, Some(0));
        assert_eq!(st.singletons, Some(0));
    }

    #[test]
    fn dev_without_train_reference_errors() {
        let dev = corpus(Split::Dev, &[&["a"]]);
        assert!(matches!(
            compute_stats(&dev, None, None, &SurrogateScorer::default()),
            Err(Error::MissingTrainReference { .. })
        ));
    }

    #[test]
    fn insufficient_references_error() {
        let c = corpus(Split::Train, &[&["a", "b"]]);
        assert!(matches!(
            compute_stats(&c, None, Some(2), &SurrogateScorer::default()),
            Err(Error::InsufficientReferences { need: 3, .. })
        ));
    }
}
