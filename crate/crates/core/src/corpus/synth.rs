use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, MultiRefExample, Split};
use crate::error::{Error, Result};
use crate::lexicon::{entries_of, realize_glosses, SlotKind, LEXICON, SLOT_ORDER};
use crate::seed::rng_for;
use crate::text::Sentence;

/// Parameters of the synthetic weather-report corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_examples: usize,
    pub refs_per_example: usize,
    /// Gloss symbols used per slot category (time, place, weather, intensity).
    pub slot_vocab: usize,
    /// Probability that an example carries the optional intensity slot.
    pub intensity_prob: f64,
    pub split: Split,
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_examples: 200,
            refs_per_example: 3,
            slot_vocab: 8,
            intensity_prob: 0.5,
            split: Split::Train,
            id_prefix: "syn".into(),
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn max_slot_vocab() -> usize {
        SLOT_ORDER.iter().map(|&k| entries_of(k).count()).min().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_examples == 0 {
            problems.push("num_examples: must be at least 1".to_owned());
        }
        if self.refs_per_example == 0 {
            problems.push("refs_per_example: must be at least 1".to_owned());
        }
        let max = Self::max_slot_vocab();
        if self.slot_vocab < 4 || self.slot_vocab > max {
            problems.push(format!("slot_vocab: must be in 4..={max}"));
        }
        if !(0.0..=1.0).contains(&self.intensity_prob) {
            problems.push("intensity_prob: must be in [0, 1]".to_owned());
        }
        // Smallest example (no intensity slot) has 3 slots with 3 phrases each
        // and two clause orders.
        let capacity = 27 * 2;
        if self.refs_per_example > capacity {
            problems.push(format!("refs_per_example: exceeds paraphrase capacity ({capacity})"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

/// Deterministic synthetic corpus: each source is a gloss sequence, reference 0
/// is its canonical realization and the others are distinct paraphrases
/// (phrase synonyms plus moving the time adverbial to the end).
pub fn synth_fixture(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, "synth");
    let pools: Vec<Vec<usize>> = SLOT_ORDER
        .iter()
        .map(|&kind| entries_of(kind).map(|(i, _)| i).take(cfg.slot_vocab).collect())
        .collect();

    let mut examples = Vec::with_capacity(cfg.num_examples);
    for n in 0..cfg.num_examples {
        let mut entries = Vec::with_capacity(4);
        for (slot, kind) in SLOT_ORDER.iter().enumerate() {
            if *kind == SlotKind::Intensity && !rng.gen_bool(cfg.intensity_prob) {
                continue;
            }
            entries.push(*pools[slot].choose(&mut rng).expect("pools are non-empty"));
        }
        let canonical = realize_glosses(&entries, &vec![0; entries.len()], false);

        let mut variants = paraphrase_space(&entries);
        variants.retain(|s| s.tokens() != canonical.tokens());
        variants.shuffle(&mut rng);
        if variants.len() + 1 < cfg.refs_per_example {
            return Err(Error::config(format!(
                "refs_per_example: example {n} admits only {} distinct references",
                variants.len() + 1
            )));
        }
        let mut references = vec![canonical];
        references.extend(variants.into_iter().take(cfg.refs_per_example - 1));

        examples.push(MultiRefExample {
            id: format!("{}-{n:05}", cfg.id_prefix),
            source: entries.iter().map(|&e| LEXICON[e].gloss.to_owned()).collect(),
            references,
        });
    }
    Corpus::new(cfg.split, examples)
}

fn paraphrase_space(entries: &[usize]) -> Vec<Sentence> {
    let sizes: Vec<usize> = entries.iter().map(|&e| LEXICON[e].phrases.len()).collect();
    let total: usize = sizes.iter().product();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for swapped in [false, true] {
        for mut code in 0..total {
            let mut alts = vec![0; sizes.len()];
            for (slot, size) in sizes.iter().enumerate().rev() {
                alts[slot] = code % size;
                code /= size;
            }
            let s = realize_glosses(entries, &alts, swapped);
            if seen.insert(s.tokens().to_vec()) {
                out.push(s);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, k: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            num_examples: n,
            refs_per_example: k,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn regenerates_identically() {
        let a = synth_fixture(&cfg(200, 3, 7)).unwrap();
        let b = synth_fixture(&cfg(200, 3, 7)).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_jsonl(&mut x).unwrap();
        b.write_jsonl(&mut y).unwrap();
        assert_eq!(x, y);
        let c = synth_fixture(&cfg(200, 3, 8)).unwrap();
        assert_ne!(a.examples(), c.examples());
    }

    #[test]
    fn single_reference_fixture() {
        let corpus = synth_fixture(&cfg(20, 1, 1)).unwrap();
        assert!(corpus.examples().iter().all(|e| e.references.len() == 1));
    }

    #[test]
    fn references_are_pairwise_distinct() {
        let corpus = synth_fixture(&cfg(50, 5, 3)).unwrap();
        for ex in corpus.examples() {
            let set: HashSet<_> = ex.references.iter().map(|r| r.tokens().to_vec()).collect();
            assert_eq!(set.len(), 5, "{}", ex.id);
        }
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        assert!(matches!(synth_fixture(&cfg(5, 100, 1)), Err(Error::InvalidConfig(_))));
        assert!(matches!(synth_fixture(&cfg(0, 1, 1)), Err(Error::InvalidConfig(_))));
        let small = SynthConfig {
            slot_vocab: 3,
            ..cfg(5, 1, 1)
        };
        assert!(matches!(synth_fixture(&small), Err(Error::InvalidConfig(_))));
    }
}
