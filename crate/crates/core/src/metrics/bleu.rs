use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{order_free_mean, Sentence};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuMode {
    Corpus,
    Sentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// `(clipped + 1) / (total + 1)` for orders two and up; unigrams unsmoothed.
    AddOneHighOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub mode: BleuMode,
    pub smoothing: Smoothing,
}

impl BleuConfig {
    pub fn corpus() -> Self {
        BleuConfig {
            max_n: MAX_ORDER,
            mode: BleuMode::Corpus,
            smoothing: Smoothing::None,
        }
    }

    pub fn sentence() -> Self {
        BleuConfig {
            max_n: MAX_ORDER,
            mode: BleuMode::Sentence,
            smoothing: Smoothing::AddOneHighOrder,
        }
    }

    fn check(&self) -> Result<()> {
        if (1..=MAX_ORDER).contains(&self.max_n) {
            Ok(())
        } else {
            Err(Error::config(format!(
                "max_n: must be in 1..={MAX_ORDER}, got {}",
                self.max_n
            )))
        }
    }
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self::corpus()
    }
}

/// N-gram occurrence counts of one token sequence, orders `1..=max_n`.
#[derive(Debug, Clone)]
pub struct NGramProfile<'a> {
    pub counts: HashMap<&'a [String], usize>,
    pub length: usize,
}

impl<'a> NGramProfile<'a> {
    pub fn new(tokens: &'a [String], max_n: usize) -> Self {
        let mut counts = HashMap::new();
        for n in 1..=max_n {
            for gram in tokens.windows(n) {
                *counts.entry(gram).or_insert(0) += 1;
            }
        }
        NGramProfile {
            counts,
            length: tokens.len(),
        }
    }
}

/// Sufficient statistics of BLEU for one or more hypotheses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    /// Clipped n-gram matches against several references (clip = max count
    /// over references) and the closest reference length, ties to the shorter.
    pub fn of(hyp: &Sentence, refs: &[Sentence], max_n: usize) -> Self {
        let hyp_profile = NGramProfile::new(hyp.tokens(), max_n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in refs {
            for (gram, count) in NGramProfile::new(r.tokens(), max_n).counts {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        let mut stats = BleuStats {
            hyp_len: hyp.len(),
            ref_len: closest_ref_len(hyp.len(), refs),
            ..BleuStats::default()
        };
        for (gram, count) in &hyp_profile.counts {
            let n = gram.len();
            stats.matches[n - 1] += (*count).min(max_ref.get(gram).copied().unwrap_or(0));
        }
        for n in 1..=max_n {
            stats.totals[n - 1] = hyp.len().saturating_sub(n - 1);
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Modified precision of order `n` (1-based) under `smoothing`.
    pub fn precision(&self, n: usize, smoothing: Smoothing) -> f64 {
        let (m, t) = (self.matches[n - 1] as f64, self.totals[n - 1] as f64);
        match smoothing {
            Smoothing::AddOneHighOrder if n >= 2 => (m + 1.0) / (t + 1.0),
            _ if t == 0.0 => 0.0,
            _ => m / t,
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        }
    }

    /// BLEU in `[0, 100]`.
    pub fn score(&self, max_n: usize, smoothing: Smoothing) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 1..=max_n {
            let p = self.precision(n, smoothing);
            if p <= 0.0 {
                return 0.0;
            }
            log_sum += p.ln() / max_n as f64;
        }
        self.brevity_penalty() * log_sum.exp() * 100.0
    }
}

fn closest_ref_len(hyp_len: usize, refs: &[Sentence]) -> usize {
    refs.iter()
        .map(Sentence::len)
        .min_by_key(|&len| (len.abs_diff(hyp_len), len))
        .unwrap_or(0)
}

/// Corpus BLEU with multi-reference clipping and closest-length brevity penalty.
pub fn corpus_bleu<R: AsRef<[Sentence]>>(hyps: &[Sentence], refsets: &[R], cfg: &BleuConfig) -> Result<f64> {
    cfg.check()?;
    if hyps.len() != refsets.len() {
        return Err(Error::LengthMismatch {
            left: hyps.len(),
            right: refsets.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::EmptyInput("corpus_bleu needs at least one hypothesis"));
    }
    let mut total = BleuStats::default();
    for (hyp, refs) in hyps.iter().zip(refsets) {
        let refs = refs.as_ref();
        if refs.is_empty() {
            return Err(Error::EmptyInput("every reference set must be non-empty"));
        }
        total.add(&BleuStats::of(hyp, refs, cfg.max_n));
    }
    Ok(total.score(cfg.max_n, cfg.smoothing))
}

pub fn sentence_bleu(hyp: &Sentence, refs: &[Sentence], cfg: &BleuConfig) -> Result<f64> {
    cfg.check()?;
    if refs.is_empty() {
        return Err(Error::EmptyInput("sentence_bleu needs at least one reference"));
    }
    Ok(BleuStats::of(hyp, refs, cfg.max_n).score(cfg.max_n, cfg.smoothing))
}

/// Mean BLEU over all ordered pairs `(candidate i, reference j)`, `i != j`.
pub fn pairwise_bleu(sentences: &[Sentence], cfg: &BleuConfig) -> Result<f64> {
    if sentences.len() < 2 {
        return Err(Error::FewerThanTwo(sentences.len()));
    }
    let mut scores = Vec::with_capacity(sentences.len() * (sentences.len() - 1));
    for (i, cand) in sentences.iter().enumerate() {
        for (j, reference) in sentences.iter().enumerate() {
            if i != j {
                scores.push(sentence_bleu(cand, std::slice::from_ref(reference), cfg)?);
            }
        }
    }
    Ok(order_free_mean(scores))
}
