//! Semantic-similarity scoring.
//!
//! A trained neural metric cannot ship with this crate, so scoring goes
//! through [`SemanticScorer`]. Two implementations exist: a character n-gram
//! F-score surrogate (pure, in-process) and [`ExternalScorer`], which streams
//! pairs to an external process over a line protocol:
//!
//! ```text
//! request  (stdin,  one per line): {"candidate": "...", "reference": "..."}
//! response (stdout, one per line): {"score": 0.73}
//! ```
//!
//! Responses must come back in request order, one per request. A response may
//! carry an `"index"` field, which is then checked against its position.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::run_piped;
use crate::text::{order_free_mean, Sentence};

pub trait SemanticScorer: Send + Sync {
    fn name(&self) -> &str;

    /// Closed interval of possible scores.
    fn range(&self) -> (f64, f64);

    /// Scores `(candidate, reference)` pairs, preserving order.
    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>>;

    fn score(&self, candidate: &Sentence, reference: &Sentence) -> Result<f64> {
        let out = self.score_batch(&[(candidate.raw(), reference.raw())])?;
        out.into_iter()
            .next()
            .ok_or_else(|| Error::MalformedResponse("no score returned".into()))
    }
}

/// Character n-gram F-beta surrogate. Not BLEURT; reports label it as such.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateScorer {
    pub n_max: usize,
    pub beta: f64,
}

impl Default for SurrogateScorer {
    fn default() -> Self {
        SurrogateScorer { n_max: 6, beta: 2.0 }
    }
}

impl SemanticScorer for SurrogateScorer {
    fn name(&self) -> &str {
        "chrF-surrogate (not BLEURT)"
    }

    fn range(&self) -> (f64, f64) {
        (0.0, 100.0)
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        Ok(pairs.iter().map(|(c, r)| surrogate_score_raw(c, r, self)).collect())
    }

    fn score(&self, candidate: &Sentence, reference: &Sentence) -> Result<f64> {
        Ok(surrogate_score(candidate, reference, self))
    }
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    for gram in chars.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn surrogate_score_raw(candidate: &str, reference: &str, cfg: &SurrogateScorer) -> f64 {
    let cand: Vec<char> = crate::text::normalize(candidate, false).chars().collect();
    let refr: Vec<char> = crate::text::normalize(reference, false).chars().collect();
    let beta2 = cfg.beta * cfg.beta;
    let mut per_order = Vec::new();
    for n in 1..=cfg.n_max {
        let cand_total = cand.len().saturating_sub(n - 1);
        let ref_total = refr.len().saturating_sub(n - 1);
        if cand_total == 0 && ref_total == 0 {
            continue;
        }
        if cand_total == 0 || ref_total == 0 {
            per_order.push(0.0);
            continue;
        }
        let cand_counts = char_ngrams(&cand, n);
        let ref_counts = char_ngrams(&refr, n);
        let matches: usize = cand_counts
            .iter()
            .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let p = matches as f64 / cand_total as f64;
        let r = matches as f64 / ref_total as f64;
        per_order.push(if p + r == 0.0 {
            0.0
        } else {
            (1.0 + beta2) * p * r / (beta2 * p + r)
        });
    }
    if per_order.is_empty() {
        return 0.0;
    }
    let n = per_order.len() as f64;
    per_order.iter().sum::<f64>() / n * 100.0
}

/// Character n-gram F-beta over orders `1..=n_max`, averaged over the orders
/// present in either string, scaled to `[0, 100]`.
pub fn surrogate_score(candidate: &Sentence, reference: &Sentence, cfg: &SurrogateScorer) -> f64 {
    surrogate_score_raw(candidate.raw(), reference.raw(), cfg)
}

/// Mean semantic score of generated references against the ground truth,
/// with each generated sentence on the candidate side.
pub fn rfbrt(ground_truth: &Sentence, generated: &[Sentence], scorer: &dyn SemanticScorer) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::EmptyInput("rfbrt needs at least one generated reference"));
    }
    let pairs: Vec<(&str, &str)> = generated.iter().map(|g| (g.raw(), ground_truth.raw())).collect();
    Ok(order_free_mean(scorer.score_batch(&pairs)?))
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    candidate: &'a str,
    reference: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
    #[serde(default)]
    index: Option<usize>,
}

/// A scorer process reached through the line protocol described in the module
/// docs. The command runs under `sh -c`; one process is spawned per batch and
/// batches on the same handle are serialized.
#[derive(Debug)]
pub struct ExternalScorer {
    command: String,
    timeout: Duration,
    range: (f64, f64),
    name: String,
    lock: Mutex<()>,
}

impl ExternalScorer {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

    pub fn new(command: impl Into<String>) -> Self {
        let command = command.into();
        ExternalScorer {
            name: format!("external:{command}"),
            command,
            timeout: Self::DEFAULT_TIMEOUT,
            range: (0.0, 1.0),
            lock: Mutex::new(()),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = (lo, hi);
        self
    }
}

impl SemanticScorer for ExternalScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn range(&self) -> (f64, f64) {
        self.range
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        external_score_batch(pairs, self)
    }
}

pub fn external_score_batch(pairs: &[(&str, &str)], endpoint: &ExternalScorer) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let _guard = endpoint.lock.lock().unwrap_or_else(|p| p.into_inner());

    let mut payload = Vec::new();
    for (candidate, reference) in pairs {
        serde_json::to_writer(&mut payload, &ScoreRequest { candidate, reference })?;
        payload.push(b'\n');
    }

    let lines = run_piped(&endpoint.command, payload, endpoint.timeout)?;
    let lines: Vec<&String> = lines.iter().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != pairs.len() {
        return Err(Error::MalformedResponse(format!(
            "expected {} score lines, got {}",
            pairs.len(),
            lines.len()
        )));
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let resp: ScoreResponse =
                serde_json::from_str(line).map_err(|e| Error::MalformedResponse(format!("line {}: {e}", i + 1)))?;
            match resp.index {
                Some(idx) if idx != i => Err(Error::MalformedResponse(format!("line {} carries index {idx}", i + 1))),
                _ if !resp.score.is_finite() => {
                    Err(Error::MalformedResponse(format!("line {}: non-finite score", i + 1)))
                }
                _ => Ok(resp.score),
            }
        })
        .collect()
}
