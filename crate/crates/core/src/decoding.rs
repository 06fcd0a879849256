//! Beam search and diverse beam search over the decoder step contract.
//!
//! A hypothesis is finished once its last token is EOS or it holds
//! `max_len` tokens. Finished hypotheses stay frozen in their beam and keep
//! competing against live extensions. Every ranking breaks score ties by
//! lexicographic order of the token ids, so results are deterministic.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{self, detokenize, DecoderState, ModelParams, Translator, Vocab, BOS, EOS};
use crate::text::Sentence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub group: usize,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub num_groups: usize,
    pub diversity_penalty: f64,
    pub max_len: usize,
    pub k_out: usize,
    /// Rank finished hypotheses by per-token log-prob instead of the sum.
    pub length_normalize: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 5,
            num_groups: 5,
            diversity_penalty: 0.5,
            max_len: 30,
            k_out: 3,
            length_normalize: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.beam_width == 0 {
            problems.push("beam_width: must be at least 1".to_owned());
        }
        if self.num_groups == 0 {
            problems.push("num_groups: must be at least 1".to_owned());
        } else if !self.beam_width.is_multiple_of(self.num_groups) {
            problems.push(format!(
                "num_groups: {} does not divide beam_width {}",
                self.num_groups, self.beam_width
            ));
        }
        if !(self.diversity_penalty.is_finite() && self.diversity_penalty >= 0.0) {
            problems.push("diversity_penalty: must be finite and non-negative".to_owned());
        }
        if self.max_len == 0 {
            problems.push("max_len: must be at least 1".to_owned());
        }
        if self.k_out == 0 || self.k_out > self.beam_width {
            problems.push(format!("k_out: must be in 1..={}", self.beam_width));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    fn rank_score(&self, h: &Hypothesis) -> f64 {
        if self.length_normalize && !h.tokens.is_empty() {
            h.log_prob / h.tokens.len() as f64
        } else {
            h.log_prob
        }
    }

    fn rank(&self, a: &Hypothesis, b: &Hypothesis) -> Ordering {
        self.rank_score(b)
            .total_cmp(&self.rank_score(a))
            .then_with(|| a.tokens.cmp(&b.tokens))
    }
}

struct Beam {
    tokens: Vec<u32>,
    log_prob: f64,
    state: DecoderState,
    finished: bool,
}

struct Candidate {
    parent: usize,
    token: Option<u32>,
    log_prob: f64,
    score: f64,
}

fn cmp_candidates(beams: &[Beam], a: &Candidate, b: &Candidate) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| {
        let ta = beams[a.parent].tokens.iter().chain(a.token.iter());
        let tb = beams[b.parent].tokens.iter().chain(b.token.iter());
        ta.cmp(tb)
    })
}

fn initial_beam(params: &ModelParams, source: &[u32], max_len: usize) -> Result<Beam> {
    if max_len == 0 {
        return Err(Error::config("max_len: must be at least 1"));
    }
    Ok(Beam {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: model::initial_state(params, source)?,
        finished: false,
    })
}

/// Expands every live beam; finished beams contribute themselves unchanged.
/// Returns the candidates and the next decoder state of each live beam.
fn expand(
    params: &ModelParams,
    beams: &[Beam],
    penalty: impl Fn(u32) -> f64,
) -> Result<(Vec<Candidate>, Vec<Option<DecoderState>>)> {
    let mut cands = Vec::new();
    let mut states = Vec::with_capacity(beams.len());
    for (i, beam) in beams.iter().enumerate() {
        if beam.finished {
            cands.push(Candidate {
                parent: i,
                token: None,
                log_prob: beam.log_prob,
                score: beam.log_prob,
            });
            states.push(None);
            continue;
        }
        let prev = beam.tokens.last().copied().unwrap_or(BOS);
        let (next, logits) = model::step(params, &beam.state, prev)?;
        let lsm = model::log_softmax(logits.view());
        for (v, &l) in lsm.iter().enumerate() {
            let lp = beam.log_prob + l;
            cands.push(Candidate {
                parent: i,
                token: Some(v as u32),
                log_prob: lp,
                score: lp - penalty(v as u32),
            });
        }
        states.push(Some(next));
    }
    Ok((cands, states))
}

fn advance(beams: &[Beam], chosen: &[Candidate], states: &[Option<DecoderState>], max_len: usize) -> Vec<Beam> {
    chosen
        .iter()
        .map(|c| {
            let parent = &beams[c.parent];
            match c.token {
                None => Beam {
                    tokens: parent.tokens.clone(),
                    log_prob: parent.log_prob,
                    state: parent.state.clone(),
                    finished: true,
                },
                Some(t) => {
                    let mut tokens = parent.tokens.clone();
                    tokens.push(t);
                    let finished = t == EOS || tokens.len() >= max_len;
                    Beam {
                        tokens,
                        log_prob: c.log_prob,
                        state: states[c.parent].clone().expect("live parent has a state"),
                        finished,
                    }
                }
            }
        })
        .collect()
}

fn to_hypothesis(beam: Beam, group: usize) -> Hypothesis {
    Hypothesis {
        tokens: beam.tokens,
        log_prob: beam.log_prob,
        group,
        finished: beam.finished,
    }
}

/// Plain beam search, ranked by cumulative log-prob (or the normalized score
/// when `length_normalize` is set). Ignores the group settings of `cfg`.
pub fn beam_search(params: &ModelParams, source: &[u32], cfg: &DecodeConfig) -> Result<Vec<Hypothesis>> {
    if cfg.beam_width == 0 {
        return Err(Error::config("beam_width: must be at least 1"));
    }
    let mut beams = vec![initial_beam(params, source, cfg.max_len)?];
    while beams.iter().any(|b| !b.finished) {
        let (mut cands, states) = expand(params, &beams, |_| 0.0)?;
        cands.sort_by(|a, b| cmp_candidates(&beams, a, b));
        cands.truncate(cfg.beam_width);
        beams = advance(&beams, &cands, &states, cfg.max_len);
    }
    let mut hyps: Vec<Hypothesis> = beams.into_iter().map(|b| to_hypothesis(b, 0)).collect();
    hyps.sort_by(|a, b| cfg.rank(a, b));
    Ok(hyps)
}

/// Diverse beam search with a per-step Hamming penalty against earlier groups.
/// Output lists the best hypothesis of each group in group order, then the
/// remaining hypotheses by rank.
pub fn diverse_beam_search(params: &ModelParams, source: &[u32], cfg: &DecodeConfig) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    let width = cfg.beam_width / cfg.num_groups;
    let vocab = params.tgt_vocab();
    let init = initial_beam(params, source, cfg.max_len)?;
    let mut groups: Vec<Vec<Beam>> = (0..cfg.num_groups)
        .map(|_| {
            vec![Beam {
                tokens: Vec::new(),
                log_prob: 0.0,
                state: init.state.clone(),
                finished: false,
            }]
        })
        .collect();

    while groups.iter().flatten().any(|b| !b.finished) {
        let mut counts = vec![0usize; vocab];
        for beams in groups.iter_mut() {
            if beams.iter().all(|b| b.finished) {
                continue;
            }
            let p = cfg.diversity_penalty;
            let (mut cands, states) = expand(params, beams, |v| p * counts[v as usize] as f64)?;
            cands.sort_by(|a, b| cmp_candidates(beams, a, b));
            cands.truncate(width);
            for c in &cands {
                if let Some(t) = c.token {
                    counts[t as usize] += 1;
                }
            }
            *beams = advance(beams, &cands, &states, cfg.max_len);
        }
    }

    let mut heads = Vec::with_capacity(cfg.num_groups);
    let mut rest = Vec::new();
    for (g, beams) in groups.into_iter().enumerate() {
        let mut hyps: Vec<Hypothesis> = beams.into_iter().map(|b| to_hypothesis(b, g)).collect();
        hyps.sort_by(|a, b| cfg.rank(a, b));
        let mut it = hyps.into_iter();
        heads.extend(it.next());
        rest.extend(it);
    }
    rest.sort_by(|a, b| cfg.rank(a, b));
    heads.extend(rest);
    Ok(heads)
}

/// Argmax decoding; ties go to the lowest token id.
pub fn greedy(params: &ModelParams, source: &[u32], max_len: usize) -> Result<Hypothesis> {
    let mut beam = initial_beam(params, source, max_len)?;
    while !beam.finished {
        let prev = beam.tokens.last().copied().unwrap_or(BOS);
        let (next, logits) = model::step(params, &beam.state, prev)?;
        let lsm = model::log_softmax(logits.view());
        let mut best = 0;
        for (v, &l) in lsm.iter().enumerate() {
            if l > lsm[best] {
                best = v;
            }
        }
        beam.tokens.push(best as u32);
        beam.log_prob += lsm[best];
        beam.state = next;
        beam.finished = best as u32 == EOS || beam.tokens.len() >= max_len;
    }
    Ok(to_hypothesis(beam, 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sentence: Sentence,
    pub log_prob: f64,
    pub group: usize,
    /// The decoded body was empty and has been replaced by `<unk>`.
    pub replaced_empty: bool,
}

/// The first `k` hypotheses as sentences, rank order preserved.
pub fn topk_extract(hyps: &[Hypothesis], k: usize, vocab: &Vocab) -> Result<Vec<Prediction>> {
    if k > hyps.len() {
        return Err(Error::KTooLarge {
            requested: k,
            available: hyps.len(),
        });
    }
    Ok(hyps[..k]
        .iter()
        .map(|h| {
            let (sentence, replaced_empty) = detokenize(vocab, &h.tokens);
            Prediction {
                sentence,
                log_prob: h.log_prob,
                group: h.group,
                replaced_empty,
            }
        })
        .collect())
}

/// One line of a decode output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub id: String,
    pub hypotheses: Vec<String>,
    #[serde(default)]
    pub log_probs: Vec<f64>,
    #[serde(default)]
    pub groups: Vec<usize>,
    /// Set when the hypotheses did not come from the decoder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl DecodeRecord {
    pub fn sentences(&self) -> Vec<Sentence> {
        self.hypotheses.iter().map(|h| Sentence::new(h)).collect()
    }
}

/// Decodes every example with diverse beam search (plain beam search when
/// `num_groups` is 1), in parallel, keeping corpus order.
pub fn decode_corpus(model: &Translator, corpus: &Corpus, cfg: &DecodeConfig) -> Result<Vec<DecodeRecord>> {
    cfg.validate()?;
    let records: Vec<DecodeRecord> = corpus
        .examples()
        .par_iter()
        .map(|ex| {
            let src = model.encode_source(&ex.source);
            let hyps = if cfg.num_groups == 1 {
                beam_search(&model.params, &src, cfg)
            } else {
                diverse_beam_search(&model.params, &src, cfg)
            }
            .and_then(|h| topk_extract(&h, cfg.k_out, &model.tgt_vocab))
            .map_err(|e| e.in_example(&ex.id))?;
            let empty = hyps.iter().filter(|p| p.replaced_empty).count();
            if empty > 0 {
                log::warn!("example {}: {empty} empty hypotheses replaced by <unk>", ex.id);
            }
            Ok(DecodeRecord {
                id: ex.id.clone(),
                hypotheses: hyps.iter().map(|p| p.sentence.raw().to_owned()).collect(),
                log_probs: hyps.iter().map(|p| p.log_prob).collect(),
                groups: hyps.iter().map(|p| p.group).collect(),
                provenance: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(records)
}

/// Greedy Top-1 sentence per example, in corpus order.
pub fn greedy_corpus(model: &Translator, corpus: &Corpus, max_len: usize) -> Result<Vec<Sentence>> {
    corpus
        .examples()
        .par_iter()
        .map(|ex| {
            let src = model.encode_source(&ex.source);
            let h = greedy(&model.params, &src, max_len).map_err(|e| e.in_example(&ex.id))?;
            Ok(model.detokenize(&h.tokens).0)
        })
        .collect()
}
