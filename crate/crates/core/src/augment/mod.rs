//! Reference augmentation through a chat model: keyword extraction,
//! paraphrase generation with optional keywords, automatic quality gating,
//! and rewriting of decoded hypotheses.

mod client;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MultiRefExample};
use crate::decoding::DecodeRecord;
use crate::error::{Error, Result};
use crate::metrics::{pairwise_bleu, sentence_bleu, BleuConfig};
use crate::semantic::{rfbrt, SemanticScorer};
use crate::text::{normalize, order_free_mean, Sentence};

pub use client::{
    client_from_spec, ChatClient, ChatRequest, ChatResponse, HttpChatClient, MockChatClient, ProcessChatClient,
    DEFAULT_CHAT_TIMEOUT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    ExtractKeywords,
    GenerateOptionalKw,
    RewriteFluency,
    Diversify,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::ExtractKeywords,
        TemplateId::GenerateOptionalKw,
        TemplateId::RewriteFluency,
        TemplateId::Diversify,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::ExtractKeywords => "extract_keywords.txt",
            TemplateId::GenerateOptionalKw => "generate_optional_kw.txt",
            TemplateId::RewriteFluency => "rewrite_fluency.txt",
            TemplateId::Diversify => "diversify.txt",
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            TemplateId::ExtractKeywords => include_str!("../../templates/extract_keywords.txt"),
            TemplateId::GenerateOptionalKw => include_str!("../../templates/generate_optional_kw.txt"),
            TemplateId::RewriteFluency => include_str!("../../templates/rewrite_fluency.txt"),
            TemplateId::Diversify => include_str!("../../templates/diversify.txt"),
        }
    }
}

/// Prompt bodies with `{target}`, `{keywords}`, `{k}` and `{hypothesis}`
/// placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    bodies: [String; 4],
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            bodies: TemplateId::ALL.map(|t| t.default_body().to_owned()),
        }
    }
}

impl PromptTemplates {
    /// Built-in templates, each replaced by `<dir>/<id>.txt` when that file exists.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut out = Self::default();
        for (i, id) in TemplateId::ALL.iter().enumerate() {
            let path = dir.join(id.file_name());
            if path.exists() {
                out.bodies[i] = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(out)
    }

    pub fn body(&self, id: TemplateId) -> &str {
        &self.bodies[id as usize]
    }

    /// Substitutes `vars` in one pass; a placeholder without a value is an error.
    pub fn render(&self, id: TemplateId, vars: &[(&str, &str)]) -> Result<String> {
        let body = self.body(id);
        let mut out = String::with_capacity(body.len());
        let mut rest = body;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let name = after.find('}').map(|close| &after[..close]);
            match name {
                Some(name) if is_placeholder(name) => {
                    let value = vars.iter().find(|(n, _)| *n == name).map(|(_, v)| *v).ok_or_else(|| {
                        Error::config(format!(
                            "template {}: unresolved placeholder {{{name}}}",
                            id.file_name()
                        ))
                    })?;
                    out.push_str(value);
                    rest = &after[name.len() + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn is_placeholder(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Minimum semantic score of a candidate against the ground truth.
    pub min_sem: f64,
    /// Maximum pairwise BLEU of the accepted set, in (0, 100].
    pub max_pwb: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            min_sem: 40.0,
            max_pwb: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Candidate references requested per example.
    pub k: usize,
    /// Extra attempts after the first request.
    pub max_retries: usize,
    pub gate: GateConfig,
    /// Examples processed concurrently.
    pub concurrency: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            k: 5,
            max_retries: 2,
            gate: GateConfig::default(),
            concurrency: 4,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.k == 0 {
            problems.push("k: must be at least 1".to_owned());
        }
        if !self.gate.min_sem.is_finite() {
            problems.push("gate.min_sem: must be finite".to_owned());
        }
        if !(self.gate.max_pwb > 0.0 && self.gate.max_pwb <= 100.0) {
            problems.push("gate.max_pwb: must be in (0, 100]".to_owned());
        }
        if self.concurrency == 0 {
            problems.push("concurrency: must be at least 1".to_owned());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

fn clean_item(s: &str) -> &str {
    let s = s.trim();
    let s = s.trim_start_matches(|c: char| c.is_ascii_digit());
    let s = s.strip_prefix(['.', ')']).unwrap_or(s);
    let s = s.trim_start_matches(['-', '*', '•']).trim();
    s.trim_matches(['"', '\'', '`']).trim()
}

/// Keywords from the ground truth. Keywords that are not substrings of the
/// normalized ground truth are dropped with a warning.
pub fn extract_keywords(
    client: &dyn ChatClient,
    templates: &PromptTemplates,
    ground_truth: &Sentence,
    max_retries: usize,
) -> Result<Vec<String>> {
    if ground_truth.is_empty() {
        return Err(Error::EmptyInput("ground truth is empty"));
    }
    let prompt = templates.render(TemplateId::ExtractKeywords, &[("target", ground_truth.raw())])?;
    let haystack = normalize(ground_truth.raw(), true);
    for _ in 0..=max_retries {
        let response = client.complete(&prompt)?;
        let items: Vec<&str> = response
            .split([',', ';', '\n'])
            .map(clean_item)
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            continue;
        }
        let mut keywords = Vec::new();
        for item in items {
            let kw = normalize(item, true);
            if haystack.contains(&kw) {
                if !keywords.contains(&kw) {
                    keywords.push(kw);
                }
            } else {
                log::warn!("dropping keyword `{item}`: not in `{}`", ground_truth.raw());
            }
        }
        return Ok(keywords);
    }
    Err(Error::UnparseableResponse {
        attempts: max_retries + 1,
    })
}

/// Parses one candidate sentence per non-empty response line.
fn parse_lines(response: &str) -> Vec<Sentence> {
    response
        .lines()
        .map(clean_item)
        .filter(|l| !l.is_empty())
        .map(Sentence::new)
        .collect()
}

fn collect_distinct(
    client: &dyn ChatClient,
    k: usize,
    max_retries: usize,
    mut prompt_for: impl FnMut(usize) -> Result<String>,
) -> Result<Vec<Sentence>> {
    let mut out: Vec<Sentence> = Vec::with_capacity(k);
    for _ in 0..=max_retries {
        if out.len() >= k {
            break;
        }
        let prompt = prompt_for(k - out.len())?;
        for cand in parse_lines(&client.complete(&prompt)?) {
            if out.len() < k && !out.iter().any(|s| s.tokens() == cand.tokens()) {
                out.push(cand);
            }
        }
    }
    if out.len() < k {
        return Err(Error::InsufficientCandidates {
            have: out.len(),
            need: k,
        });
    }
    Ok(out)
}

/// `k` distinct paraphrases of the ground truth, in response order.
pub fn generate_references(
    client: &dyn ChatClient,
    templates: &PromptTemplates,
    ground_truth: &Sentence,
    keywords: &[String],
    k: usize,
    max_retries: usize,
) -> Result<Vec<Sentence>> {
    if k == 0 {
        return Err(Error::config("k: must be at least 1"));
    }
    let kw = keywords.join(", ");
    collect_distinct(client, k, max_retries, |need| {
        let need = need.to_string();
        templates.render(
            TemplateId::GenerateOptionalKw,
            &[("target", ground_truth.raw()), ("keywords", &kw), ("k", &need)],
        )
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Semantic score below `min_sem`.
    Accuracy,
    /// Removed to bring pairwise BLEU under `max_pwb`.
    Diversity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub text: String,
    pub sem: f64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<DropReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub candidates: Vec<CandidateReport>,
    /// Pairwise BLEU of the accepted set when it has two or more members.
    pub pwb: Option<f64>,
}

/// Mean of the symmetric pairwise BLEU of `set[i]` against every other member.
fn mean_pair_bleu(set: &[&Sentence], i: usize, cfg: &BleuConfig) -> Result<f64> {
    let mut vals = Vec::with_capacity(set.len() - 1);
    for (j, other) in set.iter().enumerate() {
        if j != i {
            let a = sentence_bleu(set[i], std::slice::from_ref(*other), cfg)?;
            let b = sentence_bleu(other, std::slice::from_ref(set[i]), cfg)?;
            vals.push(0.5 * (a + b));
        }
    }
    Ok(order_free_mean(vals))
}

/// Accuracy filter, then greedy diversity pruning: while the accepted set's
/// pairwise BLEU exceeds `max_pwb`, the member with the highest mean pairwise
/// BLEU is dropped (the later one on ties). Each drop removes a member whose
/// pair total is at least the set average, so pairwise BLEU never rises.
pub fn quality_gate(
    ground_truth: &Sentence,
    candidates: &[Sentence],
    scorer: &dyn SemanticScorer,
    gate: &GateConfig,
) -> Result<(Vec<Sentence>, GateReport)> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidates to gate"));
    }
    let pairs: Vec<(&str, &str)> = candidates.iter().map(|c| (c.raw(), ground_truth.raw())).collect();
    let sems = scorer.score_batch(&pairs)?;
    let mut reports: Vec<CandidateReport> = candidates
        .iter()
        .zip(&sems)
        .map(|(c, &sem)| CandidateReport {
            text: c.raw().to_owned(),
            sem,
            accepted: sem >= gate.min_sem,
            dropped: (sem < gate.min_sem).then_some(DropReason::Accuracy),
        })
        .collect();

    let cfg = BleuConfig::sentence();
    let mut kept: Vec<usize> = (0..candidates.len()).filter(|&i| reports[i].accepted).collect();
    let pwb = loop {
        if kept.len() < 2 {
            break None;
        }
        let set: Vec<&Sentence> = kept.iter().map(|&i| &candidates[i]).collect();
        let current = pairwise_bleu(&set.iter().map(|s| (*s).clone()).collect::<Vec<_>>(), &cfg)?;
        if current <= gate.max_pwb {
            break Some(current);
        }
        let mut worst = (0, f64::NEG_INFINITY);
        for pos in 0..set.len() {
            let m = mean_pair_bleu(&set, pos, &cfg)?;
            if m >= worst.1 {
                worst = (pos, m);
            }
        }
        let idx = kept.remove(worst.0);
        reports[idx].accepted = false;
        reports[idx].dropped = Some(DropReason::Diversity);
    };
    let accepted = kept.iter().map(|&i| candidates[i].clone()).collect();
    Ok((
        accepted,
        GateReport {
            candidates: reports,
            pwb,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleAugmentReport {
    pub id: String,
    pub keywords: Vec<String>,
    pub generated: usize,
    pub accepted: usize,
    pub dropped_accuracy: usize,
    pub dropped_diversity: usize,
    /// No candidate survived (or the example failed); only the ground truth is kept.
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub k: usize,
    pub scorer: String,
    pub client: String,
    /// Mean pairwise BLEU of accepted references over examples with two or more.
    pub avg_pwb: Option<f64>,
    /// Mean semantic agreement of accepted references with the ground truth.
    pub avg_rfbrt: Option<f64>,
    pub flagged: usize,
    pub examples: Vec<ExampleAugmentReport>,
}

/// Keywords, generated candidates, accepted references and the gate report.
type Augmented = (Vec<String>, Vec<Sentence>, Vec<Sentence>, GateReport);

fn augment_one(
    client: &dyn ChatClient,
    templates: &PromptTemplates,
    ex: &MultiRefExample,
    cfg: &AugmentConfig,
    scorer: &dyn SemanticScorer,
) -> Result<Augmented> {
    let gt = &ex.references[0];
    let keywords = extract_keywords(client, templates, gt, cfg.max_retries)?;
    let generated = generate_references(client, templates, gt, &keywords, cfg.k, cfg.max_retries)?;
    let (accepted, report) = quality_gate(gt, &generated, scorer, &cfg.gate)?;
    Ok((keywords, generated, accepted, report))
}

/// Expands a single-reference corpus: every output example keeps the ground
/// truth at index 0, followed by the candidates that pass the gate. A failing
/// example is flagged and keeps only its ground truth. Output order follows
/// the input.
pub fn build_multiref_corpus(
    client: &dyn ChatClient,
    templates: &PromptTemplates,
    corpus: &Corpus,
    cfg: &AugmentConfig,
    scorer: &dyn SemanticScorer,
) -> Result<(Corpus, AugmentReport)> {
    cfg.validate()?;
    let problems: Vec<String> = corpus
        .examples()
        .iter()
        .filter(|e| e.references.len() != 1)
        .map(|e| {
            format!(
                "corpus: example `{}` has {} references, expected 1",
                e.id,
                e.references.len()
            )
        })
        .collect();
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| Error::config(format!("concurrency: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        corpus
            .examples()
            .par_iter()
            .map(|ex| (ex, augment_one(client, templates, ex, cfg, scorer)))
            .collect()
    });

    let mut examples = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    let mut pwbs = Vec::new();
    let mut rts = Vec::new();
    for (ex, outcome) in results {
        let gt = ex.references[0].clone();
        let mut out = ex.clone();
        let report = match outcome {
            Ok((keywords, generated, accepted, gate)) => {
                if accepted.len() >= 2 {
                    pwbs.push(pairwise_bleu(&accepted, &BleuConfig::sentence())?);
                }
                if !accepted.is_empty() {
                    rts.push(rfbrt(&gt, &accepted, scorer)?);
                }
                let count = |r: DropReason| gate.candidates.iter().filter(|c| c.dropped == Some(r)).count();
                let rep = ExampleAugmentReport {
                    id: ex.id.clone(),
                    keywords,
                    generated: generated.len(),
                    accepted: accepted.len(),
                    dropped_accuracy: count(DropReason::Accuracy),
                    dropped_diversity: count(DropReason::Diversity),
                    flagged: accepted.is_empty(),
                    error: None,
                    gate: Some(gate),
                };
                out.references = std::iter::once(gt).chain(accepted).collect();
                rep
            }
            Err(e) => {
                log::warn!("example {}: augmentation failed: {e}", ex.id);
                ExampleAugmentReport {
                    id: ex.id.clone(),
                    keywords: Vec::new(),
                    generated: 0,
                    accepted: 0,
                    dropped_accuracy: 0,
                    dropped_diversity: 0,
                    flagged: true,
                    error: Some(e.in_example(&ex.id).to_string()),
                    gate: None,
                }
            }
        };
        examples.push(out);
        reports.push(report);
    }
    let flagged = reports.iter().filter(|r| r.flagged).count();
    let report = AugmentReport {
        k: cfg.k,
        scorer: scorer.name().to_owned(),
        client: client.name().to_owned(),
        avg_pwb: (!pwbs.is_empty()).then(|| order_free_mean(pwbs)),
        avg_rfbrt: (!rts.is_empty()).then(|| order_free_mean(rts)),
        flagged,
        examples: reports,
    };
    Ok((Corpus::new(corpus.split(), examples)?, report))
}

/// Marker a client returns when a sentence needs no fluency edit.
pub const FLUENT_MARKER: &str = "[FLUENT]";

/// Minimal fluency revision of one hypothesis.
pub fn rewrite_fluency(
    client: &dyn ChatClient,
    templates: &PromptTemplates,
    hypothesis: &Sentence,
    max_retries: usize,
) -> Result<Sentence> {
    let prompt = templates.render(TemplateId::RewriteFluency, &[("hypothesis", hypothesis.raw())])?;
    for _ in 0..=max_retries {
        let response = client.complete(&prompt)?;
        if response.trim() == FLUENT_MARKER {
            return Ok(hypothesis.clone());
        }
        if let Some(first) = parse_lines(&response).into_iter().next() {
            return Ok(first);
        }
    }
    Err(Error::UnparseableResponse {
        attempts: max_retries + 1,
    })
}

/// For each record, the Top-1 hypothesis is revised for fluency and then
/// expanded to `k` distinct variants. Output records carry provenance
/// `rewritten` and no log-probabilities.
pub fn rewrite_hypotheses(
    client: &dyn ChatClient,
    templates: &PromptTemplates,
    records: &[DecodeRecord],
    k: usize,
    max_retries: usize,
) -> Result<Vec<DecodeRecord>> {
    if k == 0 {
        return Err(Error::config("k: must be at least 1"));
    }
    records
        .iter()
        .map(|rec| {
            let run = || -> Result<DecodeRecord> {
                let top1 = rec
                    .hypotheses
                    .first()
                    .ok_or(Error::EmptyInput("record has no hypotheses"))?;
                let fluent = rewrite_fluency(client, templates, &Sentence::new(top1), max_retries)?;
                let variants = collect_distinct(client, k, max_retries, |need| {
                    let need = need.to_string();
                    templates.render(TemplateId::Diversify, &[("hypothesis", fluent.raw()), ("k", &need)])
                })?;
                Ok(DecodeRecord {
                    id: rec.id.clone(),
                    hypotheses: variants.iter().map(|s| s.raw().to_owned()).collect(),
                    log_probs: Vec::new(),
                    groups: (0..k).collect(),
                    provenance: Some("rewritten".into()),
                })
            };
            run().map_err(|e| e.in_example(&rec.id))
        })
        .collect()
}
