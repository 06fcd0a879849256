//! Surface metrics: BLEU, ROUGE-L, pairwise BLEU, best-matching (BM) and
//! multi-reference (MR) aggregation, and the Top-k report.

mod bleu;
mod report;
mod rouge;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantic::SemanticScorer;
use crate::text::{order_free_mean, Sentence};

pub use bleu::{
    corpus_bleu, pairwise_bleu, sentence_bleu, BleuConfig, BleuMode, BleuStats, NGramProfile, Smoothing, MAX_ORDER,
};
pub use report::{render_table, MetricReport, RankScores, Top1Scores, TopKScores};
pub use rouge::{lcs_len, rouge_l};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricId {
    Bleu,
    Rouge,
    Semantic,
}

/// Index and score of the reference maximizing `metric`; ties go to the
/// lowest index, so the original ground truth wins ties.
pub fn bm_select<F>(hyp: &Sentence, refs: &[Sentence], mut metric: F) -> Result<(usize, f64)>
where
    F: FnMut(&Sentence, &Sentence) -> Result<f64>,
{
    if refs.is_empty() {
        return Err(Error::EmptyInput("bm_select needs at least one reference"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, r) in refs.iter().enumerate() {
        let v = metric(hyp, r)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

fn check_lengths<R>(hyps: &[Sentence], refsets: &[R]) -> Result<()> {
    if hyps.len() != refsets.len() {
        return Err(Error::LengthMismatch {
            left: hyps.len(),
            right: refsets.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::EmptyInput("no hypotheses"));
    }
    Ok(())
}

/// Semantic scores for every (hypothesis, reference) pair, in one batch.
/// `out[i][j]` scores hypothesis `i` against its reference `j`.
pub(crate) fn semantic_matrix<R: AsRef<[Sentence]>>(
    hyps: &[&Sentence],
    refsets: &[R],
    scorer: &dyn SemanticScorer,
) -> Result<Vec<Vec<f64>>> {
    let pairs: Vec<(&str, &str)> = hyps
        .iter()
        .zip(refsets)
        .flat_map(|(h, refs)| refs.as_ref().iter().map(move |r| (h.raw(), r.raw())))
        .collect();
    let flat = scorer.score_batch(&pairs)?;
    if flat.len() != pairs.len() {
        return Err(Error::MalformedResponse(format!(
            "scorer returned {} scores for {} pairs",
            flat.len(),
            pairs.len()
        )));
    }
    let mut it = flat.into_iter();
    Ok(refsets
        .iter()
        .map(|refs| it.by_ref().take(refs.as_ref().len()).collect())
        .collect())
}

fn argmax_first(values: &[f64]) -> (usize, f64) {
    values.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (i, &v)| if v > best.1 { (i, v) } else { best },
    )
}

/// Best-matching score: pick, per example, the reference with the highest
/// sentence-level score, then aggregate. BLEU is aggregated as corpus BLEU
/// against the selected references; ROUGE and semantic scores are averaged.
pub fn bm_corpus_score<R: AsRef<[Sentence]>>(
    hyps: &[Sentence],
    refsets: &[R],
    metric: MetricId,
    scorer: &dyn SemanticScorer,
) -> Result<f64> {
    check_lengths(hyps, refsets)?;
    match metric {
        MetricId::Bleu => {
            let sentence_cfg = BleuConfig::sentence();
            let mut selected = Vec::with_capacity(hyps.len());
            for (h, refs) in hyps.iter().zip(refsets) {
                let refs = refs.as_ref();
                let (idx, _) = bm_select(h, refs, |h, r| sentence_bleu(h, std::slice::from_ref(r), &sentence_cfg))?;
                selected.push([refs[idx].clone()]);
            }
            corpus_bleu(hyps, &selected, &BleuConfig::corpus())
        }
        MetricId::Rouge => {
            let mut scores = Vec::with_capacity(hyps.len());
            for (h, refs) in hyps.iter().zip(refsets) {
                scores.push(bm_select(h, refs.as_ref(), |h, r| rouge_l(h, std::slice::from_ref(r)))?.1);
            }
            Ok(order_free_mean(scores))
        }
        MetricId::Semantic => {
            let hyp_refs: Vec<&Sentence> = hyps.iter().collect();
            let matrix = semantic_matrix(&hyp_refs, refsets, scorer)?;
            Ok(order_free_mean(matrix.iter().map(|row| argmax_first(row).1).collect()))
        }
    }
}

/// The literal per-sentence form: mean over examples of the maximum
/// sentence-level score over references.
pub fn bm_mean_score<R: AsRef<[Sentence]>>(
    hyps: &[Sentence],
    refsets: &[R],
    metric: MetricId,
    scorer: &dyn SemanticScorer,
) -> Result<f64> {
    check_lengths(hyps, refsets)?;
    match metric {
        MetricId::Bleu => {
            let cfg = BleuConfig::sentence();
            let mut scores = Vec::with_capacity(hyps.len());
            for (h, refs) in hyps.iter().zip(refsets) {
                scores.push(bm_select(h, refs.as_ref(), |h, r| sentence_bleu(h, std::slice::from_ref(r), &cfg))?.1);
            }
            Ok(order_free_mean(scores))
        }
        other => bm_corpus_score(hyps, refsets, other, scorer),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrScores {
    pub bleu_mr: f64,
    pub rouge_mr: f64,
    pub sem_mr: f64,
}

/// Scores against the full reference set of every example.
pub fn mr_scores<R: AsRef<[Sentence]>>(
    hyps: &[Sentence],
    refsets: &[R],
    scorer: &dyn SemanticScorer,
) -> Result<MrScores> {
    check_lengths(hyps, refsets)?;
    let bleu_mr = corpus_bleu(hyps, refsets, &BleuConfig::corpus())?;
    let mut rouge = Vec::with_capacity(hyps.len());
    for (h, refs) in hyps.iter().zip(refsets) {
        rouge.push(rouge_l(h, refs.as_ref())?);
    }
    let hyp_refs: Vec<&Sentence> = hyps.iter().collect();
    let matrix = semantic_matrix(&hyp_refs, refsets, scorer)?;
    let sem_mr = order_free_mean(matrix.into_iter().map(order_free_mean).collect());
    Ok(MrScores {
        bleu_mr,
        rouge_mr: order_free_mean(rouge),
        sem_mr,
    })
}

/// Full Top-1 / Top-k report for per-example ranked hypothesis lists.
pub fn topk_report<H, R>(
    hyp_lists: &[H],
    refsets: &[R],
    scorer: &dyn SemanticScorer,
    cfg: &BleuConfig,
) -> Result<MetricReport>
where
    H: AsRef<[Sentence]>,
    R: AsRef<[Sentence]>,
{
    if hyp_lists.len() != refsets.len() {
        return Err(Error::LengthMismatch {
            left: hyp_lists.len(),
            right: refsets.len(),
        });
    }
    if hyp_lists.is_empty() {
        return Err(Error::EmptyInput("no hypothesis lists"));
    }
    let k = hyp_lists[0].as_ref().len();
    if k == 0 {
        return Err(Error::EmptyInput("hypothesis lists must be non-empty"));
    }
    for (index, list) in hyp_lists.iter().enumerate() {
        if list.as_ref().len() != k {
            return Err(Error::RaggedK {
                index,
                found: list.as_ref().len(),
                expected: k,
            });
        }
    }
    let sentence_cfg = BleuConfig {
        max_n: cfg.max_n,
        mode: BleuMode::Sentence,
        smoothing: Smoothing::AddOneHighOrder,
    };

    // Semantic scores for every (example, rank, reference) triple at once.
    let flat_hyps: Vec<&Sentence> = hyp_lists.iter().flat_map(|l| l.as_ref().iter()).collect();
    let flat_refs: Vec<&[Sentence]> = refsets
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.as_ref(), k))
        .collect();
    let sem = semantic_matrix(&flat_hyps, &flat_refs, scorer)?;

    let mut rfb = Vec::with_capacity(flat_hyps.len());
    let mut mrfb = Vec::with_capacity(flat_hyps.len());
    for (h, refs) in flat_hyps.iter().zip(&flat_refs) {
        rfb.push(bm_select(h, refs, |h, r| sentence_bleu(h, std::slice::from_ref(r), &sentence_cfg))?.1);
        mrfb.push(sentence_bleu(h, refs, &sentence_cfg)?);
    }

    let rank_hyps = |r: usize| -> Vec<Sentence> { hyp_lists.iter().map(|l| l.as_ref()[r].clone()).collect() };
    let mut per_rank = Vec::with_capacity(k);
    for r in 0..k {
        let hyps = rank_hyps(r);
        let sem_bm = order_free_mean((0..hyp_lists.len()).map(|e| argmax_first(&sem[e * k + r]).1).collect());
        per_rank.push(RankScores {
            rank: r,
            bleu_bm: bm_corpus_score(&hyps, refsets, MetricId::Bleu, scorer)?,
            sem_bm,
        });
    }

    let top1_hyps = rank_hyps(0);
    let mr = mr_scores(&top1_hyps, refsets, scorer)?;
    let top1 = Top1Scores {
        bleu_bm: per_rank[0].bleu_bm,
        bleu_mr: mr.bleu_mr,
        rouge_bm: bm_corpus_score(&top1_hyps, refsets, MetricId::Rouge, scorer)?,
        rouge_mr: mr.rouge_mr,
        sem_bm: per_rank[0].sem_bm,
        sem_mr: mr.sem_mr,
    };

    let topk = if k >= 2 {
        let mut pwb = Vec::with_capacity(hyp_lists.len());
        for list in hyp_lists {
            pwb.push(pairwise_bleu(list.as_ref(), &sentence_cfg)?);
        }
        Some(TopKScores {
            rfb_bm: order_free_mean(rfb),
            mrfb: order_free_mean(mrfb),
            pwb: order_free_mean(pwb),
            rfbrt_bm: order_free_mean(sem.iter().map(|row| argmax_first(row).1).collect()),
            mrfbrt: order_free_mean(sem.iter().map(|row| order_free_mean(row.clone())).collect()),
        })
    } else {
        None
    };

    Ok(MetricReport {
        scorer: scorer.name().to_owned(),
        k,
        top1,
        topk,
        per_rank,
    })
}
