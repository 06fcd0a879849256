use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Top1Scores {
    pub bleu_bm: f64,
    pub bleu_mr: f64,
    pub rouge_bm: f64,
    pub rouge_mr: f64,
    pub sem_bm: f64,
    pub sem_mr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKScores {
    pub rfb_bm: f64,
    pub mrfb: f64,
    pub pwb: f64,
    pub rfbrt_bm: f64,
    pub mrfbrt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankScores {
    pub rank: usize,
    pub bleu_bm: f64,
    pub sem_bm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Name of the semantic scorer behind the `sem_*` / `*rt*` columns.
    pub scorer: String,
    pub k: usize,
    pub top1: Top1Scores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topk: Option<TopKScores>,
    pub per_rank: Vec<RankScores>,
}

const COLUMNS: [&str; 11] = [
    "rfb-BM", "mrfb", "pwb", "rfbRT-BM", "mrfbRT", "BRT-MR", "R-MR", "B-MR", "BRT-BM", "R-BM", "B-BM",
];

fn cells(report: &MetricReport) -> [Option<f64>; 11] {
    let t = report.topk;
    let one = report.top1;
    [
        t.map(|t| t.rfb_bm),
        t.map(|t| t.mrfb),
        t.map(|t| t.pwb),
        t.map(|t| t.rfbrt_bm),
        t.map(|t| t.mrfbrt),
        Some(one.sem_mr),
        Some(one.rouge_mr),
        Some(one.bleu_mr),
        Some(one.sem_bm),
        Some(one.rouge_bm),
        Some(one.bleu_bm),
    ]
}

/// Renders labelled reports as a fixed-width table (Top-k block first, then
/// Top-1), followed by the per-rank series of every row.
pub fn render_table(rows: &[(String, MetricReport)]) -> String {
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = write!(out, "{:<label_width$}", "model");
    for col in COLUMNS {
        let _ = write!(out, " {col:>9}");
    }
    out.push('\n');
    for (label, report) in rows {
        let _ = write!(out, "{label:<label_width$}");
        for cell in cells(report) {
            match cell {
                Some(v) => {
                    let _ = write!(out, " {v:>9.2}");
                }
                None => {
                    let _ = write!(out, " {:>9}", "-");
                }
            }
        }
        out.push('\n');
    }
    if let Some((_, first)) = rows.first() {
        let _ = writeln!(out, "\nsemantic scorer: {}", first.scorer);
    }
    out.push_str("\nper-rank series (Top-kth hypothesis)\n");
    for (label, report) in rows {
        let _ = writeln!(out, "{label}");
        let _ = writeln!(out, "  rank   bleu_bm    sem_bm");
        for r in &report.per_rank {
            let _ = writeln!(out, "  {:>4} {:>9.2} {:>9.2}", r.rank + 1, r.bleu_bm, r.sem_bm);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_column_order_and_dashes_for_missing_topk() {
        let report = MetricReport {
            scorer: "x".into(),
            k: 1,
            top1: Top1Scores {
                bleu_bm: 1.0,
                bleu_mr: 2.0,
                rouge_bm: 3.0,
                rouge_mr: 4.0,
                sem_bm: 5.0,
                sem_mr: 6.0,
            },
            topk: None,
            per_rank: vec![RankScores {
                rank: 0,
                bleu_bm: 1.0,
                sem_bm: 5.0,
            }],
        };
        let text = render_table(&[("run".into(), report)]);
        let header = text.lines().next().unwrap();
        assert!(header.find("rfb-BM").unwrap() < header.find("B-BM").unwrap());
        let row = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(
            fields,
            ["run", "-", "-", "-", "-", "-", "6.00", "4.00", "2.00", "5.00", "3.00", "1.00"]
        );
    }
}
