use crate::error::{Error, Result};
use crate::text::Sentence;

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn f1(hyp: &Sentence, reference: &Sentence) -> f64 {
    let lcs = lcs_len(hyp.tokens(), reference.tokens()) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / hyp.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-L F1 (beta = 1), maximized over references, in `[0, 100]`.
pub fn rouge_l(hyp: &Sentence, refs: &[Sentence]) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::EmptyInput("rouge_l needs at least one reference"));
    }
    Ok(refs.iter().map(|r| f1(hyp, r)).fold(0.0, f64::max) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn s(t: &str) -> Sentence {
        Sentence::new(t)
    }

    #[test]
    fn identical_is_100() {
        assert_abs_diff_eq!(rouge_l(&s("a b c"), &[s("a b c")]).unwrap(), 100.0);
    }

    #[test]
    fn disjoint_is_0() {
        assert_eq!(rouge_l(&s("a b"), &[s("c d")]).unwrap(), 0.0);
    }

    #[test]
    fn hand_case() {
        // LCS 3, P = 3/4, R = 1, F1 = 6/7.
        assert_abs_diff_eq!(
            rouge_l(&s("a b c d"), &[s("a c d")]).unwrap(),
            600.0 / 7.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn max_over_references() {
        let v = rouge_l(&s("a b c d"), &[s("x y"), s("a c d")]).unwrap();
        assert_abs_diff_eq!(v, 600.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_hypothesis_is_zero() {
        assert_eq!(rouge_l(&s(""), &[s("a")]).unwrap(), 0.0);
    }
}
