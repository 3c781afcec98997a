//! Character- and span-based retrieval metrics.

use super::EvalError;
use crate::span::{intersection_len, merge_spans, CharSpan};

fn total_len(spans: &[CharSpan]) -> usize {
    spans.iter().map(CharSpan::len).sum()
}

fn check(truth: &[CharSpan], k: usize) -> Result<(), EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if truth.iter().all(CharSpan::is_empty) {
        return Err(EvalError::EmptyGroundTruth);
    }
    Ok(())
}

/// Precision and recall over characters of the top `k` retrieved spans.
/// Characters covered by several retrieved spans count once.
pub fn char_pr_at_k(retrieved: &[CharSpan], truth: &[CharSpan], k: usize) -> Result<(f64, f64), EvalError> {
    check(truth, k)?;
    let top = merge_spans(&retrieved[..k.min(retrieved.len())]);
    let truth = merge_spans(truth);
    let hit = intersection_len(&top, &truth) as f64;
    let got = total_len(&top);
    let precision = if got == 0 { 0.0 } else { hit / got as f64 };
    Ok((precision, hit / total_len(&truth) as f64))
}

/// Hit-based precision and recall: a retrieved span is a hit when it
/// overlaps any truth span; recall is the share of truth spans touched by
/// at least one of the top `k`.
pub fn span_pr_at_k(retrieved: &[CharSpan], truth: &[CharSpan], k: usize) -> Result<(f64, f64), EvalError> {
    check(truth, k)?;
    let top = &retrieved[..k.min(retrieved.len())];
    let truth: Vec<CharSpan> = truth.iter().copied().filter(|t| !t.is_empty()).collect();
    let hits = top.iter().filter(|r| truth.iter().any(|t| r.overlaps(t))).count();
    let precision = if top.is_empty() { 0.0 } else { hits as f64 / top.len() as f64 };
    let found = truth.iter().filter(|t| top.iter().any(|r| r.overlaps(t))).count();
    Ok((precision, found as f64 / truth.len() as f64))
}

/// Ground truth as retrieval output.
pub fn perfect_oracle(truth: &[CharSpan]) -> Vec<CharSpan> {
    truth.to_vec()
}

/// Mean total characters in the top `k` spans of each result list, for
/// each `k` in the grid. No results gives zeros.
pub fn char_volume_stats(results: &[Vec<CharSpan>], k_grid: &[usize]) -> Vec<(usize, f64)> {
    k_grid
        .iter()
        .map(|&k| {
            if results.is_empty() {
                return (k, 0.0);
            }
            let total: usize = results.iter().map(|r| total_len(&r[..k.min(r.len())])).sum();
            (k, total as f64 / results.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(a: usize, b: usize) -> CharSpan {
        CharSpan::new(a, b)
    }

    #[test]
    fn char_examples() {
        assert_eq!(char_pr_at_k(&[s(15, 25)], &[s(10, 20)], 1).unwrap(), (0.5, 0.5));
        assert_eq!(char_pr_at_k(&[s(10, 20)], &[s(10, 20)], 1).unwrap(), (1.0, 1.0));
        assert_eq!(char_pr_at_k(&[s(30, 40)], &[s(10, 20)], 1).unwrap(), (0.0, 0.0));
        assert_eq!(char_pr_at_k(&[], &[s(10, 20)], 3).unwrap(), (0.0, 0.0));
        assert!(matches!(char_pr_at_k(&[s(1, 2)], &[], 1), Err(EvalError::EmptyGroundTruth)));
        assert!(matches!(char_pr_at_k(&[s(1, 2)], &[s(1, 2)], 0), Err(EvalError::InvalidK)));
    }

    #[test]
    fn overlapping_retrievals_count_once() {
        let (p, r) = char_pr_at_k(&[s(10, 20), s(10, 20)], &[s(10, 20)], 2).unwrap();
        assert_eq!((p, r), (1.0, 1.0));
    }

    #[test]
    fn span_examples() {
        assert_eq!(span_pr_at_k(&[s(10, 20)], &[s(10, 20)], 1).unwrap(), (1.0, 1.0));
        assert_eq!(span_pr_at_k(&[s(19, 40), s(50, 60)], &[s(10, 20)], 2).unwrap(), (0.5, 1.0));
    }

    #[test]
    fn sub_span_diverges() {
        let truth = [s(100, 200)];
        let got = [s(120, 150)];
        let (_, rc) = char_pr_at_k(&got, &truth, 1).unwrap();
        let (_, rs) = span_pr_at_k(&got, &truth, 1).unwrap();
        assert_eq!(rs, 1.0);
        assert!(rc < 1.0);
    }

    #[test]
    fn oracle_recall_on_three_spans() {
        let truth = [s(0, 10), s(20, 50), s(60, 120)];
        let got = perfect_oracle(&truth);
        let (p, r) = char_pr_at_k(&got, &truth, 1).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(r, 10.0 / 100.0);
    }

    #[test]
    fn volume_examples() {
        assert_eq!(char_volume_stats(&[vec![s(0, 100), s(100, 300)]], &[2]), vec![(2, 300.0)]);
        assert_eq!(char_volume_stats(&[vec![s(0, 100)], vec![s(0, 300)]], &[1]), vec![(1, 200.0)]);
        assert_eq!(char_volume_stats(&[], &[1, 2]), vec![(1, 0.0), (2, 0.0)]);
    }
}
