use std::collections::HashMap;
use std::hash::Hash;

pub const DEFAULT_RRF_K: f64 = 60.0;

/// Weighted reciprocal rank fusion: `score(d) = Σ w_i / (k + rank_i(d))`
/// with 1-based ranks; a ranking that lacks `d` adds nothing. Contributions
/// are summed ranking by ranking, in input order. A missing weight counts
/// as 1. Output is by descending score, ties by ascending id.
pub fn rrf_fuse<T: Clone + Ord + Hash>(rankings: &[Vec<T>], weights: &[f64], k: f64) -> Vec<(T, f64)> {
    let mut scores: HashMap<T, f64> = HashMap::new();
    for (i, ranking) in rankings.iter().enumerate() {
        let w = weights.get(i).copied().unwrap_or(1.0);
        for (r, id) in ranking.iter().enumerate() {
            *scores.entry(id.clone()).or_insert(0.0) += w / (k + (r + 1) as f64);
        }
    }
    let mut out: Vec<(T, f64)> = scores.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}
