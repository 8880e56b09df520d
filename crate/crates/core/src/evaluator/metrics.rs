use std::collections::HashSet;

/// Fraction of `relevant` items found in the first `k` entries of `ranked`.
/// `None` when `relevant` is empty (the user is skipped).
pub fn recall_at_k(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let hits = ranked.iter().take(k).filter(|i| relevant.contains(i)).count();
    Some(hits as f64 / relevant.len() as f64)
}

/// Binary-relevance NDCG@k with `1 / log2(rank + 1)` gains (1-based ranks),
/// normalized by the ideal ranking of `min(k, |relevant|)` hits.
pub fn ndcg_at_k(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .fold(0.0, |acc, (r, _)| acc + gain(r + 1));
    let idcg: f64 = (1..=k.min(relevant.len())).map(gain).sum();
    Some(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}
