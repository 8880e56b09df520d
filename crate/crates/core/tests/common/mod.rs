//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use magnn::dataset::SequenceContext;
use magnn::engine::Tensor;
use magnn::model::{ModelParams, ParamKind, Variant};

/// Adjacency from explicit position pairs: every `(p, q)` with
/// `0 < q - p <= lookahead` and distinct items adds one count to `s[p] -> s[q]`.
pub fn brute_graph(seqs: &[Vec<u32>], num_items: usize, lookahead: usize) -> Vec<Vec<(u32, f64)>> {
    let mut counts = vec![vec![0u64; num_items]; num_items];
    for s in seqs {
        for p in 0..s.len() {
            for q in 0..s.len() {
                if q > p && q - p <= lookahead && s[p] != s[q] {
                    counts[s[p] as usize][s[q] as usize] += 1;
                }
            }
        }
    }
    counts
        .into_iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(k, &c)| (k as u32, c as f64 / total as f64))
                .collect()
        })
        .collect()
}

/// Full sort of every candidate: higher score first, then lower index.
pub fn brute_rank(scores: &[f64], exclude: &HashSet<u32>) -> Vec<u32> {
    let mut items: Vec<u32> = (0..scores.len() as u32).filter(|i| !exclude.contains(i)).collect();
    // insertion sort with an explicit comparison, no library ordering helpers
    for a in 1..items.len() {
        let mut b = a;
        while b > 0 {
            let (x, y) = (items[b - 1], items[b]);
            let better = scores[y as usize] > scores[x as usize]
                || (scores[y as usize] == scores[x as usize] && y < x);
            if !better {
                break;
            }
            items.swap(b - 1, b);
            b -= 1;
        }
    }
    items
}

pub fn brute_recall(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    let mut hits = 0;
    for (pos, item) in ranked.iter().enumerate() {
        if pos < k && relevant.contains(item) {
            hits += 1;
        }
    }
    hits as f64 / relevant.len() as f64
}

pub fn brute_ndcg(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().enumerate() {
        if pos < k && relevant.contains(item) {
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    let ideal = if relevant.len() < k { relevant.len() } else { k };
    for pos in 0..ideal {
        idcg += 1.0 / ((pos + 2) as f64).log2();
    }
    dcg / idcg
}

type Mat = Vec<Vec<f64>>;

fn mat(t: &Tensor<f64>) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn mv(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + q).collect()
}

fn tanh(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(f64::tanh).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out.iter().map(|v| v / rows.len() as f64).collect()
}

fn position(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|c| {
            let freq = 1.0 / 10000f64.powf((c - c % 2) as f64 / d as f64);
            let angle = pos as f64 * freq;
            if c % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Straight-line evaluation of the user representation `r` (score_j = q_j · r).
pub fn reference_representation(
    params: &ModelParams<f64>,
    adjacency: &[Vec<(u32, f64)>],
    ctx: &SequenceContext,
    variant: Variant,
) -> Vec<f64> {
    let p = |k: ParamKind| mat(&params[k]);
    let e = p(ParamKind::ItemIn);
    let pu = p(ParamKind::UserEmb)[ctx.user as usize].clone();
    let d = pu.len();
    let pad = params.num_items() as u32;
    let window: Vec<u32> = ctx.window.iter().copied().filter(|&i| i != pad).collect();

    let hs: Vec<Vec<f64>> = window
        .iter()
        .map(|&i| {
            let mut agg = vec![0.0; d];
            for &(k, w) in &adjacency[i as usize] {
                for c in 0..d {
                    agg[c] += w * e[k as usize][c];
                }
            }
            tanh(mv(&p(ParamKind::Gnn1), &cat(&agg, &e[i as usize])))
        })
        .collect();
    let h = mean(&hs);

    let mut rep = pu.clone();
    match variant {
        Variant::Mf => {}
        Variant::MfS => {
            let ps = tanh(mv(&p(ParamKind::Gnn2), &cat(&h, &pu)));
            rep = add(&rep, &ps);
        }
        _ => {
            let z = if ctx.history.is_empty() {
                vec![0.0; d]
            } else {
                let xs: Vec<Vec<f64>> = ctx
                    .history
                    .iter()
                    .enumerate()
                    .map(|(t, &i)| add(&e[i as usize], &position(t, d)))
                    .collect();
                let wa3 = p(ParamKind::Attn3);
                let user_part = mv(&p(ParamKind::Attn2), &pu);
                let acts: Vec<Vec<f64>> = xs
                    .iter()
                    .map(|x| tanh(add(&mv(&p(ParamKind::Attn1), x), &user_part)))
                    .collect();
                let zs: Vec<Vec<f64>> = wa3
                    .iter()
                    .map(|row| {
                        let logits: Vec<f64> = acts.iter().map(|a| row.iter().zip(a).map(|(p, q)| p * q).sum()).collect();
                        let s = softmax(&logits);
                        let mut acc = vec![0.0; d];
                        for (w, x) in s.iter().zip(&xs) {
                            for c in 0..d {
                                acc[c] += w * x[c];
                            }
                        }
                        tanh(acc)
                    })
                    .collect();
                mean(&zs)
            };
            let keys = p(ParamKind::MemKeys);
            let vals = p(ParamKind::MemValues);
            let m = keys[0].len();
            let logits: Vec<f64> = (0..m).map(|i| (0..d).map(|c| keys[c][i] * z[c]).sum()).collect();
            let a = softmax(&logits);
            let ph: Vec<f64> = (0..d).map(|c| z[c] + (0..m).map(|i| a[i] * vals[c][i]).sum::<f64>()).collect();
            let fused = if variant == Variant::MfShConcat {
                mv(&p(ParamKind::ConcatFuse), &cat(&h, &ph))
            } else {
                let pre = add(
                    &add(&mv(&p(ParamKind::Gate1), &h), &mv(&p(ParamKind::Gate2), &ph)),
                    &mv(&p(ParamKind::Gate3), &pu),
                );
                (0..d)
                    .map(|c| {
                        let g = sigmoid(pre[c]);
                        g * h[c] + (1.0 - g) * ph[c]
                    })
                    .collect()
            };
            rep = add(&rep, &fused);
        }
    }
    if variant == Variant::Full {
        let ebar = mean(&window.iter().map(|&i| e[i as usize].clone()).collect::<Vec<_>>());
        let wr = p(ParamKind::CoOccur);
        let co: Vec<f64> = (0..d).map(|j| (0..d).map(|i| wr[i][j] * ebar[i]).sum()).collect();
        rep = add(&rep, &co);
    }
    rep
}

pub fn reference_score(
    params: &ModelParams<f64>,
    adjacency: &[Vec<(u32, f64)>],
    ctx: &SequenceContext,
    variant: Variant,
    item: u32,
) -> f64 {
    let rep = reference_representation(params, adjacency, ctx, variant);
    params[ParamKind::ItemOut].row(item as usize).iter().zip(&rep).map(|(a, b)| a * b).sum()
}

/// Compares the item graph with [`brute_graph`] on `cases` random instances
/// (at most 10 users and 15 items); returns the first mismatch.
pub fn graph_oracle_cases(cases: u64) -> Result<(), String> {
    use magnn::itemgraph::{GraphConfig, ItemGraph};
    use rand::{Rng, SeedableRng};
    for case in 0..cases {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + case);
        let items = rng.gen_range(1..=15usize);
        let users = rng.gen_range(1..=10usize);
        let seqs: Vec<Vec<u32>> = (0..users)
            .map(|_| {
                let n = rng.gen_range(0..20);
                (0..n).map(|_| rng.gen_range(0..items as u32)).collect()
            })
            .collect();
        let graph = ItemGraph::build(&seqs, items, &GraphConfig::default()).map_err(|e| e.to_string())?;
        let want = brute_graph(&seqs, items, 3);
        for (i, row) in want.iter().enumerate() {
            let got = graph.neighbors(i as u32).map_err(|e| e.to_string())?;
            if got != row.as_slice() {
                return Err(format!("case {case}, item {i}: {got:?} vs {row:?}"));
            }
        }
    }
    Ok(())
}

/// Compares ranking plus Recall@K/NDCG@K with the brute-force versions on
/// `cases` random score vectors with many ties; returns the first mismatch.
pub fn metric_oracle_cases(cases: u64) -> Result<(), String> {
    use magnn::evaluator::{ndcg_at_k, rank_candidates, recall_at_k};
    use rand::{Rng, SeedableRng};
    for case in 0..cases {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2000 + case);
        let n = rng.gen_range(2..40usize);
        // coarse scores so ties are common
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 * 0.5).collect();
        let exclude: HashSet<u32> = (0..n as u32).filter(|_| rng.gen_bool(0.2)).collect();
        let relevant: HashSet<u32> = (0..n as u32).filter(|_| rng.gen_bool(0.3)).collect();
        if relevant.is_empty() {
            continue;
        }
        let k = rng.gen_range(1..15);
        let full = brute_rank(&scores, &exclude);
        let got_full = rank_candidates(&scores, &exclude, None);
        let got_top = rank_candidates(&scores, &exclude, Some(k));
        if got_full != full || got_top.as_slice() != &full[..k.min(full.len())] {
            return Err(format!("case {case}: ranking {got_full:?} vs {full:?}"));
        }
        let (r, nd) = (recall_at_k(&got_top, &relevant, k), ndcg_at_k(&got_top, &relevant, k));
        let (wr, wn) = (brute_recall(&full, &relevant, k), brute_ndcg(&full, &relevant, k));
        if r != Some(wr) || nd != Some(wn) {
            return Err(format!("case {case}: recall {r:?} vs {wr}, ndcg {nd:?} vs {wn}"));
        }
    }
    Ok(())
}
