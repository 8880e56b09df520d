mod common;

use std::collections::HashSet;

use common::{brute_ndcg, brute_rank, brute_recall, graph_oracle_cases, metric_oracle_cases};
use magnn::dataset::context_from_input;
use magnn::evaluator::{
    evaluate, ndcg_at_k, rank_candidates, rank_items, recall_at_k, score_all, user_task, EvalMode,
};
use magnn::itemgraph::ItemGraph;
use magnn::model::{ModelConfig, ModelParams, Variant};
use magnn::synthetic::{synthetic_split, SyntheticConfig};
use magnn::Precision;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn item_graph_matches_brute_force_on_100_instances() {
    graph_oracle_cases(100).unwrap();
}

#[test]
fn ranking_and_metrics_match_brute_force_on_100_cases() {
    metric_oracle_cases(100).unwrap();
}

fn small_model(variant: Variant) -> (magnn::dataset::SplitDataset, ItemGraph, ModelConfig, ModelParams<f64>) {
    let split = synthetic_split(&SyntheticConfig {
        users: 10,
        items: 30,
        length: 20,
        seed: 3,
        ..SyntheticConfig::default()
    });
    let cfg = ModelConfig {
        dim: 8,
        attention_rows: 2,
        memory_units: 3,
        variant,
        precision: Precision::F64,
        ..ModelConfig::default()
    };
    let graph = ItemGraph::build(&split.train, split.num_items(), &cfg.graph).unwrap();
    let params = ModelParams::init(&cfg, 10, 30, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    (split, graph, cfg, params)
}

#[test]
fn ten_user_report_is_the_mean_of_oracle_per_user_values() {
    for variant in [Variant::Mf, Variant::Full] {
        let (split, graph, cfg, params) = small_model(variant);
        for mode in [EvalMode::Val, EvalMode::Test] {
            let report = evaluate(&params, &split, &graph, &cfg, mode, 10).unwrap();
            let mut recalls = Vec::new();
            let mut ndcgs = Vec::new();
            for u in 0..10 {
                let task = user_task(&split, u, mode);
                let ctx = context_from_input(u as u32, &task.input, 30, &cfg.instances);
                let scores: Vec<f64> = score_all(&params, &graph, &ctx, variant).unwrap();
                let seen: HashSet<u32> = task.input.iter().copied().collect();
                let ranked = brute_rank(&scores, &seen);
                assert_eq!(rank_items(&params, &graph, &split, &cfg, u, mode).unwrap(), ranked);
                recalls.push(brute_recall(&ranked, &task.relevant, 10));
                ndcgs.push(brute_ndcg(&ranked, &task.relevant, 10));
            }
            assert_eq!(report.evaluated_users, 10);
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!((report.recall - mean(&recalls)).abs() < 1e-15);
            assert!((report.ndcg - mean(&ndcgs)).abs() < 1e-15);
            for (m, (r, n)) in report.per_user.iter().zip(recalls.iter().zip(&ndcgs)) {
                assert_eq!((m.recall, m.ndcg), (*r, *n));
            }
        }
    }
}

#[test]
fn test_mode_excludes_train_and_val_items() {
    let (split, graph, cfg, params) = small_model(Variant::Full);
    for u in 0..10 {
        let ranked = rank_items(&params, &graph, &split, &cfg, u, EvalMode::Test).unwrap();
        let seen: HashSet<u32> = split.train_val(u).into_iter().collect();
        assert_eq!(ranked.len(), 30 - seen.len());
        assert!(ranked.iter().all(|i| !seen.contains(i)));
        let ranked_val = rank_items(&params, &graph, &split, &cfg, u, EvalMode::Val).unwrap();
        let train: HashSet<u32> = split.train[u].iter().copied().collect();
        assert_eq!(ranked_val.len(), 30 - train.len());
    }
}

#[test]
fn users_without_ground_truth_are_skipped_and_counted() {
    let (mut split, graph, cfg, params) = small_model(Variant::Mf);
    split.test[2].clear();
    split.test[7].clear();
    let report = evaluate(&params, &split, &graph, &cfg, EvalMode::Test, 10).unwrap();
    assert_eq!((report.evaluated_users, report.skipped_users), (8, 2));
    assert!(report.per_user.iter().all(|m| m.user != 2 && m.user != 7));
}

#[test]
fn single_user_report_equals_that_user() {
    let (mut split, graph, cfg, params) = small_model(Variant::Full);
    for u in 1..10 {
        split.test[u].clear();
    }
    let r = evaluate(&params, &split, &graph, &cfg, EvalMode::Test, 10).unwrap();
    assert_eq!(r.evaluated_users, 1);
    assert_eq!((r.recall, r.ndcg), (r.per_user[0].recall, r.per_user[0].ndcg));
}

#[test]
fn closed_form_metric_values() {
    let rel: HashSet<u32> = [3].into_iter().collect();
    let n = ndcg_at_k(&[9, 3, 4], &rel, 10).unwrap();
    assert!((n - 1.0 / 3f64.log2()).abs() < 1e-9);
    let all: HashSet<u32> = [0, 1, 2].into_iter().collect();
    assert_eq!(recall_at_k(&[0, 1, 2], &all, 10), Some(1.0));
    assert_eq!(ndcg_at_k(&[0, 1, 2], &all, 10), Some(1.0));
}

proptest! {
    #[test]
    fn increasing_transform_keeps_the_ranking(
        scores in proptest::collection::vec(-5.0f64..5.0, 1..40),
        excl in proptest::collection::vec(any::<bool>(), 40),
    ) {
        let exclude: HashSet<u32> = (0..scores.len() as u32).filter(|&i| excl[i as usize]).collect();
        let moved: Vec<f64> = scores.iter().map(|s| (s * 0.5).exp() + 3.0).collect();
        prop_assert_eq!(rank_candidates(&scores, &exclude, None), rank_candidates(&moved, &exclude, None));
    }

    #[test]
    fn metrics_bounded_and_ignore_items_below_k(
        ranked_len in 1usize..30,
        rel in proptest::collection::hash_set(0u32..40, 1..12),
        k in 1usize..15,
    ) {
        let ranked: Vec<u32> = (0..ranked_len as u32).collect();
        let r = recall_at_k(&ranked, &rel, k).unwrap();
        let n = ndcg_at_k(&ranked, &rel, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&n));
        let mut longer = ranked.clone();
        longer.insert(k.min(longer.len()), 1000);
        prop_assert_eq!(recall_at_k(&longer, &rel, k).unwrap(), r);
        prop_assert_eq!(ndcg_at_k(&longer, &rel, k).unwrap(), n);
    }

    #[test]
    fn ndcg_is_one_iff_ideal_prefix(
        rel in proptest::collection::hash_set(0u32..20, 1..8),
        perm_seed in any::<u64>(),
        k in 1usize..12,
    ) {
        use rand::seq::SliceRandom;
        let mut ranked: Vec<u32> = (0..20).collect();
        ranked.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let need = k.min(rel.len());
        let ideal = ranked[..need].iter().all(|i| rel.contains(i));
        let n = ndcg_at_k(&ranked, &rel, k).unwrap();
        prop_assert_eq!(ideal, (n - 1.0).abs() < 1e-12);
    }
}
