//! Top-K ranking evaluation over all unseen items.

mod metrics;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{ndcg_at_k, recall_at_k};

use crate::dataset::{context_from_input, SequenceContext, SplitDataset};
use crate::engine::Tape;
use crate::error::{Error, Result};
use crate::itemgraph::ItemGraph;
use crate::model::{user_representation, ModelConfig, ModelParams, ParamKind, ParamVars, Variant};
use crate::real::Real;

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Input = train, ground truth = validation items.
    Val,
    /// Input = train ∥ val, ground truth = test items.
    Test,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "val" | "valid" | "validation" => Ok(EvalMode::Val),
            "test" => Ok(EvalMode::Test),
            _ => Err(Error::Config(format!("unknown split `{s}` (expected val or test)"))),
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Val => "val",
            EvalMode::Test => "test",
        })
    }
}

/// Input sequence, ground truth, and the seen items excluded from ranking.
pub struct UserTask {
    pub input: Vec<u32>,
    pub relevant: HashSet<u32>,
}

pub fn user_task(split: &SplitDataset, user: usize, mode: EvalMode) -> UserTask {
    let (input, truth) = match mode {
        EvalMode::Val => (split.train[user].clone(), &split.val[user]),
        EvalMode::Test => (split.train_val(user), &split.test[user]),
    };
    UserTask {
        input,
        relevant: truth.iter().copied().collect(),
    }
}

/// Scores of every real item for a context.
pub fn score_all<T: Real>(
    params: &ModelParams<T>,
    graph: &ItemGraph,
    ctx: &SequenceContext,
    variant: Variant,
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let rep = user_representation(&mut tape, &pv, graph, ctx, variant)?;
    let rep = tape.value(rep).data();
    let q = &params[ParamKind::ItemOut];
    Ok((0..q.rows())
        .map(|j| q.row(j).iter().zip(rep).map(|(&a, &b)| a * b).sum())
        .collect())
}

/// Descending score, ties by ascending item index.
fn rank_order<T: Real>(scores: &[T]) -> impl Fn(&u32, &u32) -> Ordering + '_ {
    move |&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// Candidates (all items not in `exclude`) ordered by score; truncated to
/// `limit` when given.
pub fn rank_candidates<T: Real>(scores: &[T], exclude: &HashSet<u32>, limit: Option<usize>) -> Vec<u32> {
    let mut cands: Vec<u32> = (0..scores.len() as u32).filter(|i| !exclude.contains(i)).collect();
    let cmp = rank_order(scores);
    if let Some(k) = limit {
        if k < cands.len() {
            if k == 0 {
                return Vec::new();
            }
            cands.select_nth_unstable_by(k - 1, &cmp);
            cands.truncate(k);
        }
    }
    cands.sort_unstable_by(cmp);
    cands
}

/// Full ranking of a user's candidates for the given mode.
pub fn rank_items<T: Real>(
    params: &ModelParams<T>,
    graph: &ItemGraph,
    split: &SplitDataset,
    config: &ModelConfig,
    user: usize,
    mode: EvalMode,
) -> Result<Vec<u32>> {
    let task = user_task(split, user, mode);
    let ctx = context_from_input(user as u32, &task.input, split.padding_index(), &config.instances);
    let scores = score_all(params, graph, &ctx, config.variant)?;
    let seen: HashSet<u32> = task.input.iter().copied().collect();
    Ok(rank_candidates(&scores, &seen, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: u32,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub split: EvalMode,
    pub variant: Variant,
    pub checkpoint: Option<String>,
    pub evaluated_users: usize,
    /// Users without ground truth (or without input), excluded from the averages.
    pub skipped_users: usize,
    /// Users with more relevant items than `k`; their recall cannot reach 1.
    pub users_with_more_relevant_than_k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub per_user: Vec<UserMetrics>,
}

impl EvalReport {
    /// Macro averages over per-user metrics.
    pub fn from_users(k: usize, split: EvalMode, variant: Variant, per_user: Vec<UserMetrics>, skipped: usize, over_k: usize) -> Self {
        let n = per_user.len();
        let mean = |f: fn(&UserMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                per_user.iter().map(f).sum::<f64>() / n as f64
            }
        };
        EvalReport {
            k,
            split,
            variant,
            checkpoint: None,
            evaluated_users: n,
            skipped_users: skipped,
            users_with_more_relevant_than_k: over_k,
            recall: mean(|u| u.recall),
            ndcg: mean(|u| u.ndcg),
            per_user,
        }
    }

    pub fn write_per_user_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "user,recall,ndcg")?;
        for u in &self.per_user {
            writeln!(out, "{},{},{}", u.user, u.recall, u.ndcg)?;
        }
        Ok(())
    }
}

/// Recall@k and NDCG@k macro-averaged over users with nonempty ground truth.
pub fn evaluate<T: Real>(
    params: &ModelParams<T>,
    split: &SplitDataset,
    graph: &ItemGraph,
    config: &ModelConfig,
    mode: EvalMode,
    k: usize,
) -> Result<EvalReport> {
    if params.num_users() != split.num_users() || params.num_items() != split.num_items() {
        return Err(Error::Incompatible(format!(
            "model covers {} users / {} items but the dataset has {} / {}",
            params.num_users(),
            params.num_items(),
            split.num_users(),
            split.num_items()
        )));
    }
    let pad = split.padding_index();
    let results: Vec<Option<(UserMetrics, bool)>> = (0..split.num_users())
        .into_par_iter()
        .map(|u| -> Result<_> {
            let task = user_task(split, u, mode);
            if task.relevant.is_empty() || task.input.is_empty() {
                return Ok(None);
            }
            let ctx = context_from_input(u as u32, &task.input, pad, &config.instances);
            let scores = score_all(params, graph, &ctx, config.variant)?;
            let seen: HashSet<u32> = task.input.iter().copied().collect();
            let top = rank_candidates(&scores, &seen, Some(k));
            let recall = recall_at_k(&top, &task.relevant, k).expect("nonempty");
            let ndcg = ndcg_at_k(&top, &task.relevant, k).expect("nonempty");
            Ok(Some((
                UserMetrics {
                    user: u as u32,
                    recall,
                    ndcg,
                },
                task.relevant.len() > k,
            )))
        })
        .collect::<Result<_>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let over_k = results.iter().flatten().filter(|(_, over)| *over).count();
    let per_user = results.into_iter().flatten().map(|(m, _)| m).collect();
    Ok(EvalReport::from_users(k, mode, config.variant, per_user, skipped, over_k))
}
