//! Pairwise ranking (BPR) training with uniform negative sampling.

mod adam;

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};

use crate::dataset::{make_training_instances, SequenceContext, SplitDataset, TrainingInstance};
use crate::engine::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EvalMode, DEFAULT_K};
use crate::itemgraph::ItemGraph;
use crate::model::{score_items, user_representation, ModelConfig, ModelParams, ParamKind, ParamVars, Variant};
use crate::real::Real;

/// How the λ term treats the embedding tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegMode {
    /// Embedding rows used by the batch only; dense weights in full.
    TouchedRows,
    /// Full squared norms of every tensor.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lambda: f64,
    /// Number of (positive, negative) triples per update.
    pub batch_size: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Epochs without a validation Recall@10 improvement before stopping.
    pub patience: usize,
    pub reg_mode: RegMode,
    /// Record wall-clock seconds in the epoch log. Off by default so that
    /// reruns produce byte-identical logs; the field is then 0.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            lambda: 0.001,
            batch_size: 4096,
            epochs: 20,
            negatives: 1,
            adam: AdamConfig::default(),
            seed: 42,
            patience: 10,
            reg_mode: RegMode::TouchedRows,
            record_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be finite and >= 0".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be finite and >= 0".into()));
        }
        if self.batch_size == 0 || self.negatives == 0 {
            return Err(Error::Config("batch size and negatives must be >= 1".into()));
        }
        Ok(())
    }
}

/// One (context, positive, negative) training triple.
#[derive(Debug, Clone, Copy)]
pub struct Triple<'a> {
    pub context: &'a SequenceContext,
    pub positive: u32,
    pub negative: u32,
}

#[derive(Debug, Clone, Default)]
pub struct TrainBatch<'a> {
    pub triples: Vec<Triple<'a>>,
}

/// Sorted, deduplicated training items of each user.
pub fn observed_items(split: &SplitDataset) -> Vec<Vec<u32>> {
    split
        .train
        .iter()
        .map(|s| {
            let mut v = s.clone();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}

/// Uniform draw from the items in `[0, num_items)` not in `observed`
/// (sorted, deduplicated), by rejection.
pub fn sample_negative<R: Rng + ?Sized>(observed: &[u32], num_items: usize, rng: &mut R) -> Result<u32> {
    let seen = observed.iter().filter(|&&i| (i as usize) < num_items).count();
    if seen >= num_items {
        return Err(Error::Sampling(format!(
            "user has interacted with all {num_items} items; no negative exists"
        )));
    }
    loop {
        let k = rng.gen_range(0..num_items as u32);
        if observed.binary_search(&k).is_err() {
            return Ok(k);
        }
    }
}

/// Builds the triples of a set of instances: every non-pad target spawns
/// `negatives` triples, each with its own sampled negative.
pub fn make_batch<'a, R: Rng>(
    instances: &[&'a TrainingInstance],
    observed: &[Vec<u32>],
    num_items: usize,
    negatives: usize,
    rng: &mut R,
) -> Result<TrainBatch<'a>> {
    let pad = num_items as u32;
    let mut triples = Vec::new();
    for inst in instances {
        for &j in inst.targets.iter().filter(|&&j| j != pad) {
            for _ in 0..negatives {
                let k = sample_negative(&observed[inst.context.user as usize], num_items, rng)?;
                triples.push(Triple {
                    context: &inst.context,
                    positive: j,
                    negative: k,
                });
            }
        }
    }
    Ok(TrainBatch { triples })
}

fn touched_input_rows(graph: &ItemGraph, ctx: &SequenceContext, variant: Variant, rows: &mut BTreeSet<usize>) -> Result<()> {
    if variant == Variant::Mf {
        return Ok(());
    }
    for i in ctx.real_window() {
        rows.insert(i as usize);
        for &(k, _) in graph.neighbors(i)? {
            rows.insert(k as usize);
        }
    }
    if variant.uses_long_term() {
        rows.extend(ctx.history.iter().map(|&i| i as usize));
    }
    Ok(())
}

/// `mean -ln σ(m)` over the entries of the margin columns.
pub fn ranking_term<T: Real>(tape: &mut Tape<'_, T>, margins: &[Var]) -> Result<Var> {
    let mut count = 0;
    let mut sums = Vec::with_capacity(margins.len());
    for &m in margins {
        count += tape.value(m).len();
        let ll = tape.log_sigmoid(m)?;
        sums.push(tape.sum(ll)?);
    }
    if count == 0 {
        return Err(Error::Contract("no margins".into()));
    }
    let total = tape.add_n(&sums)?;
    tape.scale(total, -1.0 / count as f64)
}

/// Records the batch objective on `tape`:
/// `mean_t -ln σ(r̂_j - r̂_k) + λ Σ ‖W‖²` over all parameter tensors
/// (embedding tables restricted to touched rows under [`RegMode::TouchedRows`]).
pub fn bpr_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    pv: &ParamVars,
    graph: &ItemGraph,
    batch: &TrainBatch<'_>,
    variant: Variant,
    lambda: f64,
    reg_mode: RegMode,
) -> Result<Var> {
    if batch.triples.is_empty() {
        return Err(Error::Contract("empty training batch".into()));
    }
    let mut margins = Vec::new();
    let mut users = BTreeSet::new();
    let mut out_rows = BTreeSet::new();
    let mut in_rows = BTreeSet::new();
    let mut start = 0;
    while start < batch.triples.len() {
        let ctx = batch.triples[start].context;
        let mut end = start + 1;
        while end < batch.triples.len() && std::ptr::eq(batch.triples[end].context, ctx) {
            end += 1;
        }
        let group = &batch.triples[start..end];
        let g = group.len();
        let items: Vec<u32> = group
            .iter()
            .map(|t| t.positive)
            .chain(group.iter().map(|t| t.negative))
            .collect();
        let rep = user_representation(tape, pv, graph, ctx, variant)?;
        let scores = score_items(tape, pv, rep, &items)?;
        let pos_idx: Vec<usize> = (0..g).collect();
        let neg_idx: Vec<usize> = (g..2 * g).collect();
        let pos = tape.gather_rows(scores, &pos_idx)?;
        let neg = tape.gather_rows(scores, &neg_idx)?;
        margins.push(tape.sub(pos, neg)?);

        if lambda > 0.0 && reg_mode == RegMode::TouchedRows {
            users.insert(ctx.user as usize);
            out_rows.extend(items.iter().map(|&i| i as usize));
            touched_input_rows(graph, ctx, variant, &mut in_rows)?;
        }
        start = end;
    }
    let ranking = ranking_term(tape, &margins)?;
    if lambda == 0.0 {
        return Ok(ranking);
    }

    let mut norms = Vec::with_capacity(ParamKind::COUNT);
    for kind in ParamKind::ALL {
        let var = pv.get(kind);
        let rows = match (reg_mode, kind) {
            (RegMode::TouchedRows, ParamKind::UserEmb) => Some(&users),
            (RegMode::TouchedRows, ParamKind::ItemOut) => Some(&out_rows),
            (RegMode::TouchedRows, ParamKind::ItemIn) => Some(&in_rows),
            _ => None,
        };
        let norm = match rows {
            Some(rows) if rows.is_empty() => continue,
            Some(rows) => {
                let idx: Vec<usize> = rows.iter().copied().collect();
                let picked = tape.gather_rows(var, &idx)?;
                tape.sum_squares(picked)?
            }
            None => tape.sum_squares(var)?,
        };
        norms.push(norm);
    }
    let reg = tape.add_n(&norms)?;
    let reg = tape.scale(reg, lambda)?;
    tape.add(ranking, reg)
}

/// Loss value and parameter gradients for one batch. The padding row of
/// the input-embedding gradient is zeroed.
pub fn loss_and_gradients<T: Real>(
    params: &ModelParams<T>,
    graph: &ItemGraph,
    batch: &TrainBatch<'_>,
    variant: Variant,
    lambda: f64,
    reg_mode: RegMode,
) -> Result<(f64, Gradients<T>)> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let loss = bpr_loss(&mut tape, &pv, graph, batch, variant, lambda, reg_mode)?;
    let value = tape.value(loss).scalar().as_f64();
    if !value.is_finite() {
        return Ok((value, Gradients::default_empty()));
    }
    let mut grads = tape.backward(loss)?;
    if let Some(g) = grads.get_mut(ParamKind::ItemIn.id()) {
        let pad = params.num_items();
        for v in g.row_mut(pad) {
            *v = T::zero();
        }
    }
    Ok((value, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Triple-weighted mean batch objective.
    pub mean_loss: f64,
    pub seconds: f64,
    pub batches: usize,
    pub triples: usize,
}

/// Training state carried across epochs.
pub struct Trainer<'d, T: Real> {
    pub params: ModelParams<T>,
    optimizer: Adam<T>,
    rng: ChaCha8Rng,
    instances: &'d [TrainingInstance],
    observed: Vec<Vec<u32>>,
    graph: &'d ItemGraph,
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
}

impl<'d, T: Real> Trainer<'d, T> {
    pub fn new(
        params: ModelParams<T>,
        instances: &'d [TrainingInstance],
        observed: Vec<Vec<u32>>,
        graph: &'d ItemGraph,
        model: ModelConfig,
        train: TrainConfig,
    ) -> Result<Self> {
        train.validate()?;
        let optimizer = Adam::new(train.adam, &params);
        let rng = ChaCha8Rng::seed_from_u64(train.seed);
        Ok(Trainer {
            params,
            optimizer,
            rng,
            instances,
            observed,
            graph,
            model,
            train,
            epoch: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over the shuffled instances with one optimizer step per batch.
    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        if self.instances.is_empty() {
            return Err(Error::Degenerate("no training instances".into()));
        }
        self.epoch += 1;
        let started = Instant::now();
        let mut order: Vec<usize> = (0..self.instances.len()).collect();
        order.shuffle(&mut self.rng);
        let per_batch = (self.train.batch_size / self.model.instances.target_len.max(1)).max(1);
        let num_items = self.params.num_items();

        let mut weighted = 0.0;
        let mut triples = 0usize;
        let mut batches = 0usize;
        for chunk in order.chunks(per_batch) {
            let insts: Vec<&TrainingInstance> = chunk.iter().map(|&i| &self.instances[i]).collect();
            let batch = make_batch(&insts, &self.observed, num_items, self.train.negatives, &mut self.rng)?;
            if batch.triples.is_empty() {
                continue;
            }
            let (loss, grads) = loss_and_gradients(
                &self.params,
                self.graph,
                &batch,
                self.model.variant,
                self.train.lambda,
                self.train.reg_mode,
            )?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.epoch,
                    batch: batches,
                    loss,
                });
            }
            self.optimizer.step(&mut self.params, &grads, self.train.learning_rate);
            self.params.zero_padding_row();
            weighted += loss * batch.triples.len() as f64;
            triples += batch.triples.len();
            batches += 1;
        }
        Ok(EpochStats {
            mean_loss: if triples > 0 { weighted / triples as f64 } else { 0.0 },
            seconds: started.elapsed().as_secs_f64(),
            batches,
            triples,
        })
    }
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_recall10: f64,
    pub val_ndcg10: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult<T: Real> {
    /// Parameters from the epoch with the best validation Recall@10
    /// (the initial parameters when no epoch ran).
    pub params: ModelParams<T>,
    pub log: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Trains from a fresh initialization, validating after every epoch and
/// keeping the best parameters. Each epoch record is also written to
/// `log_sink` as one JSON line.
pub fn fit<T: Real>(
    split: &SplitDataset,
    graph: &ItemGraph,
    model: &ModelConfig,
    train: &TrainConfig,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<FitResult<T>> {
    model.validate()?;
    train.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(model.seed);
    let params = ModelParams::<T>::init(model, split.num_users(), split.num_items(), &mut init_rng)?;
    if train.epochs == 0 {
        return Ok(FitResult {
            params,
            log: Vec::new(),
            best_epoch: None,
        });
    }
    let instances = make_training_instances(split, &model.instances);
    log::info!("{} training instances over {} users", instances.len(), split.num_users());
    let mut trainer = Trainer::new(params, &instances, observed_items(split), graph, model.clone(), train.clone())?;

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut stale = 0usize;
    for _ in 0..train.epochs {
        let started = Instant::now();
        let stats = trainer.train_epoch()?;
        let report = evaluate(&trainer.params, split, graph, model, EvalMode::Val, DEFAULT_K)?;
        let epoch = trainer.epochs_done();
        let record = EpochRecord {
            epoch,
            train_loss: stats.mean_loss,
            val_recall10: report.recall,
            val_ndcg10: report.ndcg,
            seconds: if train.record_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        log::info!(
            "epoch {epoch}: loss {:.6} val R@10 {:.4} N@10 {:.4}",
            record.train_loss,
            record.val_recall10,
            record.val_ndcg10
        );
        if let Some(sink) = log_sink.as_deref_mut() {
            serde_json::to_writer(&mut *sink, &record)?;
            writeln!(sink).map_err(|e| Error::io("<training log>", e))?;
        }
        log.push(record);

        if best.as_ref().is_none_or(|(r, _, _)| report.recall > *r) {
            best = Some((report.recall, epoch, trainer.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= train.patience {
                log::info!("early stop after {epoch} epochs");
                break;
            }
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(FitResult {
        params,
        log,
        best_epoch: Some(best_epoch),
    })
}
