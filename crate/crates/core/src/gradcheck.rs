//! Finite-difference verification of the model's reverse-mode gradients.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{context_from_input, InstanceConfig, SequenceContext};
use crate::engine::{relative_error, Tape};
use crate::error::Result;
use crate::itemgraph::{GraphConfig, ItemGraph};
use crate::model::{ModelConfig, ModelParams, ParamKind, ParamVars, Variant};
use crate::trainer::{bpr_loss, loss_and_gradients, RegMode, TrainBatch, Triple};
use crate::Precision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub dim: usize,
    pub attention_rows: usize,
    pub memory_units: usize,
    pub window_len: usize,
    pub history_len: usize,
    pub users: usize,
    pub items: usize,
    pub variant: Variant,
    pub lambda: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Multiplies the reverse-mode gradient of one tensor before comparison.
    #[serde(skip)]
    pub fault: Option<(ParamKind, f64)>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            dim: 8,
            attention_rows: 3,
            memory_units: 4,
            window_len: 5,
            history_len: 7,
            users: 3,
            items: 16,
            variant: Variant::Full,
            lambda: 0.01,
            epsilon: 1e-4,
            tolerance: 1e-4,
            seed: 7,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
    pub seconds: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tensors {
            writeln!(
                f,
                "{:<4} entries={:<4} max_rel_err={:.3e} {}",
                t.name,
                t.entries,
                t.max_relative_error,
                if t.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

struct Problem {
    config: ModelConfig,
    graph: ItemGraph,
    contexts: Vec<SequenceContext>,
    pairs: Vec<(usize, u32, u32)>,
}

fn build_problem(cfg: &GradcheckConfig) -> Result<Problem> {
    let config = ModelConfig {
        dim: cfg.dim,
        attention_rows: cfg.attention_rows,
        memory_units: cfg.memory_units,
        instances: InstanceConfig {
            window_len: cfg.window_len,
            target_len: 1,
            stride: 1,
            max_history: cfg.history_len,
        },
        graph: GraphConfig::default(),
        variant: cfg.variant,
        precision: Precision::F64,
        seed: cfg.seed,
    };
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let n = cfg.items as u32;
    let len = cfg.window_len + cfg.history_len;
    let seqs: Vec<Vec<u32>> = (0..cfg.users)
        .map(|_| (0..len).map(|_| rng.gen_range(0..n)).collect())
        .collect();
    let graph = ItemGraph::build(&seqs, cfg.items, &config.graph)?;
    let contexts: Vec<SequenceContext> = seqs
        .iter()
        .enumerate()
        .map(|(u, s)| context_from_input(u as u32, s, n, &config.instances))
        .collect();
    let mut pairs = Vec::new();
    for u in 0..cfg.users {
        for _ in 0..2 {
            let j = rng.gen_range(0..n);
            let k = (j + rng.gen_range(1..n)) % n;
            pairs.push((u, j, k));
        }
    }
    Ok(Problem {
        config,
        graph,
        contexts,
        pairs,
    })
}

fn batch(p: &Problem) -> TrainBatch<'_> {
    TrainBatch {
        triples: p
            .pairs
            .iter()
            .map(|&(u, j, k)| Triple {
                context: &p.contexts[u],
                positive: j,
                negative: k,
            })
            .collect(),
    }
}

fn loss_value(p: &Problem, params: &ModelParams<f64>, lambda: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let loss = bpr_loss(&mut tape, &pv, &p.graph, &batch(p), p.config.variant, lambda, RegMode::Full)?;
    Ok(tape.value(loss).scalar())
}

/// Compares reverse-mode gradients of the full-norm BPR objective against
/// central differences, one entry at a time, for every parameter tensor.
/// The padding row of the input embeddings is fixed at zero and skipped.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let started = Instant::now();
    let problem = build_problem(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::<f64>::init(&problem.config, cfg.users, cfg.items, &mut rng)?;
    let (_, mut grads) = loss_and_gradients(
        &params,
        &problem.graph,
        &batch(&problem),
        cfg.variant,
        cfg.lambda,
        RegMode::Full,
    )?;
    if let Some((kind, factor)) = cfg.fault {
        if let Some(g) = grads.get_mut(kind.id()) {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    let mut tensors = Vec::with_capacity(ParamKind::COUNT);
    for kind in ParamKind::ALL {
        let rows = params[kind].rows();
        let cols = params[kind].cols();
        let checked_rows = if kind == ParamKind::ItemIn { rows - 1 } else { rows };
        let auto = grads.get(kind.id()).cloned();
        let mut worst = 0.0f64;
        for idx in 0..checked_rows * cols {
            let orig = params[kind].data()[idx];
            params[kind].data_mut()[idx] = orig + cfg.epsilon;
            let plus = loss_value(&problem, &params, cfg.lambda)?;
            params[kind].data_mut()[idx] = orig - cfg.epsilon;
            let minus = loss_value(&problem, &params, cfg.lambda)?;
            params[kind].data_mut()[idx] = orig;
            let fd = (plus - minus) / (2.0 * cfg.epsilon);
            let a = auto.as_ref().map_or(0.0, |g| g.data()[idx]);
            worst = worst.max(relative_error(a, fd));
        }
        tensors.push(TensorCheck {
            name: kind.name().to_string(),
            entries: checked_rows * cols,
            max_relative_error: worst,
            passed: worst < cfg.tolerance,
        });
    }
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        tensors,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_check_passes_with_one_line_per_tensor() {
        let report = run_gradcheck(&GradcheckConfig::default()).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.tensors.len(), ParamKind::COUNT);
        assert_eq!(report.to_string().lines().count(), ParamKind::COUNT);
    }

    #[test]
    fn corrupted_gate_gradient_fails() {
        let cfg = GradcheckConfig {
            fault: Some((ParamKind::Gate1, 1.01)),
            ..GradcheckConfig::default()
        };
        let report = run_gradcheck(&cfg).unwrap();
        assert!(!report.passed());
        let failed: Vec<&str> = report.tensors.iter().filter(|t| !t.passed).map(|t| t.name.as_str()).collect();
        assert_eq!(failed, vec!["Wg1"]);
    }

    #[test]
    fn every_variant_passes() {
        for variant in Variant::ALL {
            let cfg = GradcheckConfig {
                variant,
                seed: 11,
                ..GradcheckConfig::default()
            };
            let report = run_gradcheck(&cfg).unwrap();
            assert!(report.passed(), "{variant}\n{report}");
        }
    }
}
