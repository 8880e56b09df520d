use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::SplitDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceConfig {
    /// Short-term window length |L|.
    pub window_len: usize,
    /// Number of targets |T| following each window.
    pub target_len: usize,
    pub stride: usize,
    /// Cap on the history preceding the window.
    pub max_history: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            window_len: 5,
            target_len: 3,
            stride: 1,
            max_history: 20,
        }
    }
}

/// What the model sees for one user at one position: the short-term window
/// (left-padded, with a mask of real entries) and the preceding history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceContext {
    pub user: u32,
    pub window: Vec<u32>,
    pub window_mask: Vec<bool>,
    /// Oldest first; never contains the padding index.
    pub history: Vec<u32>,
}

impl SequenceContext {
    /// The non-pad window items, in order.
    pub fn real_window(&self) -> impl Iterator<Item = u32> + '_ {
        self.window
            .iter()
            .zip(&self.window_mask)
            .filter(|(_, &m)| m)
            .map(|(&i, _)| i)
    }

    pub fn real_window_len(&self) -> usize {
        self.window_mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub context: SequenceContext,
    pub targets: Vec<u32>,
}

fn padded(seq: &[u32], len: usize, pad: u32) -> (Vec<u32>, usize) {
    let n_pad = len.saturating_sub(seq.len());
    let mut out = vec![pad; n_pad];
    out.extend_from_slice(seq);
    (out, n_pad)
}

/// All sliding windows over one user's training sequence.
pub fn sequence_instances(
    user: u32,
    seq: &[u32],
    pad: u32,
    cfg: &InstanceConfig,
) -> Vec<TrainingInstance> {
    let span = cfg.window_len + cfg.target_len;
    let (s, n_pad) = padded(seq, span, pad);
    let stride = cfg.stride.max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start + span <= s.len() {
        let window = s[start..start + cfg.window_len].to_vec();
        let window_mask: Vec<bool> = (start..start + cfg.window_len).map(|p| p >= n_pad).collect();
        let real_start = start.max(n_pad);
        let history_start = real_start.saturating_sub(cfg.max_history).max(n_pad);
        let history = s[history_start..real_start].to_vec();
        let targets = s[start + cfg.window_len..start + span].to_vec();
        if window_mask.iter().any(|&m| m) {
            out.push(TrainingInstance {
                context: SequenceContext {
                    user,
                    window,
                    window_mask,
                    history,
                },
                targets,
            });
        }
        start += stride;
    }
    out
}

/// Instances for every user's training split, ordered by user index.
pub fn make_training_instances(split: &SplitDataset, cfg: &InstanceConfig) -> Vec<TrainingInstance> {
    let pad = split.padding_index();
    split
        .train
        .par_iter()
        .enumerate()
        .map(|(u, seq)| sequence_instances(u as u32, seq, pad, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Context for predicting what follows `input`: the last |L| items as the
/// window (left-padded) and up to `max_history` items before them.
pub fn context_from_input(user: u32, input: &[u32], pad: u32, cfg: &InstanceConfig) -> SequenceContext {
    let split_at = input.len().saturating_sub(cfg.window_len);
    let (window, n_pad) = padded(&input[split_at..], cfg.window_len, pad);
    let window_mask = (0..cfg.window_len).map(|p| p >= n_pad).collect();
    let history = input[split_at.saturating_sub(cfg.max_history)..split_at].to_vec();
    SequenceContext {
        user,
        window,
        window_mask,
        history,
    }
}
