//! Synthetic first-order Markov interaction data with a planted transition
//! structure, for desk-scale experiments.

use std::io::Write;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{chronological_split, FilterCounts, FilteredData, SplitDataset, UserSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub length: usize,
    /// Probability of stepping to the planted successor; otherwise the next
    /// item is uniform over all items.
    pub follow: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 200,
            items: 50,
            length: 40,
            follow: 0.9,
            seed: 0,
        }
    }
}

/// Walks over a hidden random cycle through all items: from item `i` the
/// next item is `succ(i)` with probability `follow`, else uniform.
pub fn generate_sequences(cfg: &SyntheticConfig) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cycle: Vec<u32> = (0..cfg.items as u32).collect();
    cycle.shuffle(&mut rng);
    let mut succ = vec![0u32; cfg.items];
    for (pos, &i) in cycle.iter().enumerate() {
        succ[i as usize] = cycle[(pos + 1) % cfg.items];
    }
    (0..cfg.users)
        .map(|_| {
            let mut cur = rng.gen_range(0..cfg.items as u32);
            let mut seq = Vec::with_capacity(cfg.length);
            for _ in 0..cfg.length {
                seq.push(cur);
                cur = if rng.gen_bool(cfg.follow) {
                    succ[cur as usize]
                } else {
                    rng.gen_range(0..cfg.items as u32)
                };
            }
            seq
        })
        .collect()
}

/// Generated sequences split chronologically. Item `k` of the generator
/// keeps dense index `k`.
pub fn synthetic_split(cfg: &SyntheticConfig) -> SplitDataset {
    let seqs = generate_sequences(cfg);
    let total = seqs.iter().map(Vec::len).sum();
    let data = FilteredData {
        users: (0..cfg.users).map(|u| format!("u{u}")).collect(),
        items: (0..cfg.items).map(|i| format!("i{i}")).collect::<IndexSet<_>>(),
        sequences: seqs
            .into_iter()
            .enumerate()
            .map(|(u, items)| UserSequence {
                user_index: u as u32,
                items,
            })
            .collect(),
        counts: FilterCounts {
            raw: total,
            after_rating: total,
            after_item_filter: total,
            after_user_filter: total,
        },
    };
    chronological_split(data)
}

/// Writes the sequences as a ratings CSV (`userId,movieId,rating,timestamp`),
/// every rating 5 and timestamps increasing along each sequence.
pub fn write_csv<W: Write>(seqs: &[Vec<u32>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "userId,movieId,rating,timestamp")?;
    for (u, seq) in seqs.iter().enumerate() {
        for (t, i) in seq.iter().enumerate() {
            writeln!(out, "{u},{i},5.0,{}", 1_000_000 + t)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SyntheticConfig::default();
        let a = generate_sequences(&cfg);
        assert_eq!(a.len(), 200);
        assert!(a.iter().all(|s| s.len() == 40 && s.iter().all(|&i| i < 50)));
        assert_eq!(a, generate_sequences(&cfg));
        let split = synthetic_split(&cfg);
        assert_eq!((split.num_users(), split.num_items()), (200, 50));
        assert!(split.train.iter().all(|t| t.len() == 28));
        assert!(split.val.iter().all(|t| t.len() == 4));
        assert!(split.test.iter().all(|t| t.len() == 8));
    }

    #[test]
    fn planted_successor_dominates() {
        let cfg = SyntheticConfig::default();
        let seqs = generate_sequences(&cfg);
        let mut counts = vec![vec![0usize; 50]; 50];
        for s in &seqs {
            for w in s.windows(2) {
                counts[w[0] as usize][w[1] as usize] += 1;
            }
        }
        let follow: usize = counts.iter().map(|r| *r.iter().max().unwrap()).sum();
        let all: usize = counts.iter().flatten().sum();
        assert!(follow as f64 / all as f64 > 0.85);
    }
}
