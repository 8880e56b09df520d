//! Row-normalized item co-occurrence graph.
//!
//! Every occurrence of item `i` at position `p` of a training sequence adds
//! one directed edge `i -> s[p + o]` for `o = 1..=lookahead` (clipped at the
//! end of the sequence, self-pairs skipped). Counts are summed over all users
//! and each row is divided by its total.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// How many subsequent items each occurrence links to.
    pub lookahead: usize,
    /// Also count the reverse edge of every extracted pair.
    pub symmetric: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            lookahead: 3,
            symmetric: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemGraph {
    num_items: usize,
    /// Sorted by neighbor index; weights sum to 1 for nonempty rows.
    rows: Vec<Vec<(u32, f64)>>,
}

impl ItemGraph {
    pub fn build(train: &[Vec<u32>], num_items: usize, config: &GraphConfig) -> Result<Self> {
        if config.lookahead == 0 {
            return Err(Error::Config("graph lookahead must be >= 1".into()));
        }
        let mut counts: Vec<BTreeMap<u32, u64>> = vec![BTreeMap::new(); num_items];
        for seq in train {
            for (p, &i) in seq.iter().enumerate() {
                if i as usize >= num_items {
                    return Err(Error::IndexOutOfRange {
                        what: "item graph source",
                        index: i as usize,
                        len: num_items,
                    });
                }
                let end = (p + 1 + config.lookahead).min(seq.len());
                for &k in &seq[p + 1..end] {
                    if k == i {
                        continue;
                    }
                    if k as usize >= num_items {
                        return Err(Error::IndexOutOfRange {
                            what: "item graph target",
                            index: k as usize,
                            len: num_items,
                        });
                    }
                    *counts[i as usize].entry(k).or_default() += 1;
                    if config.symmetric {
                        *counts[k as usize].entry(i).or_default() += 1;
                    }
                }
            }
        }
        let rows = counts
            .into_iter()
            .map(|row| {
                let total: u64 = row.values().sum();
                row.into_iter()
                    .map(|(k, c)| (k, c as f64 / total as f64))
                    .collect()
            })
            .collect();
        Ok(ItemGraph { num_items, rows })
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Normalized neighbors of `item`. The padding index (`num_items`) has none.
    pub fn neighbors(&self, item: u32) -> Result<&[(u32, f64)]> {
        let i = item as usize;
        if i == self.num_items {
            return Ok(&[]);
        }
        self.rows.get(i).map(Vec::as_slice).ok_or(Error::IndexOutOfRange {
            what: "item graph",
            index: i,
            len: self.num_items + 1,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Writes `i<TAB>k<TAB>weight` lines sorted by `(i, k)`.
    pub fn write_triples<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, w) in row {
                writeln!(out, "{i}\t{k}\t{w}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: u32 = 0;
    const B: u32 = 1;
    const C: u32 = 2;
    const D: u32 = 3;

    fn build(train: &[Vec<u32>], n: usize) -> ItemGraph {
        ItemGraph::build(train, n, &GraphConfig::default()).unwrap()
    }

    #[test]
    fn abcd_rows_by_hand() {
        let g = build(&[vec![A, B, C, D]], 4);
        let third = 1.0 / 3.0;
        assert_eq!(g.neighbors(A).unwrap(), &[(B, third), (C, third), (D, third)]);
        assert_eq!(g.neighbors(B).unwrap(), &[(C, 0.5), (D, 0.5)]);
        assert_eq!(g.neighbors(C).unwrap(), &[(D, 1.0)]);
        assert!(g.neighbors(D).unwrap().is_empty());
    }

    #[test]
    fn counts_accumulate_across_users() {
        let g = build(&[vec![A, B], vec![A, B]], 2);
        assert_eq!(g.neighbors(A).unwrap(), &[(B, 1.0)]);
    }

    #[test]
    fn self_pairs_skipped() {
        let g = build(&[vec![A, A, B]], 2);
        assert_eq!(g.neighbors(A).unwrap(), &[(B, 1.0)]);
    }

    #[test]
    fn padding_and_out_of_range() {
        let g = build(&[vec![A, B]], 2);
        assert!(g.neighbors(2).unwrap().is_empty());
        assert!(matches!(g.neighbors(3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn symmetric_flag_adds_reverse_edges() {
        let cfg = GraphConfig {
            lookahead: 1,
            symmetric: true,
        };
        let g = ItemGraph::build(&[vec![A, B, C]], 3, &cfg).unwrap();
        assert_eq!(g.neighbors(B).unwrap(), &[(A, 0.5), (C, 0.5)]);
    }

    #[test]
    fn zero_lookahead_rejected() {
        let cfg = GraphConfig {
            lookahead: 0,
            symmetric: false,
        };
        assert!(ItemGraph::build(&[vec![A]], 1, &cfg).is_err());
    }

    #[test]
    fn triples_sorted() {
        let g = build(&[vec![C, A, B]], 3);
        let mut out = Vec::new();
        g.write_triples(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0\t1\t1\n2\t0\t0.5\n2\t1\t0.5\n");
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(train in proptest::collection::vec(
            proptest::collection::vec(0u32..12, 0..15), 1..8)) {
            let g = build(&train, 12);
            for i in 0..12u32 {
                let row = g.neighbors(i).unwrap();
                prop_assert!(row.iter().all(|&(k, w)| w > 0.0 && k != i));
                if !row.is_empty() {
                    let s: f64 = row.iter().map(|&(_, w)| w).sum();
                    prop_assert!((s - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}
