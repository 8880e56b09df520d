use indexmap::IndexSet;

use super::filter::FilteredData;

/// Per-user chronological train/validation/test lists over dense indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub users: IndexSet<String>,
    pub items: IndexSet<String>,
    pub train: Vec<Vec<u32>>,
    pub val: Vec<Vec<u32>>,
    pub test: Vec<Vec<u32>>,
}

impl SplitDataset {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// Reserved index used to pad short windows; one past the last real item.
    pub fn padding_index(&self) -> u32 {
        self.items.len() as u32
    }

    pub fn num_interactions(&self) -> usize {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .map(Vec::len)
            .sum()
    }

    /// `train ∥ val` for one user (the test-time input sequence).
    pub fn train_val(&self, user: usize) -> Vec<u32> {
        let mut s = self.train[user].clone();
        s.extend_from_slice(&self.val[user]);
        s
    }
}

/// `(|train|, |val|, |test|)` for a sequence of length `n`:
/// `floor(0.7n)`, `floor(0.8n) - floor(0.7n)`, `n - floor(0.8n)`.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = 7 * n / 10;
    let train_val = 8 * n / 10;
    (train, train_val - train, n - train_val)
}

/// Splits every user's sequence into earliest 70% / next 10% / last 20%.
pub fn chronological_split(data: FilteredData) -> SplitDataset {
    let m = data.users.len();
    let mut train = vec![Vec::new(); m];
    let mut val = vec![Vec::new(); m];
    let mut test = vec![Vec::new(); m];
    for seq in data.sequences {
        let u = seq.user_index as usize;
        let (a, b, _) = split_sizes(seq.items.len());
        test[u] = seq.items[a + b..].to_vec();
        val[u] = seq.items[a..a + b].to_vec();
        let mut items = seq.items;
        items.truncate(a);
        train[u] = items;
    }
    SplitDataset {
        users: data.users,
        items: data.items,
        train,
        val,
        test,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::filter::{FilterCounts, UserSequence};
    use proptest::prelude::*;

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(10), (7, 1, 2));
        assert_eq!(split_sizes(20), (14, 2, 4));
        assert_eq!(split_sizes(13), (9, 1, 3));
    }

    proptest! {
        #[test]
        fn split_concatenates_to_the_sequence(items in proptest::collection::vec(0u32..30, 10..80)) {
            let n = items.len();
            let data = FilteredData {
                users: ["u".to_string()].into_iter().collect(),
                items: (0..30).map(|i| i.to_string()).collect(),
                sequences: vec![UserSequence { user_index: 0, items: items.clone() }],
                counts: FilterCounts::default(),
            };
            let split = chronological_split(data);
            let (a, b, c) = split_sizes(n);
            prop_assert_eq!(split.train[0].len(), a);
            prop_assert_eq!(split.val[0].len(), b);
            prop_assert_eq!(split.test[0].len(), c);
            // floor formulas computed in floating point as an independent route
            prop_assert_eq!(a, (0.7 * n as f64 + 1e-9).floor() as usize);
            prop_assert_eq!(a + b, (0.8 * n as f64 + 1e-9).floor() as usize);
            let mut joined = split.train_val(0);
            joined.extend_from_slice(&split.test[0]);
            prop_assert_eq!(joined, items);
        }
    }
}
