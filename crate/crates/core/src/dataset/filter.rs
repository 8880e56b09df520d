use std::collections::HashMap;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use super::parse::Interaction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Minimum rating kept as positive feedback; `None` skips the check for
    /// logs that are already implicit.
    pub rating_threshold: Option<f64>,
    /// Minimum interactions per item, then per user.
    pub min_count: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            rating_threshold: Some(4.0),
            min_count: 10,
        }
    }
}

/// A user's chronologically ordered items, in dense indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequence {
    pub user_index: u32,
    pub items: Vec<u32>,
}

/// Interaction counts after each filtering stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterCounts {
    pub raw: usize,
    pub after_rating: usize,
    pub after_item_filter: usize,
    pub after_user_filter: usize,
}

/// Filtered per-user sequences plus the external↔dense index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredData {
    pub users: IndexSet<String>,
    pub items: IndexSet<String>,
    pub sequences: Vec<UserSequence>,
    pub counts: FilterCounts,
}

/// Rating threshold, then item min-count, then user min-count (one pass each).
/// Survivors get dense indices in order of first appearance in the input.
pub fn filter_and_index(interactions: &[Interaction], config: &FilterConfig) -> Result<FilteredData> {
    if interactions.is_empty() {
        return Err(Error::Degenerate("no interactions to filter".into()));
    }
    let mut counts = FilterCounts {
        raw: interactions.len(),
        ..FilterCounts::default()
    };

    let rated: Vec<&Interaction> = interactions
        .iter()
        .filter(|i| config.rating_threshold.is_none_or(|t| i.rating >= t))
        .collect();
    counts.after_rating = rated.len();

    let mut item_counts: HashMap<&str, usize> = HashMap::new();
    for i in &rated {
        *item_counts.entry(i.item_ref.as_str()).or_default() += 1;
    }
    let item_kept: Vec<&Interaction> = rated
        .into_iter()
        .filter(|i| item_counts[i.item_ref.as_str()] >= config.min_count)
        .collect();
    counts.after_item_filter = item_kept.len();

    let mut user_counts: HashMap<&str, usize> = HashMap::new();
    for i in &item_kept {
        *user_counts.entry(i.user_ref.as_str()).or_default() += 1;
    }
    let kept: Vec<&Interaction> = item_kept
        .into_iter()
        .filter(|i| user_counts[i.user_ref.as_str()] >= config.min_count)
        .collect();
    counts.after_user_filter = kept.len();

    if kept.is_empty() {
        return Err(Error::Degenerate(format!(
            "no interactions survive filtering (rating >= {:?}, min count {}); stage counts {counts:?}",
            config.rating_threshold, config.min_count
        )));
    }

    let mut users = IndexSet::new();
    let mut items = IndexSet::new();
    // (timestamp, input position, item) per user, in input order
    let mut events: Vec<Vec<(i64, usize, u32)>> = Vec::new();
    for (pos, i) in kept.iter().enumerate() {
        let (u, new_user) = users.insert_full(i.user_ref.clone());
        if new_user {
            events.push(Vec::new());
        }
        let (it, _) = items.insert_full(i.item_ref.clone());
        events[u].push((i.timestamp, pos, it as u32));
    }
    let sequences = events
        .into_iter()
        .enumerate()
        .map(|(u, mut ev)| {
            ev.sort_by_key(|&(t, pos, _)| (t, pos));
            UserSequence {
                user_index: u as u32,
                items: ev.into_iter().map(|(_, _, it)| it).collect(),
            }
        })
        .collect();

    log::info!(
        "filter: {} raw -> {} rated -> {} item-filtered -> {} kept ({} users, {} items)",
        counts.raw,
        counts.after_rating,
        counts.after_item_filter,
        counts.after_user_filter,
        users.len(),
        items.len()
    );
    Ok(FilteredData {
        users,
        items,
        sequences,
        counts,
    })
}
