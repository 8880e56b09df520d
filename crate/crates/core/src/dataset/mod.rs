//! Interaction logs to per-user chronological splits and sliding-window
//! training instances.

mod filter;
mod instances;
mod parse;
mod split;
mod store;

pub use filter::{filter_and_index, FilterConfig, FilterCounts, FilteredData, UserSequence};
pub use instances::{
    context_from_input, make_training_instances, sequence_instances, InstanceConfig,
    SequenceContext, TrainingInstance,
};
pub use parse::{parse_interactions, Interaction, ParseConfig, ParseOutcome};
pub use split::{chronological_split, split_sizes, SplitDataset};
pub use store::{
    decode_dataset, encode_dataset, read_dataset, write_dataset, DatasetStats, DATASET_MAGIC,
    DATASET_VERSION,
};
