//! Memory-augmented graph neural network (MA-GNN) for sequential
//! recommendation: preprocessing, item graph, model, BPR training and
//! Top-K evaluation.

mod binio;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod gradcheck;
pub mod itemgraph;
pub mod model;
pub mod real;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use real::{Precision, Real};
