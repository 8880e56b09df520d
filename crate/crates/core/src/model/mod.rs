//! The MA-GNN scoring model: parameters, forward composition and checkpoints.

mod checkpoint;
mod forward;
mod params;
mod positional;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, AnyParams, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use forward::{
    fuse_interests, gnn_item_repr, long_term_query, memory_read, score, score_items,
    short_term_interest, user_representation, ParamVars, ShortTerm,
};
pub use params::{ModelParams, ParamKind};
pub use positional::positional_encoding;

use crate::dataset::InstanceConfig;
use crate::error::{Error, Result};
use crate::itemgraph::GraphConfig;
use crate::real::Precision;

/// Which terms enter the final score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// General interest only: `p_u · q_j`.
    #[serde(rename = "MF")]
    Mf,
    /// Adds the short-term GNN summary `p^S · q_j`.
    #[serde(rename = "MF+S")]
    MfS,
    /// Gated fusion of short- and long-term interest.
    #[serde(rename = "MF+S+H+gating")]
    MfShGating,
    /// Linear projection of the concatenated interests instead of the gate.
    #[serde(rename = "MF+S+H+concat")]
    MfShConcat,
    /// Gated fusion plus the bilinear item co-occurrence term.
    #[serde(rename = "FULL")]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Mf,
        Variant::MfS,
        Variant::MfShGating,
        Variant::MfShConcat,
        Variant::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mf => "MF",
            Variant::MfS => "MF+S",
            Variant::MfShGating => "MF+S+H+gating",
            Variant::MfShConcat => "MF+S+H+concat",
            Variant::Full => "FULL",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Variant::Mf => 0,
            Variant::MfS => 1,
            Variant::MfShGating => 2,
            Variant::MfShConcat => 3,
            Variant::Full => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.tag() == tag)
    }

    pub fn uses_long_term(self) -> bool {
        matches!(
            self,
            Variant::MfShGating | Variant::MfShConcat | Variant::Full
        )
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().to_ascii_lowercase() == norm)
            .or(match norm.as_str() {
                "ma-gnn" | "magnn" | "full" => Some(Variant::Full),
                "gating" => Some(Variant::MfShGating),
                "concat" => Some(Variant::MfShConcat),
                _ => None,
            })
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant `{s}` (expected one of MF, MF+S, MF+S+H+gating, MF+S+H+concat, FULL)"
                ))
            })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Latent dimension d.
    pub dim: usize,
    /// Rows of the multi-dimensional attention (h).
    pub attention_rows: usize,
    /// Number of shared memory units (m).
    pub memory_units: usize,
    pub instances: InstanceConfig,
    pub graph: GraphConfig,
    pub variant: Variant,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 50,
            attention_rows: 10,
            memory_units: 10,
            instances: InstanceConfig::default(),
            graph: GraphConfig::default(),
            variant: Variant::Full,
            precision: Precision::F32,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.attention_rows == 0 || self.memory_units == 0 {
            return Err(Error::Config("dim, attention_rows and memory_units must be >= 1".into()));
        }
        if !self.dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "dim must be even for the sinusoidal position encoding, got {}",
                self.dim
            )));
        }
        if self.instances.window_len == 0 || self.instances.target_len == 0 {
            return Err(Error::Config("window and target lengths must be >= 1".into()));
        }
        if self.graph.lookahead == 0 {
            return Err(Error::Config("graph lookahead must be >= 1".into()));
        }
        Ok(())
    }

    /// Errors if a model built with `other` could not be used where `self` is expected.
    pub fn check_compatible(&self, other: &ModelConfig) -> Result<()> {
        let dims = [
            ("dim", self.dim, other.dim),
            ("attention_rows", self.attention_rows, other.attention_rows),
            ("memory_units", self.memory_units, other.memory_units),
        ];
        for (name, want, got) in dims {
            if want != got {
                return Err(Error::shape(
                    "checkpoint",
                    format!("{name} is {got} in the checkpoint but {want} was requested"),
                ));
            }
        }
        if self.variant != other.variant {
            return Err(Error::Incompatible(format!(
                "variant {} in the checkpoint but {} was requested",
                other.variant, self.variant
            )));
        }
        if self.instances != other.instances || self.graph != other.graph {
            return Err(Error::Incompatible(
                "window/history/graph settings differ from the checkpoint".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(Variant::from_tag(v.tag()), Some(v));
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.as_str()));
        }
        assert!("GRU".parse::<Variant>().is_err());
    }

    #[test]
    fn odd_dim_rejected() {
        let cfg = ModelConfig {
            dim: 7,
            ..ModelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn dim_mismatch_is_a_shape_error() {
        let a = ModelConfig::default();
        let b = ModelConfig {
            dim: 64,
            ..ModelConfig::default()
        };
        assert!(matches!(b.check_compatible(&a), Err(Error::Shape { .. })));
    }
}
