use std::ops::{Index, IndexMut};

use rand::Rng;

use super::ModelConfig;
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Every learnable tensor, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// User embeddings `P` (M x d).
    UserEmb,
    /// Output item embeddings `Q` (N x d).
    ItemOut,
    /// Input item embeddings `E` ((N+1) x d); the last row is the padding item.
    ItemIn,
    /// GNN aggregation weight `W1` (d x 2d).
    Gnn1,
    /// Short-term summary weight `W2` (d x 2d).
    Gnn2,
    /// Attention weight on history items (d x d).
    Attn1,
    /// Attention weight on the user embedding (d x d).
    Attn2,
    /// Attention output projection (h x d).
    Attn3,
    /// Memory keys (d x m).
    MemKeys,
    /// Memory values (d x m).
    MemValues,
    Gate1,
    Gate2,
    Gate3,
    /// Bilinear co-occurrence weight (d x d).
    CoOccur,
    /// Concat-fusion projection (d x 2d).
    ConcatFuse,
}

impl ParamKind {
    pub const COUNT: usize = 15;

    pub const ALL: [ParamKind; Self::COUNT] = [
        ParamKind::UserEmb,
        ParamKind::ItemOut,
        ParamKind::ItemIn,
        ParamKind::Gnn1,
        ParamKind::Gnn2,
        ParamKind::Attn1,
        ParamKind::Attn2,
        ParamKind::Attn3,
        ParamKind::MemKeys,
        ParamKind::MemValues,
        ParamKind::Gate1,
        ParamKind::Gate2,
        ParamKind::Gate3,
        ParamKind::CoOccur,
        ParamKind::ConcatFuse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::UserEmb => "P",
            ParamKind::ItemOut => "Q",
            ParamKind::ItemIn => "E",
            ParamKind::Gnn1 => "W1",
            ParamKind::Gnn2 => "W2",
            ParamKind::Attn1 => "Wa1",
            ParamKind::Attn2 => "Wa2",
            ParamKind::Attn3 => "Wa3",
            ParamKind::MemKeys => "K",
            ParamKind::MemValues => "V",
            ParamKind::Gate1 => "Wg1",
            ParamKind::Gate2 => "Wg2",
            ParamKind::Gate3 => "Wg3",
            ParamKind::CoOccur => "Wr",
            ParamKind::ConcatFuse => "Wc",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
    }

    #[inline]
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn is_embedding(self) -> bool {
        matches!(self, ParamKind::UserEmb | ParamKind::ItemOut | ParamKind::ItemIn)
    }

    /// `(rows, cols)` for the given dimensions.
    pub fn shape(self, num_users: usize, num_items: usize, d: usize, h: usize, m: usize) -> (usize, usize) {
        match self {
            ParamKind::UserEmb => (num_users, d),
            ParamKind::ItemOut => (num_items, d),
            ParamKind::ItemIn => (num_items + 1, d),
            ParamKind::Gnn1 | ParamKind::Gnn2 | ParamKind::ConcatFuse => (d, 2 * d),
            ParamKind::Attn1
            | ParamKind::Attn2
            | ParamKind::Gate1
            | ParamKind::Gate2
            | ParamKind::Gate3
            | ParamKind::CoOccur => (d, d),
            ParamKind::Attn3 => (h, d),
            ParamKind::MemKeys | ParamKind::MemValues => (d, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real> {
    num_users: usize,
    num_items: usize,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Glorot-uniform initialization, drawing tensors in declaration order.
    pub fn init<R: Rng>(config: &ModelConfig, num_users: usize, num_items: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if num_users == 0 || num_items == 0 {
            return Err(Error::Degenerate(format!(
                "cannot build a model over {num_users} users and {num_items} items"
            )));
        }
        let tensors = ParamKind::ALL
            .iter()
            .map(|&kind| {
                let (r, c) = kind.shape(
                    num_users,
                    num_items,
                    config.dim,
                    config.attention_rows,
                    config.memory_units,
                );
                let bound = (6.0 / (r + c) as f64).sqrt();
                Tensor::from_fn(r, c, |_, _| T::from_f64(rng.gen_range(-bound..bound)))
            })
            .collect();
        let mut params = ModelParams {
            num_users,
            num_items,
            tensors,
        };
        params.zero_padding_row();
        Ok(params)
    }

    /// Assembles parameters from tensors in [`ParamKind::ALL`] order, checking shapes.
    pub fn from_tensors(config: &ModelConfig, num_users: usize, num_items: usize, tensors: Vec<Tensor<T>>) -> Result<Self> {
        if tensors.len() != ParamKind::COUNT {
            return Err(Error::shape(
                "params",
                format!("{} tensors, expected {}", tensors.len(), ParamKind::COUNT),
            ));
        }
        for (kind, t) in ParamKind::ALL.iter().zip(&tensors) {
            let want = kind.shape(
                num_users,
                num_items,
                config.dim,
                config.attention_rows,
                config.memory_units,
            );
            if t.shape() != want {
                return Err(Error::shape(
                    "params",
                    format!("{} is {:?}, expected {:?}", kind.name(), t.shape(), want),
                ));
            }
        }
        Ok(ModelParams {
            num_users,
            num_items,
            tensors,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dim(&self) -> usize {
        self[ParamKind::UserEmb].cols()
    }

    pub fn padding_index(&self) -> u32 {
        self.num_items as u32
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamKind, &Tensor<T>)> {
        ParamKind::ALL.into_iter().zip(&self.tensors)
    }

    /// Re-pins the padding row of the input embeddings to zero.
    pub fn zero_padding_row(&mut self) {
        let pad = self.num_items;
        for v in self.tensors[ParamKind::ItemIn.id()].row_mut(pad) {
            *v = T::zero();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn convert<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            num_users: self.num_users,
            num_items: self.num_items,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::from_fn(t.rows(), t.cols(), |r, c| U::from_f64(t.get(r, c).as_f64())))
                .collect(),
        }
    }
}

impl<T: Real> Index<ParamKind> for ModelParams<T> {
    type Output = Tensor<T>;

    fn index(&self, kind: ParamKind) -> &Tensor<T> {
        &self.tensors[kind.id()]
    }
}

impl<T: Real> IndexMut<ParamKind> for ModelParams<T> {
    fn index_mut(&mut self, kind: ParamKind) -> &mut Tensor<T> {
        &mut self.tensors[kind.id()]
    }
}
