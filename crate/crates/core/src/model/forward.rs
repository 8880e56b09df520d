//! Forward composition of the model on a [`Tape`].
//!
//! Vectors are `d x 1` columns; a set of item representations is a `d x k`
//! matrix with one column per item.

use super::params::{ModelParams, ParamKind};
use super::positional::positional_encoding;
use super::Variant;
use crate::dataset::SequenceContext;
use crate::engine::{Axis, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::itemgraph::ItemGraph;
use crate::real::Real;

/// Tape handles for every parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    vars: [Var; ParamKind::COUNT],
    dim: usize,
    num_items: usize,
}

impl ParamVars {
    pub fn register<'a, T: Real>(tape: &mut Tape<'a, T>, params: &'a ModelParams<T>) -> Self {
        let vars = ParamKind::ALL.map(|k| tape.param(&params[k], k.id()));
        ParamVars {
            vars,
            dim: params.dim(),
            num_items: params.num_items(),
        }
    }

    #[inline]
    pub fn get(&self, kind: ParamKind) -> Var {
        self.vars[kind.id()]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn padding_index(&self) -> u32 {
        self.num_items as u32
    }
}

fn column_mean<T: Real>(tape: &mut Tape<'_, T>, cols: Var) -> Result<Var> {
    // mean over the columns of a d x k matrix, as a d x 1 column
    let rows = tape.transpose(cols)?;
    let k = tape.shape(rows).0;
    let mean = tape.mean_masked(rows, &vec![true; k])?;
    tape.transpose(mean)
}

fn embed_columns<T: Real>(tape: &mut Tape<'_, T>, table: Var, items: &[u32]) -> Result<Var> {
    let idx: Vec<usize> = items.iter().map(|&i| i as usize).collect();
    let rows = tape.gather_rows(table, &idx)?;
    tape.transpose(rows)
}

/// GNN representation `h_i = tanh(W1 [Σ_k A_ik e_k ; e_i])` for each item,
/// returned as a `d x k` matrix. Padding items map to a zero column.
pub fn gnn_item_repr<T: Real>(
    tape: &mut Tape<'_, T>,
    pv: &ParamVars,
    graph: &ItemGraph,
    items: &[u32],
) -> Result<Var> {
    let d = pv.dim();
    let pad = pv.padding_index();
    let real: Vec<(usize, u32)> = items
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, i)| i != pad)
        .collect();
    if real.is_empty() {
        return Ok(tape.constant(Tensor::zeros(d, items.len())));
    }

    let mut union: Vec<u32> = Vec::new();
    for &(_, i) in &real {
        union.extend(graph.neighbors(i)?.iter().map(|&(k, _)| k));
    }
    union.sort_unstable();
    union.dedup();

    let real_items: Vec<u32> = real.iter().map(|&(_, i)| i).collect();
    let e = pv.get(ParamKind::ItemIn);
    let aggregate = if union.is_empty() {
        tape.constant(Tensor::zeros(d, real.len()))
    } else {
        // coefficients: |U| x k, column c holds A_{i_c, k} for each neighbor k
        let mut coeff = Tensor::<T>::zeros(union.len(), real.len());
        for (c, &i) in real_items.iter().enumerate() {
            for &(k, w) in graph.neighbors(i)? {
                let r = union.binary_search(&k).expect("neighbor in union");
                coeff.set(r, c, T::from_f64(w));
            }
        }
        let neigh = embed_columns(tape, e, &union)?;
        let coeff = tape.constant(coeff);
        tape.matmul(neigh, coeff)?
    };
    let own = embed_columns(tape, e, &real_items)?;
    let stacked = tape.concat_rows(aggregate, own)?;
    let pre = tape.matmul(pv.get(ParamKind::Gnn1), stacked)?;
    let h_real = tape.tanh(pre)?;
    if real.len() == items.len() {
        return Ok(h_real);
    }

    // scatter real columns back between zero columns for pads
    let mut placement = Tensor::<T>::zeros(real.len(), items.len());
    for (c, &(pos, _)) in real.iter().enumerate() {
        placement.set(c, pos, T::one());
    }
    let placement = tape.constant(placement);
    tape.matmul(h_real, placement)
}

/// Short-term outputs: the masked mean of window item representations and,
/// when requested, the summary `p^S = tanh(W2 [h_mean ; p_u])`.
#[derive(Debug, Clone, Copy)]
pub struct ShortTerm {
    pub h_mean: Var,
    pub p_short: Option<Var>,
}

pub fn short_term_interest<T: Real>(
    tape: &mut Tape<'_, T>,
    pv: &ParamVars,
    graph: &ItemGraph,
    ctx: &SequenceContext,
    p_user: Var,
    with_summary: bool,
) -> Result<ShortTerm> {
    let real: Vec<u32> = ctx.real_window().collect();
    if real.is_empty() {
        return Err(Error::Contract(format!(
            "window for user {} has no real items",
            ctx.user
        )));
    }
    let h = gnn_item_repr(tape, pv, graph, &real)?;
    let h_mean = column_mean(tape, h)?;
    let p_short = if with_summary {
        let stacked = tape.concat_rows(h_mean, p_user)?;
        let pre = tape.matmul(pv.get(ParamKind::Gnn2), stacked)?;
        Some(tape.tanh(pre)?)
    } else {
        None
    };
    Ok(ShortTerm { h_mean, p_short })
}

/// Multi-dimensional attention query over the history:
/// `S = softmax_row(Wa3 tanh(Wa1 H + (Wa2 p_u) ⊗ 1))`, `Z = tanh(S Hᵀ)`,
/// `z = mean of the rows of Z`. Empty history gives `z = 0`.
pub fn long_term_query<T: Real>(
    tape: &mut Tape<'_, T>,
    pv: &ParamVars,
    history: &[u32],
    p_user: Var,
) -> Result<Var> {
    let d = pv.dim();
    if history.is_empty() {
        return Ok(tape.constant(Tensor::zeros(d, 1)));
    }
    let n = history.len();
    let emb = embed_columns(tape, pv.get(ParamKind::ItemIn), history)?;
    let pe = tape.constant(positional_encoding::<T>(n, d)?.transpose());
    let hist = tape.add(emb, pe)?;

    let item_term = tape.matmul(pv.get(ParamKind::Attn1), hist)?;
    let user_term = tape.matmul(pv.get(ParamKind::Attn2), p_user)?;
    let user_term = tape.outer_broadcast(user_term, n)?;
    let pre = tape.add(item_term, user_term)?;
    let act = tape.tanh(pre)?;
    let logits = tape.matmul(pv.get(ParamKind::Attn3), act)?;
    let scores = tape.softmax(logits, Axis::Row)?;

    let hist_t = tape.transpose(hist)?;
    let z_pre = tape.matmul(scores, hist_t)?;
    let z_rows = tape.tanh(z_pre)?;
    let h = tape.shape(z_rows).0;
    let z = tape.mean_masked(z_rows, &vec![true; h])?;
    tape.transpose(z)
}

/// Memory read `p^H = z + Σ_i softmax(zᵀK)_i v_i`.
pub fn memory_read<T: Real>(tape: &mut Tape<'_, T>, pv: &ParamVars, z: Var) -> Result<Var> {
    let keys_t = tape.transpose(pv.get(ParamKind::MemKeys))?;
    let logits = tape.matmul(keys_t, z)?;
    let weights = tape.softmax(logits, Axis::Col)?;
    let read = tape.matmul(pv.get(ParamKind::MemValues), weights)?;
    tape.add(z, read)
}

/// Gated fusion `p^C = g ⊙ h_mean + (1 - g) ⊙ p^H` with
/// `g = σ(Wg1 h_mean + Wg2 p^H + Wg3 p_u)`, or the concat projection
/// `Wc [h_mean ; p^H]` for [`Variant::MfShConcat`].
pub fn fuse_interests<T: Real>(
    tape: &mut Tape<'_, T>,
    pv: &ParamVars,
    variant: Variant,
    h_mean: Var,
    p_long: Var,
    p_user: Var,
) -> Result<Var> {
    if variant == Variant::MfShConcat {
        let stacked = tape.concat_rows(h_mean, p_long)?;
        return tape.matmul(pv.get(ParamKind::ConcatFuse), stacked);
    }
    let a = tape.matmul(pv.get(ParamKind::Gate1), h_mean)?;
    let b = tape.matmul(pv.get(ParamKind::Gate2), p_long)?;
    let c = tape.matmul(pv.get(ParamKind::Gate3), p_user)?;
    let pre = tape.add_n(&[a, b, c])?;
    let gate = tape.sigmoid(pre)?;
    let gated_short = tape.mul(gate, h_mean)?;
    let gated_long = tape.mul(gate, p_long)?;
    let rest = tape.sub(p_long, gated_long)?;
    tape.add(gated_short, rest)
}

/// The vector `r` such that the score of item `j` is `q_j · r`:
/// `p_u` plus the variant's short/long-term term plus `Wrᵀ ē` (FULL only),
/// where `ē` is the mean input embedding of the real window items.
pub fn user_representation<T: Real>(
    tape: &mut Tape<'_, T>,
    pv: &ParamVars,
    graph: &ItemGraph,
    ctx: &SequenceContext,
    variant: Variant,
) -> Result<Var> {
    let user_rows = tape.gather_rows(pv.get(ParamKind::UserEmb), &[ctx.user as usize])?;
    let p_user = tape.transpose(user_rows)?;
    let mut terms = vec![p_user];
    match variant {
        Variant::Mf => {}
        Variant::MfS => {
            let st = short_term_interest(tape, pv, graph, ctx, p_user, true)?;
            terms.push(st.p_short.expect("summary requested"));
        }
        Variant::MfShGating | Variant::MfShConcat | Variant::Full => {
            let st = short_term_interest(tape, pv, graph, ctx, p_user, false)?;
            let z = long_term_query(tape, pv, &ctx.history, p_user)?;
            let p_long = memory_read(tape, pv, z)?;
            terms.push(fuse_interests(tape, pv, variant, st.h_mean, p_long, p_user)?);
        }
    }
    if variant == Variant::Full {
        let real: Vec<usize> = ctx.real_window().map(|i| i as usize).collect();
        let rows = tape.gather_rows(pv.get(ParamKind::ItemIn), &real)?;
        let mean_row = tape.mean_masked(rows, &vec![true; real.len()])?;
        let projected = tape.matmul(mean_row, pv.get(ParamKind::CoOccur))?;
        terms.push(tape.transpose(projected)?);
    }
    if terms.len() == 1 {
        Ok(p_user)
    } else {
        tape.add_n(&terms)
    }
}

/// Scores `q_j · r` for each item, as a `k x 1` column.
pub fn score_items<T: Real>(
    tape: &mut Tape<'_, T>,
    pv: &ParamVars,
    representation: Var,
    items: &[u32],
) -> Result<Var> {
    let idx: Vec<usize> = items.iter().map(|&i| i as usize).collect();
    let q = tape.gather_rows(pv.get(ParamKind::ItemOut), &idx)?;
    tape.matmul(q, representation)
}

/// Score of a single item for a context, without recording gradients for later use.
pub fn score<T: Real>(
    params: &ModelParams<T>,
    graph: &ItemGraph,
    ctx: &SequenceContext,
    variant: Variant,
    item: u32,
) -> Result<T> {
    if item as usize >= params.num_items() {
        return Err(Error::IndexOutOfRange {
            what: "scored item",
            index: item as usize,
            len: params.num_items(),
        });
    }
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let rep = user_representation(&mut tape, &pv, graph, ctx, variant)?;
    let s = score_items(&mut tape, &pv, rep, &[item])?;
    Ok(tape.value(s).scalar())
}
