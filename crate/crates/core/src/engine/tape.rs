//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every forward op appends one node holding its output value and the
//! indices of its inputs. [`Tape::backward`] walks the nodes in reverse
//! recording order, so each node's rule runs exactly once after all of its
//! consumers have contributed to its upstream gradient.
//!
//! Parameters enter the tape by reference ([`Tape::param`]) and are
//! identified by a caller-chosen id; their gradients come back in a
//! [`Gradients`] table keyed by that id. Constants enter by value and never
//! receive gradients.

use std::borrow::Cow;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

/// Direction of a softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Normalize within each row (entries of a row sum to 1).
    Row,
    /// Normalize within each column.
    Col,
}

#[derive(Debug, Clone)]
enum Op {
    Param(usize),
    Constant,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddN(Vec<usize>),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    LogSigmoid(usize),
    ConcatRows(usize, usize),
    ConcatCols(usize, usize),
    MeanMasked { input: usize, mask: Vec<bool>, count: usize },
    OuterBroadcast(usize),
    Softmax(usize, Axis),
    GatherRows(usize, Vec<usize>),
    Sum(usize),
    SumSquares(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::AddN(_) => "add_n",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::LogSigmoid(_) => "log_sigmoid",
            Op::ConcatRows(..) => "concat_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::MeanMasked { .. } => "mean_masked",
            Op::OuterBroadcast(_) => "outer_broadcast",
            Op::Softmax(..) => "softmax",
            Op::GatherRows(..) => "gather_rows",
            Op::Sum(_) => "sum",
            Op::SumSquares(_) => "sum_squares",
        }
    }
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op,
}

pub struct Tape<'a, T: Real> {
    id: u64,
    nodes: Vec<Node<'a, T>>,
    check_finite: bool,
    first_nonfinite: Option<(&'static str, usize)>,
}

/// Parameter gradients produced by [`Tape::backward`], indexed by parameter id.
#[derive(Debug, Clone)]
pub struct Gradients<T: Real> {
    by_param: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// A table with no gradients at all.
    pub fn default_empty() -> Self {
        Gradients { by_param: Vec::new() }
    }

    /// Gradient for parameter `id`, or `None` if it did not influence the loss.
    pub fn get(&self, id: usize) -> Option<&Tensor<T>> {
        self.by_param.get(id).and_then(|g| g.as_ref())
    }

    pub fn get_mut(&mut self, id: usize) -> Option<&mut Tensor<T>> {
        self.by_param.get_mut(id).and_then(|g| g.as_mut())
    }

    pub fn take(&mut self, id: usize) -> Option<Tensor<T>> {
        self.by_param.get_mut(id).and_then(|g| g.take())
    }

    /// Adds another gradient table into this one.
    pub fn merge(&mut self, other: Gradients<T>) {
        if other.by_param.len() > self.by_param.len() {
            self.by_param.resize_with(other.by_param.len(), || None);
        }
        for (slot, g) in self.by_param.iter_mut().zip(other.by_param) {
            match (slot.as_mut(), g) {
                (Some(acc), Some(g)) => acc.add_assign(&g),
                (None, Some(g)) => *slot = Some(g),
                _ => {}
            }
        }
    }
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            check_finite: true,
            first_nonfinite: None,
        }
    }

    /// Turns the per-op finiteness scan on or off (on by default).
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        debug_assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.idx].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Errors if any recorded op produced NaN or infinity.
    pub fn finite_check(&self) -> Result<()> {
        match self.first_nonfinite {
            Some((op, node)) => Err(Error::NonFinite { op, node }),
            None => Ok(()),
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Contract("variable is not recorded on this tape".into()));
        }
        Ok(v.idx)
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op) -> Var {
        let idx = self.nodes.len();
        if self.check_finite && self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some((op.name(), idx));
        }
        self.nodes.push(Node { value, op });
        Var { tape: self.id, idx }
    }

    /// Records a parameter leaf borrowed from the caller.
    pub fn param(&mut self, value: &'a Tensor<T>, id: usize) -> Var {
        self.push(Cow::Borrowed(value), Op::Param(id))
    }

    /// Records a constant leaf; constants receive no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Cow::Owned(value), Op::Constant)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        Ok(self.push(Cow::Owned(out), Op::MatMul(ia, ib)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.transpose();
        Ok(self.push(Cow::Owned(out), Op::Transpose(ia)))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<(usize, usize, Tensor<T>)> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape() != vb.shape() {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data)?;
        Ok((ia, ib, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, out) = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(Cow::Owned(out), Op::Add(ia, ib)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, out) = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Cow::Owned(out), Op::Sub(ia, ib)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, out) = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Cow::Owned(out), Op::Mul(ia, ib)))
    }

    /// Sum of any number of equally shaped tensors.
    pub fn add_n(&mut self, terms: &[Var]) -> Result<Var> {
        let Some(&first) = terms.first() else {
            return Err(Error::Contract("add_n of zero terms".into()));
        };
        let idxs = terms
            .iter()
            .map(|&v| self.idx(v))
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.nodes[self.idx(first)?].value.as_ref().clone();
        for &i in &idxs[1..] {
            let v = &self.nodes[i].value;
            if v.shape() != out.shape() {
                return Err(Error::shape(
                    "add_n",
                    format!("{:?} vs {:?}", out.shape(), v.shape()),
                ));
            }
            out.add_assign(v);
        }
        Ok(self.push(Cow::Owned(out), Op::AddN(idxs)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let c = T::from_f64(factor);
        let out = self.nodes[ia].value.map(|x| x * c);
        Ok(self.push(Cow::Owned(out), Op::Scale(ia, factor)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(|x| x.tanh());
        Ok(self.push(Cow::Owned(out), Op::Tanh(ia)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(sigmoid);
        Ok(self.push(Cow::Owned(out), Op::Sigmoid(ia)))
    }

    /// Elementwise `log(sigmoid(x))`, evaluated without overflow.
    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(log_sigmoid);
        Ok(self.push(Cow::Owned(out), Op::LogSigmoid(ia)))
    }

    /// Vertical stack: `[a; b]`. Column counts must agree.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.cols() != vb.cols() {
            return Err(Error::shape(
                "concat_rows",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let mut data = Vec::with_capacity(va.len() + vb.len());
        data.extend_from_slice(va.data());
        data.extend_from_slice(vb.data());
        let out = Tensor::from_vec(va.rows() + vb.rows(), va.cols(), data)?;
        Ok(self.push(Cow::Owned(out), Op::ConcatRows(ia, ib)))
    }

    /// Horizontal stack: `[a, b]`. Row counts must agree.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.rows() != vb.rows() {
            return Err(Error::shape(
                "concat_cols",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let mut data = Vec::with_capacity(va.len() + vb.len());
        for r in 0..va.rows() {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let out = Tensor::from_vec(va.rows(), va.cols() + vb.cols(), data)?;
        Ok(self.push(Cow::Owned(out), Op::ConcatCols(ia, ib)))
    }

    /// Mean of the rows of `a` selected by `mask`, as a `1 x cols` row.
    pub fn mean_masked(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let ia = self.idx(a)?;
        let va = &self.nodes[ia].value;
        if mask.len() != va.rows() {
            return Err(Error::shape(
                "mean_masked",
                format!("mask of length {} for {} rows", mask.len(), va.rows()),
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::Contract("mean_masked with an all-false mask".into()));
        }
        let mut out = Tensor::zeros(1, va.cols());
        for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            for (o, &x) in out.data_mut().iter_mut().zip(va.row(r)) {
                *o = *o + x;
            }
        }
        let inv = T::one() / T::from_f64(count as f64);
        let out = out.map(|x| x * inv);
        Ok(self.push(
            Cow::Owned(out),
            Op::MeanMasked {
                input: ia,
                mask: mask.to_vec(),
                count,
            },
        ))
    }

    /// Outer product of a column `v` with a ones row: `v ⊗ 1_count`.
    pub fn outer_broadcast(&mut self, v: Var, count: usize) -> Result<Var> {
        let iv = self.idx(v)?;
        let vv = &self.nodes[iv].value;
        if vv.cols() != 1 {
            return Err(Error::shape(
                "outer_broadcast",
                format!("expected a column vector, got {:?}", vv.shape()),
            ));
        }
        let out = Tensor::from_fn(vv.rows(), count, |r, _| vv.get(r, 0));
        Ok(self.push(Cow::Owned(out), Op::OuterBroadcast(iv)))
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let ia = self.idx(a)?;
        let va = &self.nodes[ia].value;
        let out = match axis {
            Axis::Row => softmax_rows(va),
            Axis::Col => softmax_rows(&va.transpose()).transpose(),
        };
        Ok(self.push(Cow::Owned(out), Op::Softmax(ia, axis)))
    }

    /// Stacks `table[indices[0]], table[indices[1]], ...` as rows.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let it = self.idx(table)?;
        let vt = &self.nodes[it].value;
        let mut data = Vec::with_capacity(indices.len() * vt.cols());
        for &i in indices {
            if i >= vt.rows() {
                return Err(Error::IndexOutOfRange {
                    what: "gather_rows table",
                    index: i,
                    len: vt.rows(),
                });
            }
            data.extend_from_slice(vt.row(i));
        }
        let out = Tensor::from_vec(indices.len(), vt.cols(), data)?;
        Ok(self.push(Cow::Owned(out), Op::GatherRows(it, indices.to_vec())))
    }

    /// Sum of all entries, as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let s: T = self.nodes[ia].value.data().iter().copied().sum();
        Ok(self.push(Cow::Owned(Tensor::filled(1, 1, s)), Op::Sum(ia)))
    }

    /// Squared Frobenius norm, as a `1 x 1` tensor.
    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let s = self.nodes[ia].value.sum_squares();
        Ok(self.push(Cow::Owned(Tensor::filled(1, 1, s)), Op::SumSquares(ia)))
    }

    /// Reverse sweep from a scalar `loss`, returning gradients of every
    /// parameter leaf that the loss depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let il = self.idx(loss)?;
        if self.nodes[il].value.shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.nodes[il].value.shape()),
            ));
        }
        self.finite_check()?;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; il + 1];
        grads[il] = Some(Tensor::filled(1, 1, T::one()));
        let mut by_param: Vec<Option<Tensor<T>>> = Vec::new();

        for idx in (0..=il).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = node.value.as_ref();
            match &node.op {
                Op::Param(id) => {
                    if by_param.len() <= *id {
                        by_param.resize_with(id + 1, || None);
                    }
                    accumulate(&mut by_param[*id], g);
                }
                Op::Constant => {}
                Op::MatMul(a, b) => {
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    let ga = g.matmul(&vb.transpose())?;
                    let gb = va.transpose().matmul(&g)?;
                    accumulate(&mut grads[*a], ga);
                    accumulate(&mut grads[*b], gb);
                }
                Op::Transpose(a) => accumulate(&mut grads[*a], g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], g.clone());
                    accumulate(&mut grads[*b], g);
                }
                Op::AddN(inputs) => {
                    for &i in inputs {
                        accumulate(&mut grads[i], g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[*b], g.map(|x| -x));
                    accumulate(&mut grads[*a], g);
                }
                Op::Mul(a, b) => {
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    accumulate(&mut grads[*a], hadamard(&g, vb));
                    accumulate(&mut grads[*b], hadamard(&g, va));
                }
                Op::Scale(a, factor) => {
                    let c = T::from_f64(*factor);
                    accumulate(&mut grads[*a], g.map(|x| x * c));
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, y, |gi, yi| gi * (T::one() - yi * yi));
                    accumulate(&mut grads[*a], ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, y, |gi, yi| gi * yi * (T::one() - yi));
                    accumulate(&mut grads[*a], ga);
                }
                Op::LogSigmoid(a) => {
                    let x = &self.nodes[*a].value;
                    // d/dx log σ(x) = σ(-x)
                    let ga = zip_map(&g, x, |gi, xi| gi * sigmoid(-xi));
                    accumulate(&mut grads[*a], ga);
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.nodes[*a].value.rows();
                    let split = ra * g.cols();
                    let ga = Tensor::from_vec(ra, g.cols(), g.data()[..split].to_vec())?;
                    let gb =
                        Tensor::from_vec(g.rows() - ra, g.cols(), g.data()[split..].to_vec())?;
                    accumulate(&mut grads[*a], ga);
                    accumulate(&mut grads[*b], gb);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[*a].value.cols();
                    let cb = g.cols() - ca;
                    let ga = Tensor::from_fn(g.rows(), ca, |r, c| g.get(r, c));
                    let gb = Tensor::from_fn(g.rows(), cb, |r, c| g.get(r, ca + c));
                    accumulate(&mut grads[*a], ga);
                    accumulate(&mut grads[*b], gb);
                }
                Op::MeanMasked { input, mask, count } => {
                    let inv = T::one() / T::from_f64(*count as f64);
                    let ga = Tensor::from_fn(mask.len(), g.cols(), |r, c| {
                        if mask[r] {
                            g.get(0, c) * inv
                        } else {
                            T::zero()
                        }
                    });
                    accumulate(&mut grads[*input], ga);
                }
                Op::OuterBroadcast(v) => {
                    let gv = Tensor::from_fn(g.rows(), 1, |r, _| g.row(r).iter().copied().sum());
                    accumulate(&mut grads[*v], gv);
                }
                Op::Softmax(a, axis) => {
                    let ga = match axis {
                        Axis::Row => softmax_rows_backward(&g, y),
                        Axis::Col => {
                            softmax_rows_backward(&g.transpose(), &y.transpose()).transpose()
                        }
                    };
                    accumulate(&mut grads[*a], ga);
                }
                Op::GatherRows(table, indices) => {
                    let vt = &self.nodes[*table].value;
                    let slot = grads[*table].get_or_insert_with(|| Tensor::zeros(vt.rows(), vt.cols()));
                    for (r, &i) in indices.iter().enumerate() {
                        for (acc, &x) in slot.row_mut(i).iter_mut().zip(g.row(r)) {
                            *acc = *acc + x;
                        }
                    }
                }
                Op::Sum(a) => {
                    let va = &self.nodes[*a].value;
                    accumulate(&mut grads[*a], Tensor::filled(va.rows(), va.cols(), g.scalar()));
                }
                Op::SumSquares(a) => {
                    let two_g = g.scalar() + g.scalar();
                    let ga = self.nodes[*a].value.map(|x| x * two_g);
                    accumulate(&mut grads[*a], ga);
                }
            }
        }
        Ok(Gradients { by_param })
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn hadamard<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn log_sigmoid<T: Real>(x: T) -> T {
    // log σ(x) = -softplus(-x) = min(x, 0) - log1p(exp(-|x|))
    x.min(T::zero()) - (-x.abs()).exp().ln_1p()
}

pub(crate) fn softmax_rows<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

fn softmax_rows_backward<T: Real>(g: &Tensor<T>, y: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let dot: T = g.row(r).iter().zip(y.row(r)).map(|(&a, &b)| a * b).sum();
        for ((o, &gi), &yi) in out.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
            *o = yi * (gi - dot);
        }
    }
    out
}
