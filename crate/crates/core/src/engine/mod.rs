//! Minimal dense-tensor engine with reverse-mode differentiation.

mod tape;
mod tensor;

pub use tape::{Axis, Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::real::Real;

/// Relative discrepancy used by gradient checks:
/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Central finite-difference gradient of `f` with respect to every entry of `x`.
///
/// `x` is perturbed in place and restored before returning.
pub fn central_difference<T: Real>(
    x: &mut Tensor<T>,
    eps: f64,
    mut f: impl FnMut(&Tensor<T>) -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = T::from_f64(orig.as_f64() + eps);
        let plus = f(x);
        x.data_mut()[i] = T::from_f64(orig.as_f64() - eps);
        let minus = f(x);
        x.data_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * eps));
    }
    out
}
