use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Sinusoidal position table, one row per position (0 = oldest):
/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(...)`.
pub fn positional_encoding<T: Real>(length: usize, dim: usize) -> Result<Tensor<T>> {
    if !dim.is_multiple_of(2) {
        return Err(Error::Config(format!("position encoding needs an even dimension, got {dim}")));
    }
    Ok(Tensor::from_fn(length, dim, |pos, c| {
        let pair = (c / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
        T::from_f64(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    }))
}
