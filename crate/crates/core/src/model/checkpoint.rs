//! `MAGNNCK1` checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic        8 bytes "MAGNNCK1"
//! version      u32 1
//! config       u32 dim, u32 attention_rows, u32 memory_units,
//!              u32 window_len, u32 target_len, u32 stride, u32 max_history,
//!              u32 lookahead, u8 symmetric, u8 variant, u8 precision, u64 seed
//! sizes        u64 num_users, u64 num_items
//! directory    u32 count, then per tensor: u32 name length, name,
//!              u64 rows, u64 cols, u8 precision (bytes per value)
//! data         each tensor row-major, in directory order
//! ```

use std::path::Path;

use super::params::{ModelParams, ParamKind};
use super::{ModelConfig, Variant};
use crate::binio::{check_magic, ByteReader, ByteWriter};
use crate::dataset::InstanceConfig;
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::itemgraph::GraphConfig;
use crate::real::{Precision, Real};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MAGNNCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters in whichever precision the checkpoint stored.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyParams {
    F32(ModelParams<f32>),
    F64(ModelParams<f64>),
}

impl AnyParams {
    pub fn precision(&self) -> Precision {
        match self {
            AnyParams::F32(_) => Precision::F32,
            AnyParams::F64(_) => Precision::F64,
        }
    }

    pub fn num_users(&self) -> usize {
        match self {
            AnyParams::F32(p) => p.num_users(),
            AnyParams::F64(p) => p.num_users(),
        }
    }

    pub fn num_items(&self) -> usize {
        match self {
            AnyParams::F32(p) => p.num_items(),
            AnyParams::F64(p) => p.num_items(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: AnyParams,
}

fn small(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Config(format!("{what} {v} too large for a checkpoint")))
}

pub fn encode_checkpoint<T: Real>(params: &ModelParams<T>, config: &ModelConfig) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u32(small(config.dim, "dim")?);
    w.u32(small(config.attention_rows, "attention_rows")?);
    w.u32(small(config.memory_units, "memory_units")?);
    w.u32(small(config.instances.window_len, "window_len")?);
    w.u32(small(config.instances.target_len, "target_len")?);
    w.u32(small(config.instances.stride, "stride")?);
    w.u32(small(config.instances.max_history, "max_history")?);
    w.u32(small(config.graph.lookahead, "lookahead")?);
    w.u8(config.graph.symmetric as u8);
    w.u8(config.variant.tag());
    w.u8(T::PRECISION.tag());
    w.u64(config.seed);
    w.u64(params.num_users() as u64);
    w.u64(params.num_items() as u64);
    w.u32(ParamKind::COUNT as u32);
    for (kind, t) in params.iter() {
        w.str(kind.name());
        w.u64(t.rows() as u64);
        w.u64(t.cols() as u64);
        w.u8(T::PRECISION.tag());
    }
    let buf = w.buf_mut();
    for (_, t) in params.iter() {
        for &v in t.data() {
            v.write_le(buf);
        }
    }
    Ok(w.finish())
}

fn read_tensors<T: Real>(r: &mut ByteReader<'_>, shapes: &[(usize, usize)]) -> Result<Vec<Tensor<T>>> {
    shapes
        .iter()
        .map(|&(rows, cols)| {
            let raw = r.take(rows * cols * T::BYTES)?;
            let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            Tensor::from_vec(rows, cols, data)
        })
        .collect()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    check_magic(&mut r, CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let dim = r.u32()? as usize;
    let attention_rows = r.u32()? as usize;
    let memory_units = r.u32()? as usize;
    let instances = InstanceConfig {
        window_len: r.u32()? as usize,
        target_len: r.u32()? as usize,
        stride: r.u32()? as usize,
        max_history: r.u32()? as usize,
    };
    let graph = GraphConfig {
        lookahead: r.u32()? as usize,
        symmetric: r.u8()? != 0,
    };
    let variant_tag = r.u8()?;
    let variant = Variant::from_tag(variant_tag)
        .ok_or_else(|| Error::Format(format!("unknown variant tag {variant_tag}")))?;
    let precision_tag = r.u8()?;
    let precision = Precision::from_tag(precision_tag)
        .ok_or_else(|| Error::Format(format!("unknown precision tag {precision_tag}")))?;
    let seed = r.u64()?;
    let num_users = r.count("user")?;
    let num_items = r.count("item")?;
    let config = ModelConfig {
        dim,
        attention_rows,
        memory_units,
        instances,
        graph,
        variant,
        precision,
        seed,
    };
    config.validate().map_err(|e| Error::Format(format!("invalid header: {e}")))?;

    let count = r.u32()? as usize;
    if count != ParamKind::COUNT {
        return Err(Error::shape(
            "checkpoint",
            format!("{count} tensors in header, expected {}", ParamKind::COUNT),
        ));
    }
    let mut shapes = Vec::with_capacity(count);
    for kind in ParamKind::ALL {
        let name = r.str()?;
        let rows = r.count("row")?;
        let cols = r.count("column")?;
        let tag = r.u8()?;
        if name != kind.name() {
            return Err(Error::Format(format!("tensor `{name}` where `{}` was expected", kind.name())));
        }
        if tag != precision.tag() {
            return Err(Error::Format(format!("tensor `{name}` precision differs from header")));
        }
        let want = kind.shape(num_users, num_items, dim, attention_rows, memory_units);
        if (rows, cols) != want {
            return Err(Error::shape(
                "checkpoint",
                format!("tensor `{name}` is {rows}x{cols} but the header implies {}x{}", want.0, want.1),
            ));
        }
        shapes.push((rows, cols));
    }
    let params = match precision {
        Precision::F32 => AnyParams::F32(ModelParams::from_tensors(
            &config,
            num_users,
            num_items,
            read_tensors::<f32>(&mut r, &shapes)?,
        )?),
        Precision::F64 => AnyParams::F64(ModelParams::from_tensors(
            &config,
            num_users,
            num_items,
            read_tensors::<f64>(&mut r, &shapes)?,
        )?),
    };
    r.expect_end()?;
    Ok(Checkpoint { config, params })
}

pub fn save_checkpoint<T: Real>(params: &ModelParams<T>, config: &ModelConfig, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params, config)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
