//! `MAGNNDS1` dataset container and the JSON stats summary.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     8 bytes  "MAGNNDS1"
//! version   u32      1
//! users     u64 M, then M x (u32 byte length, UTF-8 external id)
//! items     u64 N, then N x (u32 byte length, UTF-8 external id)
//! train     M x (u32 length, length x u32 item index)
//! val       same
//! test      same
//! ```

use std::path::Path;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use super::filter::FilterCounts;
use super::split::SplitDataset;
use crate::binio::{check_magic, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"MAGNNDS1";
pub const DATASET_VERSION: u32 = 1;

pub fn encode_dataset(split: &SplitDataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    for ids in [&split.users, &split.items] {
        w.u64(ids.len() as u64);
        for id in ids {
            w.str(id);
        }
    }
    for part in [&split.train, &split.val, &split.test] {
        for seq in part {
            w.u32(seq.len() as u32);
            for &i in seq {
                w.u32(i);
            }
        }
    }
    w.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<SplitDataset> {
    let mut r = ByteReader::new(bytes);
    check_magic(&mut r, DATASET_MAGIC)?;
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version} (expected {DATASET_VERSION})"
        )));
    }
    let mut read_ids = |what: &str| -> Result<IndexSet<String>> {
        let n = r.count(what)?;
        let mut ids = IndexSet::with_capacity(n);
        for _ in 0..n {
            if !ids.insert(r.str()?) {
                return Err(Error::Format(format!("duplicate {what} id")));
            }
        }
        Ok(ids)
    };
    let users = read_ids("user")?;
    let items = read_ids("item")?;
    let n_items = items.len() as u32;
    let mut read_part = || -> Result<Vec<Vec<u32>>> {
        (0..users.len())
            .map(|_| {
                let len = r.u32()? as usize;
                let raw = r.take(len * 4)?;
                raw.chunks_exact(4)
                    .map(|c| {
                        let i = u32::from_le_bytes(c.try_into().expect("4 bytes"));
                        if i >= n_items {
                            Err(Error::Format(format!("item index {i} >= {n_items}")))
                        } else {
                            Ok(i)
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let train = read_part()?;
    let val = read_part()?;
    let test = read_part()?;
    r.expect_end()?;
    Ok(SplitDataset {
        users,
        items,
        train,
        val,
        test,
    })
}

pub fn write_dataset(split: &SplitDataset, path: &Path) -> Result<()> {
    std::fs::write(path, encode_dataset(split)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<SplitDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

/// Human-readable summary written next to the dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    /// interactions / (users * items)
    pub density: f64,
    pub train_interactions: usize,
    pub val_interactions: usize,
    pub test_interactions: usize,
    pub filter: Option<FilterCounts>,
    pub malformed_rows: usize,
}

impl DatasetStats {
    pub fn from_split(split: &SplitDataset, filter: Option<FilterCounts>, malformed_rows: usize) -> Self {
        let total = |p: &Vec<Vec<u32>>| p.iter().map(Vec::len).sum::<usize>();
        let interactions = split.num_interactions();
        let cells = split.num_users() as f64 * split.num_items() as f64;
        DatasetStats {
            users: split.num_users(),
            items: split.num_items(),
            interactions,
            density: if cells > 0.0 { interactions as f64 / cells } else { 0.0 },
            train_interactions: total(&split.train),
            val_interactions: total(&split.val),
            test_interactions: total(&split.test),
            filter,
            malformed_rows,
        }
    }
}
