//! C ABI over `magnn`: open a prepared dataset, load a checkpoint against it,
//! compute Recall@K / NDCG@K and top-K recommendations.
//!
//! Every fallible function returns a [`MagnnStatus`]; on failure the message
//! is available from [`magnn_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use magnn::dataset::{read_dataset, SplitDataset};
use magnn::evaluator::{evaluate, rank_items, EvalMode};
use magnn::itemgraph::ItemGraph;
use magnn::model::{load_checkpoint, AnyParams, Checkpoint};
use magnn::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Io = 4,
    Format = 5,
    Incompatible = 6,
    Config = 7,
    Runtime = 8,
    Panic = 9,
}

/// Which held-out split to evaluate or recommend for.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagnnSplit {
    /// Input is the training prefix.
    Val = 0,
    /// Input is training plus validation.
    Test = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MagnnMetrics {
    pub recall: f64,
    pub ndcg: f64,
    pub evaluated_users: usize,
    pub skipped_users: usize,
}

/// Opaque prepared dataset.
pub struct MagnnDataset {
    split: SplitDataset,
}

/// Opaque trained model bound to the dataset it was loaded against.
pub struct MagnnModel {
    ckpt: Checkpoint,
    graph: ItemGraph,
    users: usize,
    items: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MagnnStatus {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => MagnnStatus::NotFound,
        Error::Io { .. } => MagnnStatus::Io,
        Error::Format(_) | Error::Json(_) => MagnnStatus::Format,
        Error::Incompatible(_) | Error::Shape { .. } => MagnnStatus::Incompatible,
        Error::Config(_) => MagnnStatus::Config,
        _ => MagnnStatus::Runtime,
    }
}

struct Failure(MagnnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MagnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MagnnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            MagnnStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(MagnnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(MagnnStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn mode(split: MagnnSplit) -> EvalMode {
    match split {
        MagnnSplit::Val => EvalMode::Val,
        MagnnSplit::Test => EvalMode::Test,
    }
}

fn check_bound(model: &MagnnModel, data: &MagnnDataset) -> Result<(), Failure> {
    if model.users != data.split.num_users() || model.items != data.split.num_items() {
        return Err(Failure(
            MagnnStatus::Incompatible,
            format!(
                "model was loaded for {} users / {} items, dataset has {} / {}",
                model.users,
                model.items,
                data.split.num_users(),
                data.split.num_items()
            ),
        ));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn magnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn magnn_dataset_open(path: *const c_char, out: *mut *mut MagnnDataset) -> MagnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let split = read_dataset(&path)?;
        *out = Box::into_raw(Box::new(MagnnDataset { split }));
        Ok(())
    })
}

/// # Safety
/// `data` must come from [`magnn_dataset_open`] (or be null) and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn magnn_dataset_free(data: *mut MagnnDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// # Safety
/// `data` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn magnn_dataset_num_users(data: *const MagnnDataset) -> usize {
    data.as_ref().map_or(0, |d| d.split.num_users())
}

/// # Safety
/// `data` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn magnn_dataset_num_items(data: *const MagnnDataset) -> usize {
    data.as_ref().map_or(0, |d| d.split.num_items())
}

/// Loads a checkpoint and builds its item graph from the dataset's training
/// sequences. The dataset handle is not retained.
///
/// # Safety
/// `path` must be a nul-terminated string, `data` a live dataset handle and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn magnn_model_load(
    path: *const c_char,
    data: *const MagnnDataset,
    out: *mut *mut MagnnModel,
) -> MagnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let data = data.as_ref().ok_or_else(|| null("dataset"))?;
        let path = path_arg(path, "path")?;
        let ckpt = load_checkpoint(&path)?;
        let (users, items) = (ckpt.params.num_users(), ckpt.params.num_items());
        if users != data.split.num_users() || items != data.split.num_items() {
            return Err(Failure(
                MagnnStatus::Incompatible,
                format!(
                    "checkpoint has {users} users / {items} items, dataset has {} / {}",
                    data.split.num_users(),
                    data.split.num_items()
                ),
            ));
        }
        let graph = ItemGraph::build(&data.split.train, items, &ckpt.config.graph)?;
        *out = Box::into_raw(Box::new(MagnnModel {
            ckpt,
            graph,
            users,
            items,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`magnn_model_load`] (or be null) and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn magnn_model_free(model: *mut MagnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Recall@k and NDCG@k averaged over users with held-out items.
///
/// # Safety
/// `model` and `data` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn magnn_evaluate(
    model: *const MagnnModel,
    data: *const MagnnDataset,
    split: MagnnSplit,
    k: usize,
    out: *mut MagnnMetrics,
) -> MagnnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let data = data.as_ref().ok_or_else(|| null("dataset"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if k == 0 {
            return Err(Failure(MagnnStatus::InvalidArgument, "k must be positive".into()));
        }
        check_bound(model, data)?;
        let cfg = &model.ckpt.config;
        let report = match &model.ckpt.params {
            AnyParams::F32(p) => evaluate(p, &data.split, &model.graph, cfg, mode(split), k)?,
            AnyParams::F64(p) => evaluate(p, &data.split, &model.graph, cfg, mode(split), k)?,
        };
        *out = MagnnMetrics {
            recall: report.recall,
            ndcg: report.ndcg,
            evaluated_users: report.evaluated_users,
            skipped_users: report.skipped_users,
        };
        Ok(())
    })
}

/// Writes up to `k` item indices for `user`, best first, into `items` and
/// the count into `written`. Items already in the split's input are skipped.
///
/// # Safety
/// `items` must point to at least `k` writable `uint32_t`; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn magnn_recommend(
    model: *const MagnnModel,
    data: *const MagnnDataset,
    split: MagnnSplit,
    user: usize,
    k: usize,
    items: *mut u32,
    written: *mut usize,
) -> MagnnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let data = data.as_ref().ok_or_else(|| null("dataset"))?;
        let written = written.as_mut().ok_or_else(|| null("written"))?;
        if items.is_null() && k > 0 {
            return Err(null("items"));
        }
        check_bound(model, data)?;
        if user >= model.users {
            return Err(Failure(
                MagnnStatus::InvalidArgument,
                format!("user {user} out of range for {} users", model.users),
            ));
        }
        let cfg = &model.ckpt.config;
        let ranked = match &model.ckpt.params {
            AnyParams::F32(p) => rank_items(p, &model.graph, &data.split, cfg, user, mode(split))?,
            AnyParams::F64(p) => rank_items(p, &model.graph, &data.split, cfg, user, mode(split))?,
        };
        let n = ranked.len().min(k);
        if n > 0 {
            std::slice::from_raw_parts_mut(items, n).copy_from_slice(&ranked[..n]);
        }
        *written = n;
        Ok(())
    })
}

/// Original identifier of item `index` as a nul-terminated string. The caller
/// releases it with [`magnn_string_free`]. Returns null when out of range.
///
/// # Safety
/// `data` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn magnn_dataset_item_id(data: *const MagnnDataset, index: usize) -> *mut c_char {
    data.as_ref()
        .and_then(|d| d.split.items.get_index(index))
        .and_then(|s| CString::new(s.as_str()).ok())
        .map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `s` must come from this library (or be null) and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn magnn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
