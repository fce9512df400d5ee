//! C ABI for the `csc` library.
//!
//! Objects are opaque handles created by `csc_*_new`/`_generate`/`_load`/`_train`
//! and released with the matching `_free`. Every fallible function returns a
//! [`CscStatus`]; on failure [`csc_last_error`] describes the problem.
//!
//! Buffers are sample-major: sample `j` of a `d`-dimensional set occupies
//! entries `j*d .. (j+1)*d`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use csc::checkpoint::Checkpoint;
use csc::cluster::{ssc, zf_ssc, SscConfig};
use csc::contrastive::{train, BackboneConfig, ResidualMode, TrainConfig};
use csc::datagen::{generate_clean, load_dataset, observe, save_dataset, ObservedDataset, SyntheticConfig};
use csc::eval::align_and_score;
use csc::numerics::Matrix;
use csc::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CscStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    InvalidInput = 3,
    DimensionMismatch = 4,
    Numerical = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

/// Residual connection pattern of the backbone.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CscResidual {
    None = 0,
    Block = 1,
    Full = 2,
}

/// Architecture and optimisation settings for contrastive training.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CscTrainOptions {
    pub depth: usize,
    pub width: usize,
    pub embed_dim: usize,
    pub head_hidden: usize,
    pub head_out: usize,
    pub residual: CscResidual,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub seed: u64,
}

/// Incomplete dataset: values, observation mask and optional labels.
pub struct CscDataset {
    inner: ObservedDataset,
}

/// Trained contrastive or masked-autoencoder model.
pub struct CscModel {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CscStatus {
    match err {
        Error::InvalidConfig(_) => CscStatus::InvalidConfig,
        Error::InvalidInput(_) => CscStatus::InvalidInput,
        Error::DimensionMismatch(_) => CscStatus::DimensionMismatch,
        Error::RankDeficient { .. } | Error::NotSymmetric(_) | Error::DegenerateProjection(_) | Error::NonFinite(_) => {
            CscStatus::Numerical
        }
        Error::Io { .. } => CscStatus::Io,
        Error::Parse { .. } | Error::Json { .. } => CscStatus::Parse,
    }
}

struct Failure(CscStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CscStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CscStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CscStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            CscStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(CscStatus::InvalidInput, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_slice<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<(), Failure> {
    if expected != got {
        return Err(Failure(
            CscStatus::DimensionMismatch,
            format!("{what} needs {expected} entries, buffer holds {got}"),
        ));
    }
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn csc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn csc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Draws a synthetic union-of-subspaces dataset with noise `sigma` and
/// per-entry sampling rate `rho`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn csc_dataset_generate(
    k: usize,
    r: usize,
    d: usize,
    n_total: usize,
    sigma: f64,
    rho: f64,
    seed: u64,
    out: *mut *mut CscDataset,
) -> CscStatus {
    guard(|| {
        let cfg = SyntheticConfig {
            k,
            r,
            d,
            n_total,
            sigma,
            rho,
            seed,
        };
        let gt = generate_clean(&cfg)?;
        let inner = observe(&gt, sigma, rho, seed)?;
        store(out, CscDataset { inner })
    })
}

/// Builds a dataset from sample-major `values` and `mask` buffers of
/// `d * n` entries. Values at unobserved entries are ignored. `labels` may
/// be null.
///
/// # Safety
/// Non-null buffers must hold `d * n` (values, mask) or `n` (labels) elements.
#[no_mangle]
pub unsafe extern "C" fn csc_dataset_new(
    d: usize,
    n: usize,
    values: *const f64,
    mask: *const f64,
    labels: *const usize,
    out: *mut *mut CscDataset,
) -> CscStatus {
    guard(|| {
        let len = d
            .checked_mul(n)
            .ok_or_else(|| Failure(CscStatus::InvalidInput, "d * n overflows".into()))?;
        let values = slice_arg(values, len, "values")?;
        let mask = slice_arg(mask, len, "mask")?;
        let labels = if labels.is_null() {
            None
        } else {
            Some(slice_arg(labels, n, "labels")?.to_vec())
        };
        let mask = Matrix::from_fn(d, n, |i, j| mask[j * d + i]);
        let values = Matrix::from_fn(d, n, |i, j| if mask[(i, j)] == 0.0 { 0.0 } else { values[j * d + i] });
        let inner = ObservedDataset::new(values, mask, labels)?;
        store(out, CscDataset { inner })
    })
}

/// Reads a dataset directory written by [`csc_dataset_save`] or the CLI.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn csc_dataset_load(path: *const c_char, out: *mut *mut CscDataset) -> CscStatus {
    guard(|| {
        let inner = load_dataset(path_arg(path)?)?;
        store(out, CscDataset { inner })
    })
}

/// # Safety
/// `ds` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn csc_dataset_save(ds: *const CscDataset, path: *const c_char) -> CscStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        save_dataset(&ds.inner, path_arg(path)?)?;
        Ok(())
    })
}

/// Ambient dimension, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csc_dataset_dim(ds: *const CscDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dim())
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csc_dataset_len(ds: *const CscDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Copies the ground-truth labels into `out` (`len` must equal the sample count).
///
/// # Safety
/// `ds` must be a live handle and `out` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn csc_dataset_labels(ds: *const CscDataset, out: *mut usize, len: usize) -> CscStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let labels = ds
            .inner
            .labels()
            .ok_or_else(|| Failure(CscStatus::InvalidInput, "dataset has no labels".into()))?;
        check_len(labels.len(), len, "labels")?;
        out_slice(out, len, "labels")?.copy_from_slice(labels);
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csc_dataset_free(ds: *mut CscDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Library defaults for a `input_dim`-dimensional dataset.
#[no_mangle]
pub extern "C" fn csc_train_options_default(input_dim: usize) -> CscTrainOptions {
    let b = BackboneConfig::for_input(input_dim);
    let t = TrainConfig::default();
    CscTrainOptions {
        depth: b.depth,
        width: b.width,
        embed_dim: b.embed_dim,
        head_hidden: b.head_hidden,
        head_out: b.head_out,
        residual: CscResidual::None,
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        temperature: t.temperature,
        seed: t.seed,
    }
}

/// Trains a contrastive model on `ds`. `loss_trace` may be null; otherwise
/// it receives one mean loss per epoch and must hold `opts.epochs` entries.
///
/// # Safety
/// `ds` and `opts` must be valid, `out` writable, and `loss_trace` null or
/// large enough.
#[no_mangle]
pub unsafe extern "C" fn csc_model_train(
    ds: *const CscDataset,
    opts: *const CscTrainOptions,
    loss_trace: *mut f64,
    out: *mut *mut CscModel,
) -> CscStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let o = *deref(opts, "options")?;
        let config = BackboneConfig {
            input_dim: ds.inner.dim(),
            depth: o.depth,
            width: o.width,
            residual: match o.residual {
                CscResidual::None => ResidualMode::None,
                CscResidual::Block => ResidualMode::Block,
                CscResidual::Full => ResidualMode::Full,
            },
            embed_dim: o.embed_dim,
            head_hidden: o.head_hidden,
            head_out: o.head_out,
        };
        let tcfg = TrainConfig {
            batch_size: o.batch_size,
            epochs: o.epochs,
            learning_rate: o.learning_rate,
            temperature: o.temperature,
            seed: o.seed,
            ..TrainConfig::default()
        };
        let trained = train(&ds.inner, &config, &tcfg)?;
        if !loss_trace.is_null() {
            out_slice(loss_trace, trained.loss_trace.len(), "loss trace")?.copy_from_slice(&trained.loss_trace);
        }
        store(
            out,
            CscModel {
                inner: Checkpoint::Csc {
                    config,
                    params: trained.params,
                },
            },
        )
    })
}

/// Reads a `model.json` checkpoint of either kind.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn csc_model_load(path: *const c_char, out: *mut *mut CscModel) -> CscStatus {
    guard(|| {
        let inner = Checkpoint::load(path_arg(path)?)?;
        store(out, CscModel { inner })
    })
}

/// # Safety
/// `model` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn csc_model_save(model: *const CscModel, path: *const c_char) -> CscStatus {
    guard(|| {
        deref(model, "model")?.inner.save(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csc_model_free(model: *mut CscModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension of the representation produced by [`csc_model_embed`], or 0
/// for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csc_model_embed_dim(model: *const CscModel) -> usize {
    model.as_ref().map_or(0, |m| match &m.inner {
        Checkpoint::Csc { config, .. } => config.embed_dim,
        Checkpoint::Mae { config, .. } => config.bottleneck,
    })
}

/// Writes the representation of every sample, sample-major, into `out`
/// (`len` = embed_dim × sample count).
///
/// # Safety
/// Handles must be live and `out` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn csc_model_embed(
    model: *const CscModel,
    ds: *const CscDataset,
    out: *mut f64,
    len: usize,
) -> CscStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let ds = deref(ds, "dataset")?;
        let h = model.inner.embed(&ds.inner)?;
        let (p, n) = h.shape();
        check_len(p * n, len, "embedding")?;
        let buf = out_slice(out, len, "embedding")?;
        for j in 0..n {
            for i in 0..p {
                buf[j * p + i] = h[(i, j)];
            }
        }
        Ok(())
    })
}

/// Default lasso weight relative to the per-column maximum.
#[no_mangle]
pub extern "C" fn csc_ssc_lambda_default() -> f64 {
    SscConfig::new(1).lambda_rel
}

fn ssc_config(k: usize, lambda_rel: f64, seed: u64) -> SscConfig {
    SscConfig {
        lambda_rel,
        seed,
        ..SscConfig::new(k)
    }
}

/// Sparse subspace clustering of `n` sample-major `d`-dimensional points
/// into `k` groups; labels in `0..k` go to `labels` (`n` entries).
///
/// # Safety
/// `points` must hold `d * n` elements and `labels` `n` elements.
#[no_mangle]
pub unsafe extern "C" fn csc_cluster(
    points: *const f64,
    d: usize,
    n: usize,
    k: usize,
    lambda_rel: f64,
    seed: u64,
    labels: *mut usize,
) -> CscStatus {
    guard(|| {
        let len = d
            .checked_mul(n)
            .ok_or_else(|| Failure(CscStatus::InvalidInput, "d * n overflows".into()))?;
        let buf = slice_arg(points, len, "points")?;
        let h = Matrix::from_fn(d, n, |i, j| buf[j * d + i]);
        let out = ssc(&h, &ssc_config(k, lambda_rel, seed))?;
        out_slice(labels, n, "labels")?.copy_from_slice(&out.labels);
        Ok(())
    })
}

/// SSC on the zero-filled observations of `ds`.
///
/// # Safety
/// `ds` must be a live handle and `labels` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn csc_cluster_zero_filled(
    ds: *const CscDataset,
    k: usize,
    lambda_rel: f64,
    seed: u64,
    labels: *mut usize,
    len: usize,
) -> CscStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        check_len(ds.inner.len(), len, "labels")?;
        let out = zf_ssc(&ds.inner, &ssc_config(k, lambda_rel, seed))?;
        out_slice(labels, len, "labels")?.copy_from_slice(&out.labels);
        Ok(())
    })
}

/// Clustering error (fraction misassigned after the best label matching).
///
/// # Safety
/// `pred` and `truth` must hold `n` elements; `error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csc_score(pred: *const usize, truth: *const usize, n: usize, error: *mut f64) -> CscStatus {
    guard(|| {
        let pred = slice_arg(pred, n, "pred")?;
        let truth = slice_arg(truth, n, "truth")?;
        let result = align_and_score(pred, truth)?;
        if error.is_null() {
            return Err(null("error"));
        }
        *error = result.error;
        Ok(())
    })
}
