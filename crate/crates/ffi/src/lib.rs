//! C interface to `mvgp`.
//!
//! Objects are opaque handles created by `mvgp_*_new`/`load`/`train` calls and
//! released with the matching `*_free`. Every function returns an
//! [`MvgpStatus`]; on failure a description is available from
//! [`mvgp_last_error`] until the next call on the same thread. Panics are
//! caught at the boundary and reported as [`MvgpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mvgp::dataset::{load_csv, LabelColumn};
use mvgp::persist::{load_model, save_model, DataSource, ModelFile};
use mvgp::trainer::{train, Method, OptimizerConfig, SearchConfig, TrainedModel};
use mvgp::{ErrorKind, MultiViewDataset};
use nalgebra::{DMatrix, DVector};

/// Result codes. The first four match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvgpStatus {
    Ok = 0,
    InvalidArgument = 1,
    DataError = 2,
    NumericalError = 3,
    NullPointer = 4,
    Panic = 5,
}

/// A multi-view dataset.
pub struct MvgpDataset(MultiViewDataset);

/// A trained model.
pub struct MvgpModel {
    model: TrainedModel,
    /// Set when the training data came from files, so the model can be saved.
    source: Option<DataSource>,
}

/// Training settings. Zero or null fields take the library defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MvgpTrainOptions {
    pub seed: u64,
    pub max_iters: usize,
    pub cv_repeats: usize,
    /// Candidate first-view weights (`a_len` values) or null.
    pub a_values: *const f64,
    pub a_len: usize,
    /// Candidate couplings (`b_len` values) or null.
    pub b_values: *const f64,
    pub b_len: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &mvgp::Error) -> MvgpStatus {
    match e.kind() {
        ErrorKind::Usage => MvgpStatus::InvalidArgument,
        ErrorKind::Data => MvgpStatus::DataError,
        ErrorKind::Numerical => MvgpStatus::NumericalError,
    }
}

struct Fail(MvgpStatus, String);

impl From<mvgp::Error> for Fail {
    fn from(e: mvgp::Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MvgpStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(MvgpStatus::InvalidArgument, msg.into())
}

/// Run `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MvgpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MvgpStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MvgpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn mvgp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mvgp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a dataset from row-major feature arrays.
///
/// `features[k]` points to `n_examples × dims[k]` values of view `k`.
/// `labels` holds `n_examples` values of `+1`/`-1`; pass null for data that
/// will only be used for prediction (every label is then `+1`).
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mvgp_dataset_new(
    n_examples: usize,
    n_views: usize,
    dims: *const usize,
    features: *const *const f64,
    labels: *const f64,
    out: *mut *mut MvgpDataset,
) -> MvgpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dims = slice_arg(dims, n_views, "dims")?;
        let features = slice_arg(features, n_views, "features")?;
        let views = dims
            .iter()
            .zip(features)
            .map(|(&d, &f)| {
                let values = slice_arg(f, n_examples * d, "view features")?;
                Ok(DMatrix::from_row_slice(n_examples, d, values))
            })
            .collect::<Result<Vec<_>, Fail>>()?;
        let y = if labels.is_null() {
            DVector::from_element(n_examples, 1.0)
        } else {
            DVector::from_column_slice(slice_arg(labels, n_examples, "labels")?)
        };
        let ds = MultiViewDataset::from_views(views, y)?;
        *out = Box::into_raw(Box::new(MvgpDataset(ds)));
        Ok(())
    })
}

/// Load a dataset from one CSV file per view. `label_column` is a column
/// name or 0-based index in the first file; null means `label`.
///
/// # Safety
/// `paths` must hold `n_paths` nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mvgp_dataset_load(
    paths: *const *const c_char,
    n_paths: usize,
    label_column: *const c_char,
    out: *mut *mut MvgpDataset,
) -> MvgpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (source, _) = source_arg(paths, n_paths, label_column)?;
        *out = Box::into_raw(Box::new(MvgpDataset(source.load()?)));
        Ok(())
    })
}

unsafe fn source_arg(
    paths: *const *const c_char,
    n_paths: usize,
    label_column: *const c_char,
) -> Result<(DataSource, LabelColumn), Fail> {
    let paths = slice_arg(paths, n_paths, "paths")?
        .iter()
        .map(|&p| str_arg(p, "path").map(PathBuf::from))
        .collect::<Result<Vec<_>, Fail>>()?;
    let label = if label_column.is_null() { "label" } else { str_arg(label_column, "label_column")? };
    let label_col: LabelColumn = label.parse().expect("infallible");
    let source = DataSource { paths, label_column: label.to_string(), pca: None };
    Ok((source, label_col))
}

/// # Safety
/// `dataset` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mvgp_dataset_free(dataset: *mut MvgpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mvgp_dataset_shape(
    dataset: *const MvgpDataset,
    n_examples: *mut usize,
    n_views: *mut usize,
) -> MvgpStatus {
    guard(|| {
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        *out_arg(n_examples, "n_examples")? = ds.n_examples();
        *out_arg(n_views, "n_views")? = ds.n_views();
        Ok(())
    })
}

fn configs(options: Option<&MvgpTrainOptions>) -> Result<(SearchConfig, OptimizerConfig), Fail> {
    let mut search = SearchConfig::default();
    let mut config = OptimizerConfig::default();
    if let Some(o) = options {
        config.seed = o.seed;
        if o.max_iters > 0 {
            config.max_iters = o.max_iters;
        }
        if o.cv_repeats > 0 {
            search.cv_repeats = o.cv_repeats;
        }
        // SAFETY: guaranteed by the caller of the exported function.
        unsafe {
            if !o.a_values.is_null() && o.a_len > 0 {
                search.a_values = slice_arg(o.a_values, o.a_len, "a_values")?.to_vec();
            }
            if !o.b_values.is_null() && o.b_len > 0 {
                search.b_values = slice_arg(o.b_values, o.b_len, "b_values")?.to_vec();
            }
        }
    }
    search.validate()?;
    config.validate()?;
    Ok((search, config))
}

/// Train `method` (`gp1`, `gp2`, `gp3`, `mvgp1` or `mvgp2`) on `dataset`.
/// `options` may be null for the defaults.
///
/// # Safety
/// `dataset` must be a live handle; `method` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mvgp_train(
    dataset: *const MvgpDataset,
    method: *const c_char,
    options: *const MvgpTrainOptions,
    out: *mut *mut MvgpModel,
) -> MvgpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        let method: Method = str_arg(method, "method")?.parse()?;
        let (search, config) = configs(options.as_ref())?;
        let model = train(method, ds, &search, &config)?;
        *out = Box::into_raw(Box::new(MvgpModel { model, source: None }));
        Ok(())
    })
}

/// Load CSV files, train on every row and keep the file references so that
/// the model can be written with [`mvgp_model_save`].
///
/// # Safety
/// As for [`mvgp_dataset_load`] and [`mvgp_train`].
#[no_mangle]
pub unsafe extern "C" fn mvgp_train_files(
    paths: *const *const c_char,
    n_paths: usize,
    label_column: *const c_char,
    method: *const c_char,
    options: *const MvgpTrainOptions,
    out: *mut *mut MvgpModel,
) -> MvgpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (source, label) = source_arg(paths, n_paths, label_column)?;
        let source = source.canonical()?;
        let ds = load_csv(&source.paths, &label)?;
        let method: Method = str_arg(method, "method")?.parse()?;
        let (search, config) = configs(options.as_ref())?;
        let model = train(method, &ds, &search, &config)?;
        *out = Box::into_raw(Box::new(MvgpModel { model, source: Some(source) }));
        Ok(())
    })
}

/// Write a model trained with [`mvgp_train_files`].
///
/// # Safety
/// `model` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mvgp_model_save(model: *const MvgpModel, path: *const c_char) -> MvgpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let path = str_arg(path, "path")?;
        let source = m
            .source
            .clone()
            .ok_or_else(|| invalid("only models trained from files can be saved"))?;
        let rows = (0..m.model.train_data.n_examples()).collect();
        save_model(path.as_ref(), &ModelFile::new(&m.model, source, rows))?;
        Ok(())
    })
}

/// Load a model file written by the command-line tool or [`mvgp_model_save`].
///
/// # Safety
/// `path` must be a nul-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mvgp_model_load(path: *const c_char, out: *mut *mut MvgpModel) -> MvgpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let model = load_model(str_arg(path, "path")?.as_ref())?;
        *out = Box::into_raw(Box::new(MvgpModel { model, source: None }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mvgp_model_free(model: *mut MvgpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Selected trade-off: weight of the first view and coupling strength.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mvgp_model_tradeoff(model: *const MvgpModel, a: *mut f64, b: *mut f64) -> MvgpStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        *out_arg(a, "a")? = m.tradeoff.a();
        *out_arg(b, "b")? = m.tradeoff.b();
        Ok(())
    })
}

/// Predict every row of `dataset`: combined scores and `±1` labels, each
/// written to an array of `len` values (`len` must equal the row count).
/// Either output may be null.
///
/// # Safety
/// Handles must be live and each non-null output valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn mvgp_model_predict(
    model: *const MvgpModel,
    dataset: *const MvgpDataset,
    scores: *mut f64,
    labels: *mut f64,
    len: usize,
) -> MvgpStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        if len != ds.n_examples() {
            return Err(invalid(format!("output length {len} for {} rows", ds.n_examples())));
        }
        let p = m.predict(ds)?;
        if !scores.is_null() {
            std::slice::from_raw_parts_mut(scores, len).copy_from_slice(p.scores.as_slice());
        }
        if !labels.is_null() {
            std::slice::from_raw_parts_mut(labels, len).copy_from_slice(&p.labels);
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_a_status() {
        assert_eq!(guard(|| panic!("boom")), MvgpStatus::Panic);
        let msg = unsafe { CStr::from_ptr(mvgp_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
        assert_eq!(guard(|| Ok(())), MvgpStatus::Ok);
        assert!(mvgp_last_error().is_null());
    }
}
