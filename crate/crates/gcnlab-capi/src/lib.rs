//! C ABI for the gcnlab library.
//!
//! The surface is deliberately small: dataset handles (load, generate,
//! save, inspect, free) and a JSON-in/JSON-out training entry point. Every
//! fallible function returns a [`GcnStatus`]; on failure a textual
//! description is available from [`gcnlab_last_error_message`].
//!
//! Conventions:
//! - handles are opaque; never dereference or copy them,
//! - strings returned through `*mut c_char` out-parameters are owned by the
//!   caller and must be released with [`gcnlab_string_free`],
//! - all functions are panic-safe: a caught panic is reported as
//!   [`GcnStatus::Panic`] instead of unwinding across the ABI.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gcnlab::data::{generate_sbm, load_bundle, save_bundle, GraphDataset, SbmParams};
use gcnlab::experiment::{train, RunConfig};
use gcnlab::rng::seeded;

/// Status code returned by every fallible API call.
///
/// The non-success codes mirror the `gcnlab` CLI exit codes (configuration,
/// data/IO, shape) plus ABI-specific conditions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcnStatus {
    /// The call succeeded.
    Ok = 0,
    /// Invalid configuration (bad hyperparameters, malformed config JSON).
    ConfigError = 1,
    /// Missing or malformed data, or an I/O failure.
    DataError = 2,
    /// Dimension mismatch or an operation on invalid values.
    ShapeError = 3,
    /// A required pointer argument was null.
    NullPointer = 4,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 5,
    /// An internal panic was caught at the ABI boundary.
    Panic = 6,
}

/// Opaque handle to a loaded or generated dataset.
pub struct GcnDataset(GraphDataset);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    let c = CString::new(sanitized).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &gcnlab::Error) -> GcnStatus {
    match err.exit_code() {
        1 => GcnStatus::ConfigError,
        2 => GcnStatus::DataError,
        _ => GcnStatus::ShapeError,
    }
}

fn fail(err: gcnlab::Error) -> GcnStatus {
    set_last_error(&err.to_string());
    status_of(&err)
}

/// Run `f` with panics converted to [`GcnStatus::Panic`].
fn guarded(f: impl FnOnce() -> GcnStatus) -> GcnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with a non-string payload".into());
            set_last_error(&format!("internal panic: {msg}"));
            GcnStatus::Panic
        }
    }
}

/// Convert a C string argument; records the error on failure.
///
/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, GcnStatus> {
    if ptr.is_null() {
        set_last_error(&format!("{name} must not be null"));
        return Err(GcnStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error(&format!("{name} is not valid UTF-8"));
        GcnStatus::InvalidUtf8
    })
}

/// Library version as a static NUL-terminated string. Never null; do not
/// free.
#[no_mangle]
pub extern "C" fn gcnlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Description of the most recent failure on the calling thread.
///
/// The pointer is valid until the next gcnlab call on the same thread; the
/// content is only meaningful immediately after a call returned a
/// non-success status. Never null; do not free.
#[no_mangle]
pub extern "C" fn gcnlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a dataset bundle directory into a new handle.
///
/// On success writes the handle to `out`; release it with
/// [`gcnlab_dataset_free`].
///
/// # Safety
/// `dir` must be null or a valid NUL-terminated string; `out` must be null
/// or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gcnlab_dataset_load(
    dir: *const c_char,
    out: *mut *mut GcnDataset,
) -> GcnStatus {
    guarded(|| {
        if out.is_null() {
            set_last_error("out must not be null");
            return GcnStatus::NullPointer;
        }
        let dir = match utf8_arg(dir, "dir") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match load_bundle(Path::new(dir)) {
            Ok((ds, _warnings)) => {
                *out = Box::into_raw(Box::new(GcnDataset(ds)));
                GcnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Generate a stochastic block model dataset, matching the CLI's
/// `gen-sbm --seed` behavior for the same parameters and seed.
///
/// # Safety
/// `out` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gcnlab_dataset_generate_sbm(
    blocks: usize,
    nodes_per_block: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_noise: f64,
    seed: u64,
    out: *mut *mut GcnDataset,
) -> GcnStatus {
    guarded(|| {
        if out.is_null() {
            set_last_error("out must not be null");
            return GcnStatus::NullPointer;
        }
        let params = SbmParams {
            blocks,
            nodes_per_block,
            p_in,
            p_out,
            feature_dim,
            feature_noise,
        };
        match generate_sbm(&params, &mut seeded(seed)) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(GcnDataset(ds)));
                GcnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Write a dataset handle to a bundle directory (created if needed).
///
/// # Safety
/// `ds` must be null or a handle obtained from this library; `dir` must be
/// null or a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gcnlab_dataset_save(
    ds: *const GcnDataset,
    dir: *const c_char,
) -> GcnStatus {
    guarded(|| {
        let Some(ds) = ds.as_ref() else {
            set_last_error("ds must not be null");
            return GcnStatus::NullPointer;
        };
        let dir = match utf8_arg(dir, "dir") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match save_bundle(&ds.0, Path::new(dir)) {
            Ok(()) => GcnStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Basic shape information for a dataset handle. Out-pointers may be null
/// to skip a field.
///
/// # Safety
/// `ds` must be null or a handle obtained from this library; out-pointers
/// must each be null or valid.
#[no_mangle]
pub unsafe extern "C" fn gcnlab_dataset_info(
    ds: *const GcnDataset,
    num_nodes: *mut usize,
    feature_dim: *mut usize,
    num_classes: *mut usize,
    num_edges: *mut usize,
) -> GcnStatus {
    guarded(|| {
        let Some(ds) = ds.as_ref() else {
            set_last_error("ds must not be null");
            return GcnStatus::NullPointer;
        };
        if !num_nodes.is_null() {
            *num_nodes = ds.0.n();
        }
        if !feature_dim.is_null() {
            *feature_dim = ds.0.dim();
        }
        if !num_classes.is_null() {
            *num_classes = ds.0.num_classes;
        }
        if !num_edges.is_null() {
            *num_edges = ds.0.edges.len();
        }
        GcnStatus::Ok
    })
}

/// Release a dataset handle. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle obtained from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcnlab_dataset_free(ds: *mut GcnDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Run one training job described by a JSON run configuration (the same
/// schema the CLI accepts) and return the resulting run record as JSON.
///
/// On success `*out_record_json` holds a NUL-terminated JSON document owned
/// by the caller; release it with [`gcnlab_string_free`].
///
/// # Safety
/// `config_json` must be null or a valid NUL-terminated string;
/// `out_record_json` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gcnlab_train_json(
    config_json: *const c_char,
    out_record_json: *mut *mut c_char,
) -> GcnStatus {
    guarded(|| {
        if out_record_json.is_null() {
            set_last_error("out_record_json must not be null");
            return GcnStatus::NullPointer;
        }
        let text = match utf8_arg(config_json, "config_json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let config = match RunConfig::from_json(text) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let record = match train(&config) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        let json = match serde_json::to_string(&record) {
            Ok(j) => j,
            Err(e) => {
                set_last_error(&format!("serializing the run record: {e}"));
                return GcnStatus::DataError;
            }
        };
        match CString::new(json) {
            Ok(c) => {
                *out_record_json = c.into_raw();
                GcnStatus::Ok
            }
            Err(_) => {
                set_last_error("run record contained an interior NUL byte");
                GcnStatus::DataError
            }
        }
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string obtained from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcnlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
