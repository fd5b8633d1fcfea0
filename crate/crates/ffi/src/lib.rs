//! C ABI for the waveop toolkit: load a trained checkpoint behind an opaque
//! handle, run forward passes on caller-owned buffers, and evaluate the
//! basic metrics. Every function returns a status code; the message of the
//! most recent failure on the calling thread is available through
//! [`waveop_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use waveop_core::error::Error;
use waveop_core::trainer::load_checkpoint;

/// Status codes: 0 success; 1 null pointer or invalid UTF-8; 2 argument or
/// configuration errors; 3 I/O and file-format errors; 4 numerical failures.
pub const WAVEOP_OK: i32 = 0;
pub const WAVEOP_ERR_NULL: i32 = 1;
pub const WAVEOP_ERR_ARGUMENT: i32 = 2;
pub const WAVEOP_ERR_IO: i32 = 3;
pub const WAVEOP_ERR_NUMERIC: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message.into());
}

fn fail(err: Error) -> i32 {
    let code = err.exit_code();
    set_error(err.to_string());
    code
}

fn fail_null(what: &str) -> i32 {
    set_error(format!("null pointer: {what}"));
    WAVEOP_ERR_NULL
}

fn guarded(body: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            WAVEOP_ERR_NUMERIC
        }
    }
}

/// A loaded model (checkpoint parameters plus configuration). Opaque.
pub struct WaveopModel {
    inner: waveop_core::fno::FnoModel,
}

/// Copy the calling thread's most recent error message into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn waveop_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Static version string of the library.
#[no_mangle]
pub extern "C" fn waveop_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a checkpoint file into a model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn waveop_model_load(
    path: *const c_char,
    out: *mut *mut WaveopModel,
) -> i32 {
    guarded(|| {
        if path.is_null() {
            return fail_null("path");
        }
        if out.is_null() {
            return fail_null("out");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(p) => p,
            Err(_) => {
                set_error("path is not valid UTF-8");
                return WAVEOP_ERR_NULL;
            }
        };
        match load_checkpoint(Path::new(path)) {
            Ok(ckpt) => {
                let handle = Box::new(WaveopModel { inner: ckpt.model });
                unsafe { *out = Box::into_raw(handle) };
                WAVEOP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must have come from [`waveop_model_load`] and not been freed.
#[no_mangle]
pub unsafe extern "C" fn waveop_model_free(model: *mut WaveopModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Input channel count of a loaded model (0 on null).
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn waveop_model_in_channels(model: *const WaveopModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.config.in_channels
}

/// Output channel count of a loaded model (0 on null).
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn waveop_model_out_channels(model: *const WaveopModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.config.out_channels
}

/// Forward pass on one channel-major field of `in_channels * h * w` doubles;
/// writes `out_channels * h * w` doubles. Any power-of-two grid carrying the
/// model's retained modes works — spectral weights re-embed automatically.
///
/// # Safety
/// `input` and `output` must point to buffers of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn waveop_model_forward(
    model: *const WaveopModel,
    input: *const f64,
    in_channels: usize,
    h: usize,
    w: usize,
    output: *mut f64,
    output_len: usize,
) -> i32 {
    guarded(|| {
        if model.is_null() {
            return fail_null("model");
        }
        if input.is_null() {
            return fail_null("input");
        }
        if output.is_null() {
            return fail_null("output");
        }
        let model = &unsafe { &*model }.inner;
        if in_channels != model.config.in_channels {
            set_error(format!(
                "input has {in_channels} channels, model expects {}",
                model.config.in_channels
            ));
            return WAVEOP_ERR_ARGUMENT;
        }
        let want_out = model.config.out_channels * h * w;
        if output_len != want_out {
            set_error(format!(
                "output buffer holds {output_len} doubles, model produces {want_out}"
            ));
            return WAVEOP_ERR_ARGUMENT;
        }
        let fields =
            vec![unsafe { std::slice::from_raw_parts(input, in_channels * h * w) }.to_vec()];
        match model.forward_fields(&fields, h, w) {
            Ok(out) => {
                unsafe {
                    std::ptr::copy_nonoverlapping(out[0].as_ptr(), output, want_out);
                }
                WAVEOP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Normalized mean squared error of two real vectors (interleaved complex
/// counts as two reals); writes the linear value and its dB form.
///
/// # Safety
/// `estimate` and `truth` must hold `len` doubles; out-pointers non-null.
#[no_mangle]
pub unsafe extern "C" fn waveop_nmse(
    estimate: *const f64,
    truth: *const f64,
    len: usize,
    linear: *mut f64,
    db: *mut f64,
) -> i32 {
    guarded(|| {
        if estimate.is_null() || truth.is_null() || linear.is_null() || db.is_null() {
            return fail_null("nmse argument");
        }
        let est = unsafe { std::slice::from_raw_parts(estimate, len) };
        let tru = unsafe { std::slice::from_raw_parts(truth, len) };
        match waveop_core::metrics::nmse(est, tru) {
            Ok((lin, decibel)) => {
                unsafe {
                    *linear = lin;
                    *db = decibel;
                }
                WAVEOP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Free-space scalar Helmholtz kernel between two points separated by
/// (dx, dy, dz) at wavenumber k0.
///
/// # Safety
/// `re` and `im` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn waveop_green(
    k0: f64,
    dx: f64,
    dy: f64,
    dz: f64,
    re: *mut f64,
    im: *mut f64,
) -> i32 {
    guarded(|| {
        if re.is_null() || im.is_null() {
            return fail_null("green output");
        }
        match waveop_core::oracles::green([dx, dy, dz], [0.0, 0.0, 0.0], k0) {
            Ok(g) => {
                unsafe {
                    *re = g.re;
                    *im = g.im;
                }
                WAVEOP_OK
            }
            Err(e) => fail(e),
        }
    })
}
