//! C ABI over the segmentation pipeline.
//!
//! Conventions:
//! - every fallible call returns a [`PsegStatus`]; on failure a message is
//!   available from [`pseg_last_error`] on the same thread;
//! - strings returned through `char **` are owned by the caller and must be
//!   released with [`pseg_string_free`];
//! - masks are row-major `uint8_t` buffers of `width * height` bytes where
//!   any non-zero byte is foreground.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pneumoseg::model::{load_checkpoint, UNet};
use pneumoseg::{infer, metrics, rle, BinaryMask, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Image = 5,
    Rle = 6,
    Model = 7,
    Internal = 8,
}

/// Opaque model handle.
pub struct PsegModel {
    model: UNet,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(PsegStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Rle(_) => PsegStatus::Rle,
            Error::Imaging(_) => PsegStatus::Image,
            Error::Checkpoint(_) => PsegStatus::Checkpoint,
            Error::Model(pneumoseg::error::ModelError::Checkpoint(_)) => PsegStatus::Checkpoint,
            Error::Model(_) | Error::Tensor(_) => PsegStatus::Model,
            Error::Io { .. } => PsegStatus::Io,
            Error::Config(_) | Error::Metric(_) => PsegStatus::InvalidArgument,
            Error::Data(_) | Error::Store(_) => PsegStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PsegStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(PsegStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PsegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PsegStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PsegStatus::Internal
        }
    }
}

unsafe fn bytes<'a>(data: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn mask(data: *const u8, width: usize, height: usize, what: &str) -> Result<BinaryMask, Failure> {
    let len = width
        .checked_mul(height)
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid("mask dimensions must be positive"))?;
    let raw = bytes(data, len, what)?;
    let norm: Vec<u8> = raw.iter().map(|&b| u8::from(b != 0)).collect();
    BinaryMask::from_row_major(width, height, &norm).map_err(|e| Failure(PsegStatus::Rle, e.to_string()))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(PsegStatus::Internal, "interior NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message for the last failing call on this thread; empty after success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn pseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static, NUL-terminated crate version.
#[no_mangle]
pub extern "C" fn pseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint from memory.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pseg_model_load_bytes(data: *const u8, len: usize, out: *mut *mut PsegModel) -> PsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = load_checkpoint(bytes(data, len, "data")?).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(PsegModel { model }));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pseg_model_load_file(path: *const c_char, out: *mut *mut PsegModel) -> PsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let raw = std::fs::read(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        let model = load_checkpoint(&raw).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(PsegModel { model }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from a load function and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pseg_model_free(model: *mut PsegModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side length of the square model input.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pseg_model_image_size(model: *const PsegModel, out: *mut usize) -> PsegStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.model.config().image_size;
        Ok(())
    })
}

/// Segments a PNG image; writes the mask RLE at model resolution.
///
/// # Safety
/// `model` must be a live handle, `png` must point to `len` bytes and
/// `out_rle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pseg_predict_png(
    model: *const PsegModel,
    png: *const u8,
    len: usize,
    theta: f32,
    min_area: usize,
    out_rle: *mut *mut c_char,
) -> PsegStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_rle.is_null() {
            return Err(null("out_rle"));
        }
        let pred = infer::predict(&m.model, bytes(png, len, "png")?, theta, min_area)?;
        put_string(out_rle, pred.rle)
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pseg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Canonical RLE of a row-major mask.
///
/// # Safety
/// `mask_data` must point to `width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pseg_rle_encode(
    mask_data: *const u8,
    width: usize,
    height: usize,
    out: *mut *mut c_char,
) -> PsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = mask(mask_data, width, height, "mask")?;
        put_string(out, rle::encode(&m))
    })
}

/// Decodes into a caller-owned buffer of `width * height` bytes (0 or 1).
///
/// # Safety
/// `rle_text` must be NUL-terminated; `out_mask` must hold
/// `width * height` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pseg_rle_decode(
    rle_text: *const c_char,
    width: usize,
    height: usize,
    out_mask: *mut u8,
) -> PsegStatus {
    guard(|| {
        let s = text(rle_text, "rle")?;
        if out_mask.is_null() {
            return Err(null("out_mask"));
        }
        let m = rle::decode(s, width, height).map_err(Error::from)?;
        std::slice::from_raw_parts_mut(out_mask, width * height).copy_from_slice(m.as_slice());
        Ok(())
    })
}

/// # Safety
/// `rle_text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pseg_rle_canonicalize(
    rle_text: *const c_char,
    width: usize,
    height: usize,
    out: *mut *mut c_char,
) -> PsegStatus {
    guard(|| {
        let s = text(rle_text, "rle")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put_string(out, rle::canonicalize(s, width, height).map_err(Error::from)?)
    })
}

unsafe fn score(
    a: *const u8,
    b: *const u8,
    width: usize,
    height: usize,
    out: *mut f32,
    f: fn(&BinaryMask, &BinaryMask) -> Result<f32, pneumoseg::error::MetricError>,
) -> PsegStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (x, y) = (mask(a, width, height, "a")?, mask(b, width, height, "b")?);
        *out = f(&x, &y).map_err(Error::from)?;
        Ok(())
    })
}

/// Dice coefficient of two masks; 1.0 when both are empty.
///
/// # Safety
/// `a` and `b` must each point to `width * height` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pseg_dice(a: *const u8, b: *const u8, width: usize, height: usize, out: *mut f32) -> PsegStatus {
    score(a, b, width, height, out, metrics::dice)
}

/// Intersection over union of two masks; 1.0 when both are empty.
///
/// # Safety
/// `a` and `b` must each point to `width * height` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pseg_iou(a: *const u8, b: *const u8, width: usize, height: usize, out: *mut f32) -> PsegStatus {
    score(a, b, width, height, out, metrics::iou)
}
