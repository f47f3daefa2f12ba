//! C interface to the pupil detector.
//!
//! A `PupilTracker` is an opaque handle owning a detector configuration and
//! the tracking state of one video stream. Every fallible call returns a
//! `PupilStatus`; on failure `pupil_last_error` describes the cause for the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pupil_core::detector::{DetectorConfig, Stage, Tracker};
use pupil_core::image::GrayImage;
use pupil_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PupilStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Internal = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PupilStage {
    None = 0,
    Edge = 1,
    Mser = 2,
}

/// Result of one frame. `x`, `y` are in input image pixels and only
/// meaningful when `found` is non-zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PupilDetection {
    pub found: i32,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    pub stage: PupilStage,
    pub used_roi: i32,
    pub elapsed_ms: f64,
}

/// Opaque tracker handle.
pub struct PupilTracker {
    inner: Tracker,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> PupilStatus {
    match e {
        Error::Io { .. } => PupilStatus::Io,
        Error::Parse { .. } | Error::Decode { .. } => PupilStatus::Parse,
        e if e.is_input_error() => PupilStatus::InvalidArgument,
        _ => PupilStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PupilStatus, String)>) -> PupilStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PupilStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside pupil library");
            PupilStatus::Panic
        }
    }
}

fn fail(e: Error) -> (PupilStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PupilStatus, String) {
    (PupilStatus::NullPointer, format!("{what} is null"))
}

/// Tracker with the default configuration. Never returns null.
#[no_mangle]
pub extern "C" fn pupil_tracker_new() -> *mut PupilTracker {
    let inner = Tracker::new(DetectorConfig::default()).expect("default config is valid");
    Box::into_raw(Box::new(PupilTracker { inner }))
}

/// Tracker configured from a `key = value` file. On success `*out` receives
/// a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pupil_tracker_new_from_config(path: *const c_char, out: *mut *mut PupilTracker) -> PupilStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (PupilStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let cfg = DetectorConfig::load(path).map_err(fail)?;
        let inner = Tracker::new(cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(PupilTracker { inner }));
        Ok(())
    })
}

/// Releases a tracker. Null is ignored.
///
/// # Safety
/// `tracker` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pupil_tracker_free(tracker: *mut PupilTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Forgets the previous detection so the next frame is searched in full.
///
/// # Safety
/// `tracker` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pupil_tracker_reset(tracker: *mut PupilTracker) -> PupilStatus {
    guard(|| {
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        t.inner.reset();
        Ok(())
    })
}

/// Enables (non-zero) or disables ROI tracking.
///
/// # Safety
/// `tracker` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pupil_tracker_set_tracking(tracker: *mut PupilTracker, enabled: i32) -> PupilStatus {
    guard(|| {
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        t.inner.tracking = enabled != 0;
        Ok(())
    })
}

/// Detects the pupil in an 8-bit grayscale frame of `height` rows, each
/// `stride` bytes apart.
///
/// # Safety
/// `tracker` must be a live handle, `data` must point to at least
/// `stride * height` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pupil_tracker_detect(
    tracker: *mut PupilTracker,
    data: *const u8,
    width: usize,
    height: usize,
    stride: usize,
    out: *mut PupilDetection,
) -> PupilStatus {
    guard(|| {
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if stride < width {
            return Err((
                PupilStatus::InvalidArgument,
                format!("stride {stride} is smaller than width {width}"),
            ));
        }
        let len = stride
            .checked_mul(height)
            .ok_or((PupilStatus::InvalidArgument, "frame size overflows".to_string()))?;
        let bytes = std::slice::from_raw_parts(data, len);
        let pixels: Vec<u8> = if stride == width {
            bytes.to_vec()
        } else {
            bytes.chunks(stride).flat_map(|row| &row[..width]).copied().collect()
        };
        let img = GrayImage::new(width, height, pixels).map_err(fail)?;
        let d = t.inner.detect(&img).map_err(fail)?;
        let (x, y) = d.center.unwrap_or((0.0, 0.0));
        *out = PupilDetection {
            found: d.center.is_some() as i32,
            x,
            y,
            confidence: d.confidence,
            stage: match d.stage {
                Stage::EdgeStage => PupilStage::Edge,
                Stage::MserStage => PupilStage::Mser,
                Stage::None => PupilStage::None,
            },
            used_roi: d.used_roi as i32,
            elapsed_ms: d.elapsed_ms,
        };
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null if the last call
/// succeeded. The pointer stays valid until the next call into the library on
/// the same thread.
#[no_mangle]
pub extern "C" fn pupil_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pupil_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
