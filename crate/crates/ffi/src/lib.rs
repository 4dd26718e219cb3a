//! C ABI for the apnea-screen pipeline.
//!
//! Every fallible call returns an [`ApneaStatus`]; on failure a message is
//! kept per thread and can be read with [`apnea_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.
//! Strings handed out by the library are released with [`apnea_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::c_char;

use apnea_screen::config::RunConfig;
use apnea_screen::detector::{DetectedEvent, EventSource, Severity};
use apnea_screen::evaluation::{
    binary_screening, match_events, severity_metrics, ConfusionMatrix4, Ratio,
};
use apnea_screen::loocv::{run_loocv, screen_subject};
use apnea_screen::recording::{load_database, Span, Subject};
use apnea_screen::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApneaStatus {
    Ok = 0,
    Io = 1,
    Invalid = 2,
    DatabaseTooSmall = 3,
    UnknownSubject = 4,
    MissingAnnotations = 5,
    NullPointer = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApneaSeverity {
    Normal = 0,
    Mild = 1,
    Moderate = 2,
    Severe = 3,
}

impl From<Severity> for ApneaSeverity {
    fn from(s: Severity) -> Self {
        match s {
            Severity::Normal => ApneaSeverity::Normal,
            Severity::Mild => ApneaSeverity::Mild,
            Severity::Moderate => ApneaSeverity::Moderate,
            Severity::Severe => ApneaSeverity::Severe,
        }
    }
}

/// A time span in seconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApneaSpan {
    pub start_s: f64,
    pub duration_s: f64,
}

/// A detected event; `desat_correction` is 1 when the event came from the
/// desaturation rule rather than the classifier.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApneaEvent {
    pub start_s: f64,
    pub duration_s: f64,
    pub desat_correction: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApneaEventScore {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub ppv: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class values are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApneaSeverityMetrics {
    pub accuracy: f64,
    pub sensitivity: [f64; 4],
    pub ppv: [f64; 4],
}

/// Undefined values are NaN; an infinite LR+ is `INFINITY`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApneaBinaryStats {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub lr_plus: f64,
    pub lr_minus: f64,
    pub degenerate: u8,
}

/// Loaded subject database.
pub struct ApneaDatabase {
    subjects: Vec<Subject>,
}

/// Result of screening one subject.
pub struct ApneaScreening {
    rei: f64,
    severity: Severity,
    events: Vec<DetectedEvent>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> ApneaStatus {
    match err.exit_code() {
        1 => ApneaStatus::Io,
        3 => ApneaStatus::DatabaseTooSmall,
        4 => ApneaStatus::UnknownSubject,
        5 => ApneaStatus::MissingAnnotations,
        _ => ApneaStatus::Invalid,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), ApneaStatus>) -> ApneaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ApneaStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            ApneaStatus::Panic
        }
    }
}

fn fail(err: Error) -> ApneaStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> ApneaStatus {
    set_error(format!("{what} is null"));
    ApneaStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, ApneaStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        ApneaStatus::Invalid
    })
}

unsafe fn config_arg(p: *const c_char) -> Result<RunConfig, ApneaStatus> {
    if p.is_null() {
        return Ok(RunConfig::default());
    }
    RunConfig::from_json(str_arg(p, "config_json")?).map_err(fail)
}

unsafe fn matrix_arg(p: *const u64) -> Result<ConfusionMatrix4, ApneaStatus> {
    if p.is_null() {
        return Err(null("matrix"));
    }
    let flat = std::slice::from_raw_parts(p, 16);
    let mut m = [[0u64; 4]; 4];
    for (i, v) in flat.iter().enumerate() {
        m[i / 4][i % 4] = *v;
    }
    Ok(ConfusionMatrix4::new(m))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior nul").into_raw()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn apnea_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn apnea_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads every subject directory under `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apnea_database_load(path: *const c_char, out: *mut *mut ApneaDatabase) -> ApneaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let subjects = load_database(path).map_err(fail)?;
        *out = Box::into_raw(Box::new(ApneaDatabase { subjects }));
        Ok(())
    })
}

/// # Safety
/// `db` must come from [`apnea_database_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn apnea_database_free(db: *mut ApneaDatabase) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Number of subjects; 0 for NULL.
///
/// # Safety
/// `db` must be NULL or a live database handle.
#[no_mangle]
pub unsafe extern "C" fn apnea_database_len(db: *const ApneaDatabase) -> usize {
    db.as_ref().map_or(0, |d| d.subjects.len())
}

/// Copies the id of subject `index` (sorted by id) into a new string.
///
/// # Safety
/// `db` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apnea_database_subject_id(
    db: *const ApneaDatabase,
    index: usize,
    out: *mut *mut c_char,
) -> ApneaStatus {
    guard(|| {
        let db = db.as_ref().ok_or_else(|| null("db"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = db.subjects.get(index).ok_or_else(|| {
            set_error(format!("index {index} out of range"));
            ApneaStatus::Invalid
        })?;
        *out = into_c_string(s.id.clone());
        Ok(())
    })
}

/// Screens `subject_id` against the other annotated subjects of `db`.
/// `config_json` may be NULL for defaults.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apnea_screen_subject(
    db: *const ApneaDatabase,
    subject_id: *const c_char,
    config_json: *const c_char,
    out: *mut *mut ApneaScreening,
) -> ApneaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let db = db.as_ref().ok_or_else(|| null("db"))?;
        let id = str_arg(subject_id, "subject_id")?;
        let cfg = config_arg(config_json)?;
        let s = screen_subject(&db.subjects, id, &cfg.pipeline()).map_err(fail)?;
        *out = Box::into_raw(Box::new(ApneaScreening {
            rei: s.report.rei,
            severity: s.report.severity,
            events: s.report.events,
        }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`apnea_screen_subject`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn apnea_screening_free(s: *mut ApneaScreening) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Events per recording hour; NaN for NULL.
///
/// # Safety
/// `s` must be NULL or a live screening handle.
#[no_mangle]
pub unsafe extern "C" fn apnea_screening_rei(s: *const ApneaScreening) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.rei)
}

/// # Safety
/// `s` must be a live screening handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apnea_screening_severity(
    s: *const ApneaScreening,
    out: *mut ApneaSeverity,
) -> ApneaStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("screening"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = s.severity.into();
        Ok(())
    })
}

/// Number of detected events; 0 for NULL.
///
/// # Safety
/// `s` must be NULL or a live screening handle.
#[no_mangle]
pub unsafe extern "C" fn apnea_screening_event_count(s: *const ApneaScreening) -> usize {
    s.as_ref().map_or(0, |s| s.events.len())
}

/// # Safety
/// `s` must be a live screening handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apnea_screening_event(
    s: *const ApneaScreening,
    index: usize,
    out: *mut ApneaEvent,
) -> ApneaStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("screening"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let e = s.events.get(index).ok_or_else(|| {
            set_error(format!("event index {index} out of range"));
            ApneaStatus::Invalid
        })?;
        *out = ApneaEvent {
            start_s: e.start_s,
            duration_s: e.duration_s,
            desat_correction: u8::from(e.source == EventSource::DesatCorrection),
        };
        Ok(())
    })
}

/// Event-by-event score. Both arrays must be sorted and disjoint; either may
/// be NULL when its length is 0.
///
/// # Safety
/// Arrays must hold the stated number of elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apnea_match_events(
    detected: *const ApneaSpan,
    n_detected: usize,
    annotated: *const ApneaSpan,
    n_annotated: usize,
    out: *mut ApneaEventScore,
) -> ApneaStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let spans = |p: *const ApneaSpan, n: usize, what: &str| -> Result<Vec<Span>, ApneaStatus> {
            if n == 0 {
                return Ok(Vec::new());
            }
            if p.is_null() {
                return Err(null(what));
            }
            Ok(std::slice::from_raw_parts(p, n)
                .iter()
                .map(|s| Span {
                    start_s: s.start_s,
                    duration_s: s.duration_s,
                })
                .collect())
        };
        let d = spans(detected, n_detected, "detected")?;
        let a = spans(annotated, n_annotated, "annotated")?;
        let s = match_events(&d, &a).map_err(fail)?;
        *out = ApneaEventScore {
            tp: s.tp as u64,
            fp: s.fp as u64,
            fn_: s.fn_ as u64,
            ppv: s.ppv,
            recall: s.recall,
            f1: s.f1,
        };
        Ok(())
    })
}

/// `matrix` is 16 counts in row-major order, rows predicted and columns
/// expert severity.
///
/// # Safety
/// `matrix` must hold 16 values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apnea_severity_metrics(
    matrix: *const u64,
    out: *mut ApneaSeverityMetrics,
) -> ApneaStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = severity_metrics(&matrix_arg(matrix)?).map_err(fail)?;
        *out = ApneaSeverityMetrics {
            accuracy: m.accuracy,
            sensitivity: m.sensitivity.map(|v| v.unwrap_or(f64::NAN)),
            ppv: m.ppv.map(|v| v.unwrap_or(f64::NAN)),
        };
        Ok(())
    })
}

/// Screening statistics at the moderate cutoff.
///
/// # Safety
/// `matrix` must hold 16 values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apnea_binary_screening(matrix: *const u64, out: *mut ApneaBinaryStats) -> ApneaStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let b = binary_screening(&matrix_arg(matrix)?).map_err(fail)?;
        let lr = |r: Ratio| r.value().unwrap_or(f64::NAN);
        *out = ApneaBinaryStats {
            tp: b.tp,
            fp: b.fp,
            tn: b.tn,
            fn_: b.fn_,
            sensitivity: b.sensitivity.unwrap_or(f64::NAN),
            specificity: b.specificity.unwrap_or(f64::NAN),
            accuracy: b.accuracy,
            lr_plus: lr(b.lr_plus),
            lr_minus: lr(b.lr_minus),
            degenerate: u8::from(b.degenerate),
        };
        Ok(())
    })
}

/// Leave-one-out evaluation; writes the report as a JSON string.
/// `jobs` = 0 uses every core.
///
/// # Safety
/// `db` must be a live handle; `config_json` NULL or NUL-terminated; `out`
/// writable. Free the result with [`apnea_string_free`].
#[no_mangle]
pub unsafe extern "C" fn apnea_loocv_json(
    db: *const ApneaDatabase,
    config_json: *const c_char,
    jobs: u32,
    out: *mut *mut c_char,
) -> ApneaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let db = db.as_ref().ok_or_else(|| null("db"))?;
        let cfg = config_arg(config_json)?;
        let jobs = (jobs > 0).then_some(jobs as usize);
        let report = run_loocv(&db.subjects, &cfg.pipeline(), jobs).map_err(fail)?;
        *out = into_c_string(report.to_json());
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE3: [u64; 16] = [6, 1, 0, 0, 4, 7, 1, 0, 0, 3, 3, 9, 0, 0, 0, 28];

    #[test]
    fn binary_stats_through_the_abi() {
        let mut out = ApneaBinaryStats::default();
        let st = unsafe { apnea_binary_screening(TABLE3.as_ptr(), &mut out) };
        assert_eq!(st, ApneaStatus::Ok);
        assert_eq!((out.tp, out.fp, out.tn, out.fn_), (40, 3, 18, 1));
        assert!((out.lr_plus - 6.83).abs() < 0.01);
    }

    #[test]
    fn null_pointers_are_reported() {
        let st = unsafe { apnea_severity_metrics(ptr::null(), ptr::null_mut()) };
        assert_eq!(st, ApneaStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(apnea_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("null"));
    }

    #[test]
    fn empty_matrix_is_invalid() {
        let zeros = [0u64; 16];
        let mut out = ApneaSeverityMetrics::default();
        let st = unsafe { apnea_severity_metrics(zeros.as_ptr(), &mut out) };
        assert_eq!(st, ApneaStatus::Invalid);
        assert!(!apnea_last_error_message().is_null());
    }

    #[test]
    fn success_clears_the_error() {
        let zeros = [0u64; 16];
        let mut out = ApneaSeverityMetrics::default();
        unsafe { apnea_severity_metrics(zeros.as_ptr(), &mut out) };
        unsafe { apnea_severity_metrics(TABLE3.as_ptr(), &mut out) };
        assert!(apnea_last_error_message().is_null());
        assert!((out.accuracy - 44.0 / 62.0).abs() < 1e-12);
    }
}
