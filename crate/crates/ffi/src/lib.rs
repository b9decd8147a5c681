//! C ABI over the inference engine.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `_free` function. Every fallible call returns a
//! [`QbbnStatus`] and leaves a message for [`qbbn_last_error`] on failure.
//! Strings returned by the library must be released with
//! [`qbbn_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qbbn::experiment::compile;
use qbbn::inference::InferenceError;
use qbbn::record::RecordError;
use qbbn::{Error, KnowledgeBaseRecord, Proposition, Session};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbbnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    UnknownNode = 5,
    Contradiction = 6,
    Numeric = 7,
    InvalidArgument = 8,
    Internal = 99,
}

/// A loaded knowledge base with its weights.
pub struct QbbnKb {
    record: KnowledgeBaseRecord,
}

/// A compiled network plus its belief state.
pub struct QbbnSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: QbbnStatus, message: impl Into<String>) -> QbbnStatus {
    set_error(message.into());
    status
}

fn status_of(e: &Error) -> QbbnStatus {
    match e {
        Error::Record(RecordError::Io { .. }) => QbbnStatus::Io,
        Error::Record(_) | Error::Calculus(_) | Error::Kb(_) => QbbnStatus::Parse,
        Error::Inference(InferenceError::UnknownNode(_)) => QbbnStatus::UnknownNode,
        Error::Inference(InferenceError::Contradiction(_) | InferenceError::ConflictingEvidence(_)) => {
            QbbnStatus::Contradiction
        }
        Error::Inference(InferenceError::Numeric(_)) | Error::Factor(_) => QbbnStatus::Numeric,
        Error::Store(_) => QbbnStatus::Io,
        _ => QbbnStatus::InvalidArgument,
    }
}

fn report(e: impl Into<Error>) -> QbbnStatus {
    let e = e.into();
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, turning panics into `Internal`.
fn guard(f: impl FnOnce() -> QbbnStatus) -> QbbnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(QbbnStatus::Internal, "panic inside qbbn"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, QbbnStatus> {
    if s.is_null() {
        return Err(fail(QbbnStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(QbbnStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

unsafe fn put_kb(out: *mut *mut QbbnKb, record: Result<KnowledgeBaseRecord, RecordError>) -> QbbnStatus {
    match record
        .map_err(Error::from)
        .and_then(|r| r.knowledge_base().map(|_| r).map_err(Error::from))
    {
        Ok(record) => {
            *out = Box::into_raw(Box::new(QbbnKb { record }));
            QbbnStatus::Ok
        }
        Err(e) => report(e),
    }
}

/// Loads a knowledge base record from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn qbbn_kb_load(path: *const c_char, out: *mut *mut QbbnKb) -> QbbnStatus {
    guard(|| {
        if out.is_null() {
            return fail(QbbnStatus::NullPointer, "out is null");
        }
        let path = match read_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        put_kb(out, KnowledgeBaseRecord::load(Path::new(path)))
    })
}

/// Parses a knowledge base record from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn qbbn_kb_load_json(json: *const c_char, out: *mut *mut QbbnKb) -> QbbnStatus {
    guard(|| {
        if out.is_null() {
            return fail(QbbnStatus::NullPointer, "out is null");
        }
        let json = match read_str(json) {
            Ok(p) => p,
            Err(s) => return s,
        };
        put_kb(out, KnowledgeBaseRecord::from_json(json))
    })
}

/// # Safety
/// `kb` must come from `qbbn_kb_load*` and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn qbbn_kb_free(kb: *mut QbbnKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Builds the network for `targets` (canonical proposition keys) and opens a
/// session on it. With `n_targets == 0` the targets stored in the record are
/// used. `analytic` selects the record's hand-specified factors instead of the
/// learned weights. The session does not borrow `kb`.
///
/// # Safety
/// `kb` must be a live handle, `targets` must point to `n_targets` strings
/// (or be null when `n_targets` is 0) and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qbbn_session_new(
    kb: *const QbbnKb,
    targets: *const *const c_char,
    n_targets: usize,
    analytic: bool,
    out: *mut *mut QbbnSession,
) -> QbbnStatus {
    guard(|| {
        if kb.is_null() || out.is_null() || (targets.is_null() && n_targets > 0) {
            return fail(QbbnStatus::NullPointer, "null handle or array");
        }
        let record = &(*kb).record;
        let mut props = Vec::with_capacity(n_targets);
        for i in 0..n_targets {
            let key = match read_str(*targets.add(i)) {
                Ok(k) => k,
                Err(s) => return s,
            };
            match key.parse::<Proposition>() {
                Ok(p) => props.push(p),
                Err(e) => return report(e),
            }
        }
        if props.is_empty() {
            props = record.targets.clone();
        }
        if props.is_empty() {
            return fail(
                QbbnStatus::InvalidArgument,
                "no targets given and the record stores none",
            );
        }
        let params = if analytic {
            match record.analytic() {
                Ok(p) => p,
                Err(e) => return report(e),
            }
        } else {
            record.learned()
        };
        let session = compile(record, &params, &props).and_then(|n| Session::new(n).map_err(Error::from));
        match session {
            Ok(session) => {
                *out = Box::into_raw(Box::new(QbbnSession { session }));
                QbbnStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// # Safety
/// `session` must come from `qbbn_session_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qbbn_session_free(session: *mut QbbnSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Clamps the node with canonical key `key` to `value`.
///
/// # Safety
/// `session` must be live and `key` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qbbn_session_set_evidence(
    session: *mut QbbnSession,
    key: *const c_char,
    value: bool,
) -> QbbnStatus {
    guard(|| {
        if session.is_null() {
            return fail(QbbnStatus::NullPointer, "session is null");
        }
        let key = match read_str(key) {
            Ok(k) => k,
            Err(s) => return s,
        };
        match (*session).session.set_evidence_key(key, value) {
            Ok(()) => QbbnStatus::Ok,
            Err(e) => report(e),
        }
    })
}

/// Runs `rounds` fan-outs.
///
/// # Safety
/// `session` must be live.
#[no_mangle]
pub unsafe extern "C" fn qbbn_session_run(session: *mut QbbnSession, rounds: usize) -> QbbnStatus {
    guard(|| {
        if session.is_null() {
            return fail(QbbnStatus::NullPointer, "session is null");
        }
        match (*session).session.run(rounds) {
            Ok(()) => QbbnStatus::Ok,
            Err(e) => report(e),
        }
    })
}

/// Writes `P(key = 1)` to `out`.
///
/// # Safety
/// `session` must be live, `key` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qbbn_session_marginal(
    session: *const QbbnSession,
    key: *const c_char,
    out: *mut f64,
) -> QbbnStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            return fail(QbbnStatus::NullPointer, "null session or out");
        }
        let key = match read_str(key) {
            Ok(k) => k,
            Err(s) => return s,
        };
        match (*session).session.marginal_key(key) {
            Ok(p) => {
                *out = p;
                QbbnStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// Number of nodes, proposition and group, or 0 for a null handle.
///
/// # Safety
/// `session` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn qbbn_session_node_count(session: *const QbbnSession) -> usize {
    if session.is_null() {
        return 0;
    }
    (*session).session.network().len()
}

/// Key of the node at topological position `index`, or null when out of
/// range. Free with `qbbn_string_free`.
///
/// # Safety
/// `session` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn qbbn_session_node_key(session: *const QbbnSession, index: usize) -> *mut c_char {
    if session.is_null() {
        return ptr::null_mut();
    }
    let net = (*session).session.network();
    if index >= net.len() {
        return ptr::null_mut();
    }
    to_c(net.key(qbbn::NodeId(index)).to_owned())
}

/// The trace so far as CSV. Free with `qbbn_string_free`.
///
/// # Safety
/// `session` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn qbbn_session_trace_csv(session: *const QbbnSession) -> *mut c_char {
    if session.is_null() {
        return ptr::null_mut();
    }
    to_c((*session).session.trace_csv())
}

/// Message of the last failed call on this thread, or null. Free with
/// `qbbn_string_free`.
#[no_mangle]
pub extern "C" fn qbbn_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qbbn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Static version string; do not free.
#[no_mangle]
pub extern "C" fn qbbn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
