use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use qbbn::universe::{self, Universe};
use qbbn::{KnowledgeBaseRecord, WeightVector};
use qbbn_ffi::*;

fn dating_json() -> CString {
    let u = Universe::Dating;
    let mut record = KnowledgeBaseRecord::new(u.name(), &u.kb(), WeightVector::new());
    record.types = u.types();
    record.analytic = Some(u.analytic());
    record.targets = vec![u.target()];
    CString::new(record.to_json()).unwrap()
}

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { qbbn_string_free(s) };
    out
}

fn open(analytic: bool) -> *mut QbbnSession {
    let json = dating_json();
    let mut kb = ptr::null_mut();
    assert_eq!(unsafe { qbbn_kb_load_json(json.as_ptr(), &mut kb) }, QbbnStatus::Ok);
    let mut session = ptr::null_mut();
    let status = unsafe { qbbn_session_new(kb, ptr::null(), 0, analytic, &mut session) };
    assert_eq!(status, QbbnStatus::Ok);
    unsafe { qbbn_kb_free(kb) };
    session
}

fn marginal(session: *const QbbnSession, key: &str) -> f64 {
    let key = CString::new(key).unwrap();
    let mut p = f64::NAN;
    assert_eq!(
        unsafe { qbbn_session_marginal(session, key.as_ptr(), &mut p) },
        QbbnStatus::Ok
    );
    p
}

#[test]
fn analytic_prior_matches_closed_form() {
    let s = open(true);
    assert_eq!(unsafe { qbbn_session_run(s, 10) }, QbbnStatus::Ok);
    let like = marginal(s, &universe::like_bg_prop().canonical_key());
    let want = 1.0 - (1.0 - universe::P_LONELY) * (1.0 - universe::P_EXCITING);
    assert!((like - want).abs() < 1e-9, "{like}");
    let date = marginal(s, &universe::date_prop().canonical_key());
    assert!((date - want * universe::P_LIKE_GB).abs() < 1e-9, "{date}");
    unsafe { qbbn_session_free(s) };
}

#[test]
fn evidence_moves_the_target() {
    let s = open(true);
    let key = CString::new(universe::lonely_prop().canonical_key()).unwrap();
    assert_eq!(
        unsafe { qbbn_session_set_evidence(s, key.as_ptr(), true) },
        QbbnStatus::Ok
    );
    assert_eq!(unsafe { qbbn_session_run(s, 10) }, QbbnStatus::Ok);
    let date = marginal(s, &universe::date_prop().canonical_key());
    assert!((date - universe::P_LIKE_GB).abs() < 1e-9);
    unsafe { qbbn_session_free(s) };
}

#[test]
fn node_keys_and_trace() {
    let s = open(false);
    let n = unsafe { qbbn_session_node_count(s) };
    assert_eq!(n, 8);
    let first = take(unsafe { qbbn_session_node_key(s, 0) });
    assert!(first.contains('('));
    assert!(unsafe { qbbn_session_node_key(s, n) }.is_null());
    assert_eq!(unsafe { qbbn_session_run(s, 3) }, QbbnStatus::Ok);
    let csv = take(unsafe { qbbn_session_trace_csv(s) });
    assert_eq!(csv.lines().count(), 1 + 4 * n);
    assert!(csv.starts_with("iteration,node_key,p_true"));
    unsafe { qbbn_session_free(s) };
}

#[test]
fn unknown_node_sets_status_and_message() {
    let s = open(true);
    let key = CString::new("nope(subj=a:b)").unwrap();
    let mut p = 0.0;
    let status = unsafe { qbbn_session_marginal(s, key.as_ptr(), &mut p) };
    assert_eq!(status, QbbnStatus::UnknownNode);
    let msg = take(qbbn_last_error());
    assert!(msg.contains("nope"), "{msg}");
    unsafe { qbbn_session_free(s) };
}

#[test]
fn unknown_target_is_rejected() {
    let json = dating_json();
    let mut kb = ptr::null_mut();
    assert_eq!(unsafe { qbbn_kb_load_json(json.as_ptr(), &mut kb) }, QbbnStatus::Ok);
    let t = CString::new("nope(subj=a:b)").unwrap();
    let targets = [t.as_ptr()];
    let mut s = ptr::null_mut();
    let status = unsafe { qbbn_session_new(kb, targets.as_ptr(), 1, true, &mut s) };
    assert_eq!(status, QbbnStatus::UnknownNode);
    assert!(s.is_null());
    unsafe { qbbn_kb_free(kb) };
}

#[test]
fn contradiction_is_reported() {
    let s = open(true);
    for (p, v) in [
        (universe::lonely_prop(), false),
        (universe::exciting_prop(), false),
        (universe::like_bg_prop(), true),
    ] {
        let key = CString::new(p.canonical_key()).unwrap();
        assert_eq!(unsafe { qbbn_session_set_evidence(s, key.as_ptr(), v) }, QbbnStatus::Ok);
    }
    let status = unsafe { qbbn_session_run(s, 10) };
    assert_eq!(status, QbbnStatus::Contradiction);
    unsafe { qbbn_session_free(s) };
}

#[test]
fn bad_inputs() {
    let mut kb = ptr::null_mut();
    assert_eq!(
        unsafe { qbbn_kb_load_json(ptr::null(), &mut kb) },
        QbbnStatus::NullPointer
    );
    let junk = CString::new("{").unwrap();
    assert_eq!(unsafe { qbbn_kb_load_json(junk.as_ptr(), &mut kb) }, QbbnStatus::Parse);
    assert!(kb.is_null());
    let missing = CString::new("/nonexistent/kb.json").unwrap();
    assert_eq!(unsafe { qbbn_kb_load(missing.as_ptr(), &mut kb) }, QbbnStatus::Io);
    let bad = [0xffu8, 0];
    assert_eq!(
        unsafe { qbbn_kb_load(bad.as_ptr().cast(), &mut kb) },
        QbbnStatus::InvalidUtf8
    );
    assert_eq!(unsafe { qbbn_session_run(ptr::null_mut(), 1) }, QbbnStatus::NullPointer);
    assert_eq!(unsafe { qbbn_session_node_count(ptr::null()) }, 0);
    unsafe {
        qbbn_kb_free(ptr::null_mut());
        qbbn_session_free(ptr::null_mut());
        qbbn_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_last_error() {
    let mut kb = ptr::null_mut();
    let junk = CString::new("{").unwrap();
    unsafe { qbbn_kb_load_json(junk.as_ptr(), &mut kb) };
    assert!(!take(qbbn_last_error()).is_empty());
    let s = open(true);
    assert!(qbbn_last_error().is_null());
    unsafe { qbbn_session_free(s) };
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(qbbn_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_generated_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qbbn.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "qbbn_kb_load",
        "qbbn_session_new",
        "qbbn_session_marginal",
        "qbbn_last_error",
        "QBBN_STATUS_OK",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"qbbn.h\"\nint f(QbbnSession *s) { double p; return qbbn_session_marginal(s, \"x\", &p) == QBBN_STATUS_OK; }\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(status) => assert!(status.success(), "header does not compile"),
        Err(_) => eprintln!("no C compiler; syntax check skipped"),
    }
}
