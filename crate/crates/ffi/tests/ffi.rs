use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use openworld_ffi::*;

fn new_learner(kind: &str, d: usize) -> *mut OwLearner {
    let kind = CString::new(kind).unwrap();
    let mut l = ptr::null_mut();
    let s = unsafe { ow_learner_new(kind.as_ptr(), d, 0, 0.01, &mut l) };
    assert_eq!(s, OwStatus::Ok);
    assert!(!l.is_null());
    l
}

fn last_error() -> String {
    let p = ow_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn train_two_blobs(l: *mut OwLearner) {
    for i in 0..100 {
        let jitter = 0.01 * (i % 5) as f64;
        let a = [-2.0 + jitter, jitter];
        let b = [2.0 - jitter, -jitter];
        unsafe {
            assert_eq!(ow_learner_learn(l, a.as_ptr(), 2, 0), OwStatus::Ok);
            assert_eq!(ow_learner_learn(l, b.as_ptr(), 2, 1), OwStatus::Ok);
        }
    }
}

#[test]
fn learn_and_predict_through_the_c_abi() {
    for kind in ["oncm", "onno", "onbc"] {
        let l = new_learner(kind, 2);
        train_two_blobs(l);
        let q = [1.8, 0.1];
        let mut p = OwPrediction { is_unknown: -1, label: -1, confidence: 0.0, threshold: 0.0 };
        let mut closed = -1;
        unsafe {
            assert_eq!(ow_learner_predict(l, q.as_ptr(), 2, &mut p), OwStatus::Ok);
            assert_eq!(ow_learner_predict_closed(l, q.as_ptr(), 2, &mut closed), OwStatus::Ok);
        }
        assert_eq!(closed, 1, "{kind}");
        if p.is_unknown == 0 {
            assert_eq!(p.label, 1, "{kind}");
        }
        if kind == "oncm" {
            assert_eq!(p.is_unknown, 0);
            assert!(p.threshold.is_nan());
        }
        let (mut dim, mut classes) = (0, 0);
        unsafe {
            assert_eq!(ow_learner_info(l, &mut dim, &mut classes), OwStatus::Ok);
            assert_eq!(ow_learner_freeze(l), OwStatus::Ok);
            ow_learner_free(l);
        }
        assert_eq!((dim, classes), (2, 2));
    }
}

#[test]
fn errors_map_to_status_codes() {
    let l = new_learner("onno", 3);
    let x = [1.0, 2.0];
    let mut p = OwPrediction { is_unknown: 0, label: 0, confidence: 0.0, threshold: 0.0 };
    unsafe {
        assert_eq!(ow_learner_predict(l, [0.0; 3].as_ptr(), 3, &mut p), OwStatus::EmptyModel);
        assert_eq!(ow_learner_learn(l, x.as_ptr(), 2, 0), OwStatus::DimensionMismatch);
        assert!(last_error().contains("dimension mismatch"));
        assert_eq!(ow_learner_learn(l, ptr::null(), 3, 0), OwStatus::NullPointer);
        assert_eq!(ow_learner_learn(ptr::null_mut(), x.as_ptr(), 2, 0), OwStatus::NullPointer);
        let nan = [f64::NAN, 0.0, 0.0];
        assert_eq!(ow_learner_learn(l, nan.as_ptr(), 3, 0), OwStatus::Numerical);
        ow_learner_free(l);
        ow_learner_free(ptr::null_mut());
    }

    let bogus = CString::new("svm").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { ow_learner_new(bogus.as_ptr(), 2, 0, 0.01, &mut out) },
        OwStatus::InvalidInput
    );
    assert!(out.is_null());
    let onno = CString::new("onno").unwrap();
    assert_eq!(
        unsafe { ow_learner_new(onno.as_ptr(), 2, 0, 1.5, &mut out) },
        OwStatus::InvalidInput
    );
    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { ow_learner_load(missing.as_ptr(), &mut out) }, OwStatus::Io);
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    let l = new_learner("onbc", 2);
    train_two_blobs(l);
    let mut back = ptr::null_mut();
    let q = [-1.9, 0.05];
    let (mut a, mut b) = (
        OwPrediction { is_unknown: 0, label: 0, confidence: 0.0, threshold: 0.0 },
        OwPrediction { is_unknown: 1, label: 9, confidence: 1.0, threshold: 1.0 },
    );
    unsafe {
        assert_eq!(ow_learner_save(l, path.as_ptr()), OwStatus::Ok);
        assert_eq!(ow_learner_load(path.as_ptr(), &mut back), OwStatus::Ok);
        assert_eq!(ow_learner_predict(l, q.as_ptr(), 2, &mut a), OwStatus::Ok);
        assert_eq!(ow_learner_predict(back, q.as_ptr(), 2, &mut b), OwStatus::Ok);
        ow_learner_free(l);
        ow_learner_free(back);
    }
    assert_eq!(a, b);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(ow_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn static_lib() -> Option<PathBuf> {
    // tests/../../../target/<profile>/
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libopenworld_ffi.a");
    lib.is_file().then_some(lib)
}

#[test]
fn c_program_links_against_header_and_staticlib() {
    let Some(lib) = static_lib() else {
        eprintln!("skipped: static library not built");
        return;
    };
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/openworld.h");
    assert!(header.is_file(), "header not generated");
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let compiled = Command::new("cc")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output();
    let compiled = match compiled {
        Ok(o) => o,
        Err(e) => {
            eprintln!("skipped: no C compiler ({e})");
            return;
        }
    };
    assert!(compiled.status.success(), "{}", String::from_utf8_lossy(&compiled.stderr));
    let run = Command::new(&exe)
        .arg(dir.path().join("smoke.json"))
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
