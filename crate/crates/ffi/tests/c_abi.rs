use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use apnea_screen::synth::{generate, CohortSpec};
use apnea_screen_ffi::*;

const SMALL_KNN: &str = r#"{"knn": {"k": 3, "k_prime": 1}}"#;

fn small_db(dir: &Path) {
    let spec = CohortSpec {
        n_subjects: 6,
        seed: 7,
        duration_min: 6.0,
        severity_mix: [0.0, 0.0, 0.0, 1.0],
        ..CohortSpec::default()
    };
    generate(&spec, dir).unwrap();
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/apnea_screen.h")
}

#[test]
fn handles_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    small_db(tmp.path());
    let path = CString::new(tmp.path().to_str().unwrap()).unwrap();
    let cfg = CString::new(SMALL_KNN).unwrap();
    unsafe {
        let mut db = ptr::null_mut();
        assert_eq!(apnea_database_load(path.as_ptr(), &mut db), ApneaStatus::Ok);
        assert_eq!(apnea_database_len(db), 6);

        let mut id = ptr::null_mut();
        assert_eq!(apnea_database_subject_id(db, 2, &mut id), ApneaStatus::Ok);
        assert_eq!(CStr::from_ptr(id).to_str().unwrap(), "S002");

        let mut s = ptr::null_mut();
        assert_eq!(apnea_screen_subject(db, id, cfg.as_ptr(), &mut s), ApneaStatus::Ok);
        apnea_string_free(id);
        let n = apnea_screening_event_count(s);
        assert!(n > 0);
        let rei = apnea_screening_rei(s);
        assert!((rei - n as f64 / 0.1).abs() < 1e-9);
        let mut sev = ApneaSeverity::Normal;
        assert_eq!(apnea_screening_severity(s, &mut sev), ApneaStatus::Ok);
        let mut ev = ApneaEvent {
            start_s: 0.0,
            duration_s: 0.0,
            desat_correction: 0,
        };
        assert_eq!(apnea_screening_event(s, 0, &mut ev), ApneaStatus::Ok);
        assert!((10.0..=120.0).contains(&ev.duration_s));
        assert_eq!(apnea_screening_event(s, n, &mut ev), ApneaStatus::Invalid);
        apnea_screening_free(s);

        let unknown = CString::new("nobody").unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(
            apnea_screen_subject(db, unknown.as_ptr(), cfg.as_ptr(), &mut s),
            ApneaStatus::UnknownSubject
        );
        assert!(s.is_null());

        let mut json = ptr::null_mut();
        assert_eq!(apnea_loocv_json(db, cfg.as_ptr(), 1, &mut json), ApneaStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(report["subjects"].as_array().unwrap().len(), 6);
        apnea_string_free(json);

        // the default K + K' does not fit six subjects
        let mut json = ptr::null_mut();
        assert_eq!(apnea_loocv_json(db, ptr::null(), 0, &mut json), ApneaStatus::DatabaseTooSmall);
        apnea_database_free(db);
    }
}

#[test]
fn bad_inputs_map_to_status_codes() {
    unsafe {
        let missing = CString::new("/nonexistent/apnea-db").unwrap();
        let mut db = ptr::null_mut();
        let st = apnea_database_load(missing.as_ptr(), &mut db);
        assert_eq!(st, ApneaStatus::Io);
        assert!(db.is_null());
        assert!(!apnea_last_error_message().is_null());

        assert_eq!(apnea_database_load(ptr::null(), &mut db), ApneaStatus::NullPointer);
        assert_eq!(apnea_database_len(ptr::null()), 0);
        assert!(apnea_screening_rei(ptr::null()).is_nan());
        apnea_database_free(ptr::null_mut());
        apnea_screening_free(ptr::null_mut());
        apnea_string_free(ptr::null_mut());

        let unsorted = [
            ApneaSpan { start_s: 50.0, duration_s: 10.0 },
            ApneaSpan { start_s: 0.0, duration_s: 10.0 },
        ];
        let mut score = ApneaEventScore::default();
        assert_eq!(
            apnea_match_events(unsorted.as_ptr(), 2, ptr::null(), 0, &mut score),
            ApneaStatus::Invalid
        );
        let det = [
            ApneaSpan { start_s: 100.0, duration_s: 30.0 },
            ApneaSpan { start_s: 400.0, duration_s: 15.0 },
        ];
        let ann = [ApneaSpan { start_s: 120.0, duration_s: 30.0 }];
        assert_eq!(
            apnea_match_events(det.as_ptr(), 2, ann.as_ptr(), 1, &mut score),
            ApneaStatus::Ok
        );
        assert_eq!((score.tp, score.fp, score.fn_), (1, 1, 0));
    }
}

fn compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    for lang in ["c", "c++"] {
        let out = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(header())
            .output()
            .unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "apnea_screen.h"

int main(int argc, char **argv) {
    const uint64_t table3[16] = {6, 1, 0, 0, 4, 7, 1, 0, 0, 3, 3, 9, 0, 0, 0, 28};
    ApneaBinaryStats b;
    if (apnea_binary_screening(table3, &b) != APNEA_STATUS_OK) return 1;
    if (b.tp != 40 || b.fn_ != 1 || fabs(b.lr_plus - 6.83) > 0.01) return 2;

    ApneaDatabase *db = NULL;
    if (apnea_database_load(argv[1], &db) != APNEA_STATUS_OK) return 3;
    ApneaScreening *s = NULL;
    ApneaStatus st = apnea_screen_subject(db, "S000", argv[2], &s);
    if (st != APNEA_STATUS_OK) {
        fprintf(stderr, "%s\n", apnea_last_error_message());
        return 4;
    }
    printf("%zu %.3f\n", apnea_screening_event_count(s), apnea_screening_rei(s));
    apnea_screening_free(s);
    apnea_database_free(db);
    return argc == 3 ? 0 : 5;
}
"#;

#[test]
fn c_program_links_against_the_static_library() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    // target/<profile>/deps/<test exe> -> target/<profile>/libapnea_screen_ffi.a
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = lib_dir.join("libapnea_screen_ffi.a");
    if !lib.is_file() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = tmp.path().join("smoke");
    let out = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let db = tmp.path().join("db");
    small_db(&db);
    let run = Command::new(&bin).arg(&db).arg(SMALL_KNN).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status, String::from_utf8_lossy(&run.stderr));
    let line = String::from_utf8(run.stdout).unwrap();
    let n: usize = line.split_whitespace().next().unwrap().parse().unwrap();
    assert!(n > 0);
}
