use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_apnea-screen"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn synth(dir: &Path, n: &str, seed: &str) {
    let out = run(&[
        "synth",
        "--subjects",
        n,
        "--seed",
        seed,
        "--duration-min",
        "6",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn subject_dirs(dir: &Path) -> Vec<String> {
    let mut ids: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    ids
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for id in subject_dirs(dir) {
        for f in fs::read_dir(dir.join(&id)).unwrap() {
            let f = f.unwrap().path();
            out.push((format!("{id}/{}", f.file_name().unwrap().to_string_lossy()), fs::read(&f).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_requested_subjects_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "5", "11");
    synth(&b, "5", "11");
    assert_eq!(subject_dirs(&a), ["S000", "S001", "S002", "S003", "S004"]);
    assert_eq!(tree_bytes(&a), tree_bytes(&b));

    let c = tmp.path().join("c");
    synth(&c, "5", "12");
    assert_ne!(tree_bytes(&a), tree_bytes(&c));
}

#[test]
fn zero_subjects_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["synth", "--subjects", "0", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn screen_and_loocv_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("db");
    synth(&db, "6", "5");
    let db = db.to_str().unwrap();
    let pred = tmp.path().join("pred.csv");
    let pred_s = pred.to_str().unwrap();

    let out = run(&["screen", "--db", db, "--subject", "S999", "--k", "3", "--k-prime", "1"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));

    // default K + K' = 20 needs more than five references
    let out = run(&["screen", "--db", db, "--subject", "S000", "--out", pred_s]);
    assert_eq!(code(&out), 3);
    let out = run(&["loocv", "--db", db, "--out", tmp.path().join("r.json").to_str().unwrap()]);
    assert_eq!(code(&out), 3);

    let out = run(&["screen", "--db", db, "--subject", "S000", "--k", "3", "--k-prime", "1", "--out", pred_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("S000: REI "), "{stdout}");
    let csv = fs::read_to_string(&pred).unwrap();
    assert!(csv.starts_with("start_s,duration_s,source\n"), "{csv}");

    // predictions can be scored against the expert file directly
    let out = run(&["score", "--pred", pred_s, "--ref", &format!("{db}/S000/events.csv")]);
    assert!(out.status.success());

    fs::remove_file(Path::new(db).join("S003/events.csv")).unwrap();
    let out = run(&["loocv", "--db", db, "--k", "3", "--k-prime", "1", "--out", tmp.path().join("r.json").to_str().unwrap()]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["loocv", "--db", "/nonexistent/db"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("db");
    synth(&db, "6", "9");
    let report = tmp.path().join("out/report.json");
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"knn": {{"k": 3, "k_prime": 2}}, "io": {{"db_path": {:?}, "out_path": {:?}}}}}"#,
            db.to_str().unwrap(),
            report.to_str().unwrap()
        ),
    )
    .unwrap();
    let plots = tmp.path().join("plots");
    let out = run(&[
        "loocv",
        "--config",
        cfg.to_str().unwrap(),
        "--k-prime",
        "1",
        "--jobs",
        "2",
        "--plots",
        plots.to_str().unwrap(),
        "--dump-features",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["config"]["knn"]["k"], 3);
    assert_eq!(json["config"]["knn"]["k_prime"], 1);
    assert_eq!(json["subjects"].as_array().unwrap().len(), 6);
    assert!(report.with_extension("md").is_file());
    for id in subject_dirs(&db) {
        let svg = fs::read_to_string(plots.join(format!("{id}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"));
        let feats = fs::read_to_string(report.parent().unwrap().join(format!("{id}.features.csv"))).unwrap();
        // 6 min on a 0.5 s hop: (360 - 10) / 0.5 + 1 epochs plus the header
        assert_eq!(feats.lines().count(), 702);
    }

    fs::write(&cfg, r#"{"knn": {"k": 3, "kk": 1}}"#).unwrap();
    let out = run(&["loocv", "--config", cfg.to_str().unwrap(), "--db", db.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn score_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = tmp.path().join(name);
        fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_string()
    };
    let reference = write(
        "ref.csv",
        "kind,start_s,duration_s\nOSA,100,20\nHYP,200,30\nCSA,400,15\n",
    );
    let score = |pred: &str| -> serde_json::Value {
        let out = run(&["score", "--pred", pred, "--ref", &reference]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    };

    let s = score(&reference);
    assert_eq!((s["tp"].as_u64(), s["fp"].as_u64(), s["fn"].as_u64()), (Some(3), Some(0), Some(0)));
    assert_eq!(s["f1"], 1.0);

    let s = score(&write("empty.csv", "start_s,duration_s,source\n"));
    assert_eq!(s["fn"], 3);
    assert_eq!(s["tp"], 0);

    let s = score(&write("partial.csv", "start_s,duration_s,source\n110,20,svm\n300,20,svm\n"));
    assert_eq!((s["tp"].as_u64(), s["fp"].as_u64(), s["fn"].as_u64()), (Some(1), Some(1), Some(2)));

    let bad = write("bad.csv", "start_s,duration_s\nabc,20\n");
    let out = run(&["score", "--pred", &bad, "--ref", &reference]);
    assert_eq!(code(&out), 2);
}
