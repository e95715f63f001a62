use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fearec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fearec"))
        .current_dir(dir)
        .env("FEAREC_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: [&str; 8] = ["--set", "max_len=12", "--set", "dim=16", "--set", "batch_size=8", "--set", "epochs=2"];

fn synthetic(dir: &Path, name: &str, items: &str) -> PathBuf {
    let o = fearec(dir, &["prepare", "--synthetic", "--users", "24", "--items", items, "--period", "4", "--max-len", "12", "--out", name]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join(name)
}

fn train(dir: &Path, out: &str) -> Output {
    let mut args = vec!["train", "--dataset", "data.json", "--seed", "5", "--out", out];
    args.extend(TINY);
    fearec(dir, &args)
}

fn six_user_tsv(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for u in 1..=5 {
        for (t, item) in ["a", "b", "c", "d", "e"].iter().enumerate() {
            text.push_str(&format!("user{u}\t{item}\t{}\n", t * 10 + u));
        }
    }
    for (t, item) in ["a", "b", "c", "d", "z"].iter().enumerate() {
        text.push_str(&format!("user6\t{item}\t{t}\n"));
    }
    let p = dir.join("toy.tsv");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn prepare_prints_statistics_and_honours_min_count() {
    let dir = tempfile::tempdir().unwrap();
    six_user_tsv(dir.path());
    let o = fearec(dir.path(), &["prepare", "--input", "toy.tsv", "--out", "five.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("# Users     5") && s.contains("Sparsity"), "{s}");
    let o = fearec(dir.path(), &["prepare", "--input", "toy.tsv", "--min-count", "1", "--out", "all.json"]);
    assert!(stdout(&o).contains("# Users     6"), "{}", stdout(&o));
}

#[test]
fn missing_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = fearec(dir.path(), &["prepare", "--input", "missing.tsv", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.tsv"));
}

#[test]
fn training_writes_logs_reports_and_reproducible_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), "data.json", "20");
    for out in ["a", "b"] {
        let o = train(dir.path(), out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = dir.path().join("a");
    let log = fs::read_to_string(a.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(log.lines().all(|l| l.starts_with("epoch=")));
    for e in [1, 2] {
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join(format!("eval_epoch{e}.json"))).unwrap()).unwrap();
        assert!(report.get("NDCG@10").is_some());
    }
    for f in ["best.ckpt", "last.ckpt", "eval_epoch2.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }

    // Re-running from the echoed configuration reproduces the run.
    let echoed = fs::read_to_string(a.join("config.toml")).unwrap().replace("out = \"a\"", "out = \"c\"");
    fs::write(dir.path().join("echo.toml"), echoed).unwrap();
    let o = fearec(dir.path(), &["train", "--config", "echo.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("last.ckpt")).unwrap(), fs::read(dir.path().join("c/last.ckpt")).unwrap());
}

#[test]
fn invalid_configurations_are_rejected_before_training() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), "data.json", "20");
    let o = fearec(dir.path(), &["train", "--dataset", "data.json", "--seed", "1", "--out", "r", "--set", "dim=15"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("num_heads"), "{}", stderr(&o));
    assert!(!dir.path().join("r").exists());
    let o = fearec(dir.path(), &["train", "--dataset", "data.json", "--out", "r"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn evaluate_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synthetic(d, "data.json", "20");
    synthetic(d, "other.json", "21");
    assert!(train(d, "run").status.success());

    let o = fearec(d, &["evaluate", "--checkpoint", "run/best.ckpt", "--dataset", "data.json", "--split", "test"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let test: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("run/eval_test.json")).unwrap()).unwrap();
    for key in ["HR@5", "HR@10", "NDCG@5", "NDCG@10"] {
        assert!(test.get(key).is_some() && stdout(&o).contains(key));
    }
    assert!(fearec(d, &["evaluate", "--checkpoint", "run/best.ckpt", "--dataset", "data.json", "--split", "valid"]).status.success());
    assert!(d.join("run/eval_valid.json").exists());

    let o = fearec(d, &["evaluate", "--checkpoint", "run/best.ckpt", "--dataset", "other.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("vocabulary"), "{}", stderr(&o));

    let o = fearec(d, &["inspect", "--checkpoint", "run/best.ckpt", "--dataset", "data.json", "--user", "u3", "--out", "att"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read(d.join("att/layer2_head1_delays.csv")).unwrap();
    fearec(d, &["inspect", "--checkpoint", "run/best.ckpt", "--dataset", "data.json", "--user", "3", "--out", "att"]);
    assert_eq!(first, fs::read(d.join("att/layer2_head1_delays.csv")).unwrap());

    let o = fearec(d, &["inspect", "--checkpoint", "run/best.ckpt", "--dataset", "data.json", "--user", "nobody", "--out", "att"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("0..24"), "{}", stderr(&o));
}

#[test]
fn check_passes_on_a_correct_build() {
    let dir = tempfile::tempdir().unwrap();
    let o = fearec(dir.path(), &["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for suite in ["spectral", "ramp", "gradient", "metrics"] {
        assert!(stdout(&o).contains(&format!("PASS {suite}")));
    }
}
