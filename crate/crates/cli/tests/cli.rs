use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pemr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pemr"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen(dir: &Path) {
    let o = pemr(dir, &["gen", "--seed", "7", "--houses", "6", "--out", "d.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn gen_writes_a_dataset_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = pemr(dir.path(), &["gen", "--seed", "7", "--houses", "20", "--out", "d.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = stdout(&o);
    assert_eq!(summary["houses"], 20);
    assert_eq!(summary["samples"], 400);
    assert!(dir.path().join("d.jsonl").exists());
    assert!(stderr(&o).contains("resolved config"));
}

#[test]
fn rectify_reports_its_counts() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let o = pemr(dir.path(), &["rectify", "--in", "d.jsonl", "--out", "r.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = stdout(&o);
    let total = c["kept"].as_u64().unwrap() + c["reset"].as_u64().unwrap() + c["dropped"].as_u64().unwrap();
    assert_eq!(total, 120);
}

#[test]
fn missing_checkpoint_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let o = pemr(dir.path(), &["eval", "--ckpt", "missing.json", "--data", "d.jsonl", "--out", "e.json"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("missing.json") && err.contains("No such file"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["eval", "--bogus"],
        vec!["frobnicate"],
        vec!["gen", "--seed", "x"],
        vec!["gen", "--seed", "1"],
        vec!["rectify", "--out", "x.jsonl"],
        vec!["variant", "--in", "d.jsonl", "--out", "v.jsonl", "--variant", "sideways"],
    ] {
        let o = pemr(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_file_merges_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"houses": 3, "seed": 1, "samples_per_house": 4, "out": "d.jsonl"}"#).unwrap();
    let o = pemr(dir.path(), &["gen", "--config", "c.json", "--seed", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o)["samples"], 12);
    let err = stderr(&o);
    assert!(err.contains(r#""seed":2"#) && err.contains(r#""houses":3"#), "{err}");
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"housez": 3}"#).unwrap();
    let o = pemr(dir.path(), &["gen", "--config", "c.json", "--out", "d.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("housez"));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        gen(dir);
        assert!(pemr(dir, &["variant", "--in", "d.jsonl", "--out", "p.jsonl", "--variant", "plus", "--seed", "3"]).status.success());
        assert!(pemr(dir, &["eval", "--agent", "random", "--data", "d.jsonl", "--out", "e.json", "--seed", "5", "--traces", "t.jsonl"]).status.success());
    }
    for f in ["d.jsonl", "p.jsonl", "e.json", "e.txt", "t.jsonl"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn training_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    assert!(pemr(d, &["rectify", "--in", "d.jsonl", "--out", "r.jsonl"]).status.success());
    let o = pemr(d, &["pretrain-fpe", "--data", "r.jsonl", "--kind", "baseline+fpe", "--pretrain-epochs", "1", "--out", "f.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = pemr(d, &["train-bc", "--data", "r.jsonl", "--ckpt", "f.json", "--epochs", "2", "--checkpoint-dir", "ck", "--curves", "curves", "--out", "b.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("ck/epoch_001.json").exists());
    assert!(fs::read_to_string(d.join("curves/bc_loss.csv")).unwrap().starts_with("step,value\n"));
    let o = pemr(d, &["train-rl", "--data", "r.jsonl", "--ckpt", "b.json", "--rl-episodes", "16", "--out", "rl.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (ckpt, report) in [("b.json", "bc.json"), ("rl.json", "rl_report.json")] {
        let o = pemr(d, &["eval", "--data", "r.jsonl", "--ckpt", ckpt, "--model", ckpt, "--levels", "10,30", "--out", report]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = pemr(d, &["compare", "--report", "bc.json", "--report", "rl_report.json", "--out", "cmp.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("T_30"));
    let o = pemr(d, &["render", "--data", "r.jsonl", "--agent", "expert", "--level", "10", "--out", "r.svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(d.join("r.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn rl_needs_a_starting_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let o = pemr(dir.path(), &["train-rl", "--data", "d.jsonl", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
}
