use std::path::Path;
use std::process::{Command, Output};

use pitf::data::Frequency;
use pitf::synthetic::{synthetic_dataset, write_dataset};

fn pitf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pitf"))
        .args(args)
        .env_remove("M4_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.json");
    let cfg = serde_json::json!({
        "model": {"d_model": 8, "n_layers": 1, "n_heads": 2},
        "train": {"batch_size": 16, "batches_per_epoch": 4, "max_epochs": 2, "micro_batch": 16}
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_and_help_exit_codes() {
    assert_eq!(pitf(&["--help"]).status.code(), Some(0));
    assert_eq!(pitf(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(pitf(&[]).status.code(), Some(1));
}

#[test]
fn missing_data_is_a_data_error_and_creates_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = pitf(&["train", "--freq", "hourly", "--data-root", s(&dir.path().join("nowhere")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
    assert!(!dir.path().join("run.incomplete").exists());
}

#[test]
fn invalid_configuration_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &synthetic_dataset(Frequency::Yearly, 10, 0)).unwrap();
    let o = pitf(&["train", "--freq", "yearly", "--data-root", s(dir.path()), "--heads", "3", "--d-model", "8"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_evaluate_forecast_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data, &synthetic_dataset(Frequency::Yearly, 30, 7)).unwrap();
    let cfg = tiny_config(dir.path());
    let train = |name: &str| {
        let out = dir.path().join(name);
        let o = pitf(&["train", "--freq", "yearly", "--data-root", s(&data), "--config", &cfg, "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = train("a");
    let b = train("b");
    for f in ["config.json", "summary.json", "seed-0/history.jsonl", "seed-0/model.ckpt", "seed-0/timing.jsonl"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    let history = |d: &Path| std::fs::read(d.join("seed-0/history.jsonl")).unwrap();
    assert_eq!(history(&a), history(&b));
    assert_eq!(history(&a).iter().filter(|&&c| c == b'\n').count(), 2);

    // the run directory refuses to be overwritten
    let o = pitf(&["train", "--freq", "yearly", "--data-root", s(&data), "--config", &cfg, "--out", s(&a)]);
    assert_eq!(o.status.code(), Some(1));

    let ckpt = a.join("seed-0/model.ckpt");
    let report = dir.path().join("report.json");
    let o = pitf(&["evaluate", "--data-root", s(&data), "--checkpoints", s(&ckpt), "--json", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("yearly"), "{}", stdout(&o));
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(parsed[0]["report"]["total"]["owa"].as_f64().unwrap().is_finite());

    let fc = dir.path().join("fc.csv");
    let o = pitf(&["forecast", "--checkpoint", s(&ckpt), "--data-root", s(&data), "--out", s(&fc)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&fc).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert!(text.starts_with("id,F1,F2,F3,F4,F5,F6"));

    // scoring the written forecasts agrees with scoring the checkpoint
    let again = dir.path().join("again.json");
    let o = pitf(&["evaluate", "--freq", "yearly", "--data-root", s(&data), "--forecasts", s(&fc), "--json", s(&again)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let second: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&again).unwrap()).unwrap();
    let owa = |v: &serde_json::Value| v[0]["report"]["total"]["owa"].as_f64().unwrap();
    assert!((owa(&parsed) - owa(&second)).abs() < 1e-9);
}

#[test]
fn naive2_baseline_scores_owa_one() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &synthetic_dataset(Frequency::Quarterly, 20, 3)).unwrap();
    let out = dir.path().join("naive2.csv");
    let o = pitf(&["baseline", "--freq", "quarterly", "--data-root", s(dir.path()), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("1.000"), "{}", stdout(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 21);
}

#[test]
fn ablation_with_one_arm() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data, &synthetic_dataset(Frequency::Yearly, 20, 1)).unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("abl");
    let o = pitf(&[
        "ablate", "--study", "skip", "--freq", "yearly", "--data-root", s(&data), "--config", &cfg, "--out", s(&out),
        "--max-epochs", "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("ablation.json").is_file());
    let table = stdout(&o);
    for arm in ["none", "skip_only", "skip_gate"] {
        assert!(table.contains(arm), "{table}");
    }
}
