//! Runs the built binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fakesent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fakesent")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_corpus(path: &Path, lines: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..lines {
        let len = rng.gen_range(4..12);
        let words: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..40))).collect();
        text.push_str(&words.join(" "));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

#[test]
fn gradcheck_passes_on_small_model() {
    let out = fakesent(&["gradcheck", "--h", "8", "--d", "8", "--vocab", "50", "--seed", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let err: f64 = stdout.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(err < 1e-4);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = fakesent(&["train", "--colour", "red"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("Usage:"), "{err}");
    assert!(err.lines().any(|l| l.starts_with("error: category=UsageError")), "{err}");
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    write_corpus(&corpus, 20, 1);
    let out = fakesent(&["gen-fakes", "--in", p(&corpus), "--out", p(&dir.path().join("d.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("'seed'"));
}

#[test]
fn malformed_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let out = fakesent(&[
        "train", "--data", p(&bad), "--valid", p(&bad), "--seed", "1",
        "--out", p(&dir.path().join("m.ckpt")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).lines().any(|l| l.starts_with("error: category=DataError")));
}

#[test]
fn config_file_is_overridden_by_flags_and_written_back() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    write_corpus(&corpus, 30, 2);
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "strategy = drop\nseed = 4\nfakes_per_real = 3\n").unwrap();
    let data = dir.path().join("d.jsonl");
    let out = fakesent(&["gen-fakes", "--config", p(&conf), "--in", p(&corpus), "--out", p(&data), "--fakes-per-real", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 30 * 3);

    // rerunning from the resolved config reproduces both outputs
    let resolved_path = dir.path().join("d.jsonl.conf");
    let resolved = fs::read_to_string(&resolved_path).unwrap();
    assert!(resolved.starts_with("# fakesent "));
    assert!(resolved.contains("fakes_per_real = 2\n"));
    assert!(resolved.contains("seed = 4\n"));
    let first = fs::read(&data).unwrap();
    let out = fakesent(&["gen-fakes", "--config", p(&resolved_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(&data).unwrap(), first);
    assert_eq!(fs::read_to_string(&resolved_path).unwrap(), resolved);
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    write_corpus(&path("train.txt"), 300, 3);
    write_corpus(&path("valid.txt"), 60, 4);
    write_corpus(&path("probe.txt"), 1200, 5);

    for split in ["train", "valid"] {
        let out = fakesent(&[
            "gen-fakes", "--in", p(&path(&format!("{split}.txt"))), "--out",
            p(&path(&format!("{split}.jsonl"))), "--seed", "7",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let model = path("m.ckpt");
    let out = fakesent(&[
        "train", "--data", p(&path("train.jsonl")), "--valid", p(&path("valid.jsonl")),
        "--embed-dim", "8", "--hidden", "8", "--mlp", "16,8", "--epochs", "2", "--seed", "3",
        "--out", p(&model),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(model.exists());
    assert_eq!(fs::read_to_string(path("m.ckpt.metrics.jsonl")).unwrap().lines().count(), 2);
    let conf = fs::read_to_string(path("m.ckpt.conf")).unwrap();
    assert!(conf.contains("seed = 3\n") && conf.contains("epochs = 2\n"));

    let vecs = path("vecs.txt");
    let out = fakesent(&["encode", "--model", p(&model), "--in", p(&path("valid.txt")), "--out", p(&vecs)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines: Vec<String> = fs::read_to_string(&vecs).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 60);
    for (n, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields[0], (n + 1).to_string());
        assert_eq!(fields.len(), 1 + 2 * 8);
        assert!(fields[1..].iter().all(|f| f.parse::<f32>().unwrap().is_finite()));
    }

    let report = path("eval.json");
    let out = fakesent(&["evaluate", "--model", p(&model), "--data", p(&path("valid.jsonl")), "--report", p(&report)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(metrics["total"], 120);

    let probe = path("probe.json");
    let out = fakesent(&[
        "probe", "--model", p(&model), "--corpus", p(&path("probe.txt")), "--tasks", "sentlen,bshift",
        "--seed", "1", "--max-iterations", "300", "--report", p(&probe),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&probe).unwrap()).unwrap();
    for task in ["sentlen", "bshift"] {
        let acc = report[task]["test_accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(report[task]["chosen_l2"].is_f64());
        assert_eq!(report[task]["split_sizes"].as_array().unwrap().len(), 3);
    }
    assert!(path("probe.json.conf").exists());

    let out = fakesent(&["probe", "--model", p(&path("train.txt")), "--corpus", p(&path("probe.txt")), "--report", p(&probe)]);
    assert_eq!(out.status.code(), Some(3));
}
