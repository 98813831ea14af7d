use std::path::Path;
use std::process::{Command, Output};

fn specprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specprobe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Small low-band task: 64-long sequences, signal at k <= 1, noise above 20.
fn gen_pair(dir: &Path, seed: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let (tr, va) = (dir.join("train.sprb"), dir.join("val.sprb"));
    let out = specprobe(&[
        "gen", "--out", p(&tr), "--val-out", p(&va), "--val-count", "12", "--n", "64", "--e", "4", "--classes", "2",
        "--count", "40", "--signal-band", "0:1", "--noise-band", "20:63", "--snr", "1", "--seed", seed, "--task", "toy",
        "--language", "xx",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (tr, va)
}

fn train(dir: &Path, tr: &Path, va: &Path, mode: &str, seeds: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", "--mode", mode, "--train", p(tr), "--val", p(va), "--seeds", seeds, "--out", p(dir), "--lr", "0.05",
        "--batch-size", "8", "--epochs", "4",
    ];
    if !extra.contains(&"--filter-len") {
        args.extend(["--filter-len", "64"]);
    }
    args.extend_from_slice(extra);
    specprobe(&args)
}

#[test]
fn gen_is_deterministic_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let (ta, _) = gen_pair(&a, "7");
    let (tb, _) = gen_pair(&b, "7");
    assert_eq!(std::fs::read(&ta).unwrap(), std::fs::read(&tb).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("train.sprb.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["seeds"][0], 7);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    // missing --out
    assert_eq!(specprobe(&["gen", "--n", "8"]).status.code(), Some(2));
    // malformed band
    let out = dir.path().join("x.sprb");
    assert_eq!(specprobe(&["gen", "--out", p(&out), "--signal-band", "0-1"]).status.code(), Some(2));
    // overlapping bands
    let code = specprobe(&["gen", "--out", p(&out), "--n", "16", "--signal-band", "0:4", "--noise-band", "3:15"])
        .status
        .code();
    assert_eq!(code, Some(2));
    assert!(!out.exists());

    let bad = specprobe(&["train", "--mode", "fixed:bogus", "--train", "a", "--val", "b", "--out", "c"]);
    assert_eq!(bad.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&bad.stderr);
    for name in ["low", "mid-low", "mid", "mid-high", "high"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn train_eval_profile_compare_round() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, va) = gen_pair(dir.path(), "3");
    let run = dir.path().join("auto");
    let summary = stdout_json(&train(&run, &tr, &va, "auto", "1,2", &[]));
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 2);
    assert!(summary["mean_accuracy"].as_f64().unwrap() > 0.5);
    let ckpt1 = run.join("seed-1/checkpoint.json");
    let ckpt2 = run.join("seed-2/checkpoint.json");
    assert!(ckpt1.exists() && run.join("seed-1/report.jsonl").exists() && run.join("manifest.json").exists());
    let lines = std::fs::read_to_string(run.join("seed-1/report.jsonl")).unwrap();
    for line in lines.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(rec["val_accuracy"].is_number());
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([1, 2]));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["train"]["learning_rate"], 0.05);

    let metrics = stdout_json(&specprobe(&["eval", "--checkpoint", p(&ckpt1), "--data", p(&va)]));
    let acc = summary["seeds"][0]["accuracy"].as_f64().unwrap();
    assert_eq!(metrics["accuracy"].as_f64().unwrap(), acc);
    assert_eq!(metrics["positions"], 12 * 64);

    let prof = dir.path().join("profile");
    stdout_json(&specprobe(&["profile", "--checkpoint", p(&ckpt1), p(&ckpt2), "--out", p(&prof), "--svg"]));
    let csv = std::fs::read_to_string(prof.join("profile.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
    assert!(prof.join("envelope.csv").exists() && prof.join("profile.svg").exists());

    let cmp = dir.path().join("cmp");
    let same = format!("a={}", p(&ckpt1));
    let again = format!("b={}", p(&ckpt1));
    let m = stdout_json(&specprobe(&["compare", &same, &again, "--out", p(&cmp), "--svg"]));
    assert_eq!(m["overlap"], serde_json::json!([[100, 100], [100, 100]]));
    assert_eq!(
        std::fs::read_to_string(cmp.join("overlap.csv")).unwrap(),
        "label,a,b\na,100,100\nb,100,100\n"
    );

    let per_seed = dir.path().join("cmp2");
    let group = format!("toy={},{}", p(&ckpt1), p(&ckpt2));
    let m = stdout_json(&specprobe(&["compare", &group, p(&ckpt1), "--per-seed", "--out", p(&per_seed)]));
    assert_eq!(m["labels"].as_array().unwrap().len(), 3);
}

#[test]
fn data_and_model_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, va) = gen_pair(dir.path(), "4");
    let orig = dir.path().join("orig");
    assert!(train(&orig, &tr, &va, "orig", "1", &[]).status.success());
    let ckpt = orig.join("seed-1/checkpoint.json");

    let out = specprobe(&["profile", "--checkpoint", p(&ckpt), "--out", p(&dir.path().join("pp"))]);
    assert_eq!(out.status.code(), Some(3));

    // embedding width mismatch between checkpoint and data
    let wide = dir.path().join("wide.sprb");
    let g = specprobe(&["gen", "--out", p(&wide), "--n", "16", "--e", "5", "--classes", "2", "--count", "4",
        "--signal-band", "0:1", "--noise-band", "8:15"]);
    assert!(g.status.success());
    assert_eq!(specprobe(&["eval", "--checkpoint", p(&ckpt), "--data", p(&wide)]).status.code(), Some(3));
    assert_eq!(train(&dir.path().join("t"), &tr, &wide, "orig", "1", &[]).status.code(), Some(3));

    let empty = dir.path().join("empty.sprb");
    std::fs::write(&empty, b"").unwrap();
    assert_eq!(specprobe(&["eval", "--checkpoint", p(&ckpt), "--data", p(&empty)]).status.code(), Some(3));

    // profiles of different lengths cannot be compared
    let a64 = dir.path().join("a64");
    let a32 = dir.path().join("a32");
    assert!(train(&a64, &tr, &va, "auto", "1", &[]).status.success());
    assert!(train(&a32, &tr, &va, "auto", "1", &["--filter-len", "32"]).status.success());
    let out = specprobe(&[
        "compare",
        p(&a64.join("seed-1/checkpoint.json")),
        p(&a32.join("seed-1/checkpoint.json")),
        "--out",
        p(&dir.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, va) = gen_pair(dir.path(), "5");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "mode = \"fixed:low\"\nseeds = [9]\n\n[train]\nlearning_rate = 0.01\nmax_epochs = 2\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = specprobe(&[
        "train", "--config", p(&cfg), "--train", p(&tr), "--val", p(&va), "--out", p(&out_dir), "--lr", "0.02",
    ]);
    let summary = stdout_json(&out);
    assert_eq!(summary["mode"], "fixed:low");
    assert_eq!(summary["seeds"][0]["seed"], 9);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["train"]["learning_rate"], 0.02);
    assert_eq!(manifest["config"]["train"]["max_epochs"], 2);

    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = specprobe(&["train", "--config", p(&cfg), "--train", p(&tr), "--val", p(&va), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn import_converts_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("dump.jsonl");
    std::fs::write(
        &src,
        "{\"id\": 1, \"values\": [[0.5, 1.0], [0.25, -1.0]], \"labels\": [0, 1], \"ignore\": [false, true]}\n\
         {\"id\": 2, \"values\": [[1.5, 2.0]], \"labels\": [1]}\n",
    )
    .unwrap();
    let out = dir.path().join("dump.sprb");
    let r = specprobe(&["import", "--input", p(&src), "--out", p(&out), "--classes", "2", "--task-kind", "token"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let ds = spectral_probe_dataset(&out);
    assert_eq!(ds, 2);
}

fn spectral_probe_dataset(path: &Path) -> usize {
    // The header stores the sequence count as a little-endian u64 at byte 24.
    let bytes = std::fs::read(path).unwrap();
    u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize
}
