//! End-to-end runs of the `multiref` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn multiref(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiref"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = multiref(args);
    assert!(
        out.status.success(),
        "multiref {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Pipeline {
    files: Vec<PathBuf>,
}

/// synth -> train-s1 -> train-s2 -> decode -> eval -> report, all seeded.
fn pipeline(dir: &Path) -> Pipeline {
    let train = dir.join("train.jsonl");
    let dev = dir.join("dev.jsonl");
    let s1 = dir.join("s1.ckpt");
    let s2 = dir.join("s2.ckpt");
    let hyps = dir.join("hyps.jsonl");
    let report = dir.join("report.json");
    let table = dir.join("table.txt");
    ok(&["--seed", "3", "synth", "--out", p(&train), "--num-examples", "30"]);
    ok(&[
        "--seed",
        "4",
        "synth",
        "--out",
        p(&dev),
        "--num-examples",
        "10",
        "--split",
        "dev",
        "--id-prefix",
        "dev",
    ]);
    let shape = ["--embed-dim", "8", "--hidden-dim", "12"];
    let mut s1_args = vec![
        "--seed",
        "3",
        "train-s1",
        "--train",
        p(&train),
        "--dev",
        p(&dev),
        "--model-out",
        p(&s1),
        "--epochs",
        "4",
        "--lr",
        "0.1",
    ];
    s1_args.extend(shape);
    ok(&s1_args);
    ok(&[
        "--seed",
        "3",
        "train-s2",
        "--train",
        p(&train),
        "--dev",
        p(&dev),
        "--model-in",
        p(&s1),
        "--model-out",
        p(&s2),
        "--epochs",
        "2",
        "--samples",
        "2",
        "--baseline",
        "running_mean",
    ]);
    ok(&[
        "decode",
        "--model-in",
        p(&s2),
        "--test",
        p(&dev),
        "--hyps",
        p(&hyps),
        "--max-len",
        "12",
    ]);
    ok(&["eval", "--test", p(&dev), "--hyps", p(&hyps), "--report", p(&report)]);
    ok(&["report", "--report", &format!("s2={}", p(&report)), "--out", p(&table)]);
    let log = dir.join("s1.ckpt.log.jsonl");
    Pipeline {
        files: vec![train, dev, s1, log, s2, hyps, report, table],
    }
}

#[test]
fn seeded_pipeline_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    for (x, y) in first.files.iter().zip(&second.files) {
        let (bx, by) = (std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        assert!(!bx.is_empty(), "{} is empty", x.display());
        assert!(
            bx == by,
            "{} differs between runs",
            x.file_name().unwrap().to_string_lossy()
        );
    }

    let hyps = std::fs::read_to_string(&first.files[5]).unwrap();
    let lines: Vec<serde_json::Value> = hyps.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
    assert!(lines.iter().all(|l| l["hypotheses"].as_array().unwrap().len() == 3));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&first.files[6]).unwrap()).unwrap();
    assert_eq!(report["k"], 3);
    assert!(report["topk"]["pwb"].is_number());
    let table = std::fs::read_to_string(&first.files[7]).unwrap();
    assert!(table.contains("s2"));
}

#[test]
fn top1_evaluation_omits_topk_block() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let hyps = dir.path().join("h.jsonl");
    ok(&[
        "synth",
        "--out",
        p(&corpus),
        "--num-examples",
        "5",
        "--split",
        "test",
        "--id-prefix",
        "t",
    ]);
    let mut lines = String::new();
    for line in std::fs::read_to_string(&corpus).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let refs = v["references"].as_array().unwrap();
        let rec = serde_json::json!({"id": v["id"], "hypotheses": [refs[1], refs[2], refs[0]]});
        lines.push_str(&format!("{rec}\n"));
    }
    std::fs::write(&hyps, lines).unwrap();

    let out: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "--test", p(&corpus), "--hyps", p(&hyps), "--topk", "1"])).unwrap();
    assert_eq!(out["k"], 1);
    assert!(out.get("topk").is_none_or(|t| t.is_null()));
    assert_eq!(out["per_rank"].as_array().unwrap().len(), 1);

    let full: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "--test", p(&corpus), "--hyps", p(&hyps)])).unwrap();
    assert_eq!(full["per_rank"].as_array().unwrap().len(), 3);
    // Every hypothesis is a reference of its own example.
    assert!((full["topk"]["rfb_bm"].as_f64().unwrap() - 100.0).abs() < 1e-9);
    assert_eq!(full["top1"], out["top1"]);

    let too_many = multiref(&["eval", "--test", p(&corpus), "--hyps", p(&hyps), "--topk", "4"]);
    assert_eq!(too_many.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(last_line(&too_many.stderr)).unwrap();
    assert_eq!(err["error"], "k_too_large");
}

fn last_line(bytes: &[u8]) -> &[u8] {
    let text = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    match text.iter().rposition(|&b| b == b'\n') {
        Some(i) => &text[i + 1..],
        None => text,
    }
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let out = multiref(&["decode", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 5\n\n[stage1]\nepochs = 3\nlr0 = 0.2\n\n[decode]\nbeam_width = 6\nnum_groups = 3\n",
    )
    .unwrap();
    let text = ok(&[
        "--config",
        p(&cfg),
        "--seed",
        "9",
        "--print-config",
        "decode",
        "--groups",
        "2",
    ]);
    let eff: toml::Value = toml::from_str(&text).unwrap();
    assert_eq!(eff["seed"].as_integer(), Some(9));
    assert_eq!(eff["stage1"]["epochs"].as_integer(), Some(3));
    assert_eq!(eff["stage1"]["lr0"].as_float(), Some(0.2));
    assert_eq!(eff["decode"]["beam_width"].as_integer(), Some(6));
    assert_eq!(eff["decode"]["num_groups"].as_integer(), Some(2));
}

#[test]
fn errors_are_structured_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[stage1]\nlr0 = -1.0\nepochs = 0\n").unwrap();
    let out = multiref(&["--config", p(&cfg), "train-s1", "--train", "missing.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(last_line(&out.stderr)).unwrap();
    assert_eq!(err["error"], "invalid_config");
    let fields: Vec<&str> = err["fields"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    assert!(fields.iter().any(|f| f.starts_with("stage1.lr0")), "{fields:?}");
    assert!(fields.iter().any(|f| f.starts_with("stage1.epochs")), "{fields:?}");

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[stage1]\nepochz = 3\n").unwrap();
    let out = multiref(&["--config", p(&unknown), "synth"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(last_line(&out.stderr)).unwrap();
    assert!(err["message"].as_str().unwrap().contains("epochz"));

    let corpus = dir.path().join("test.jsonl");
    ok(&["synth", "--out", p(&corpus), "--num-examples", "3", "--split", "test"]);
    let out = multiref(&["stats", "--corpus", p(&corpus), "--split", "test"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(last_line(&out.stderr)).unwrap();
    assert!(err["error"].is_string() && err["message"].is_string());
}

#[test]
fn expand_and_augment_write_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let multi = dir.path().join("multi.jsonl");
    let single = dir.path().join("single.jsonl");
    let expanded = dir.path().join("expanded.jsonl");
    let augmented = dir.path().join("aug.jsonl");
    let report = dir.path().join("aug.json");
    ok(&["synth", "--out", p(&multi), "--num-examples", "6"]);
    ok(&["expand", "--corpus", p(&multi), "--out", p(&expanded)]);
    let pairs = std::fs::read_to_string(&expanded).unwrap();
    assert_eq!(pairs.lines().count(), 18);
    for line in pairs.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["references"].as_array().unwrap().len(), 1);
        assert!(v["id"].as_str().unwrap().contains('#'));
    }

    ok(&["synth", "--out", p(&single), "--num-examples", "6", "--k-refs", "1"]);
    ok(&[
        "augment",
        "--corpus",
        p(&single),
        "--out",
        p(&augmented),
        "--report",
        p(&report),
        "--k-refs",
        "4",
    ]);
    let input: Vec<serde_json::Value> = std::fs::read_to_string(&single)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let output: Vec<serde_json::Value> = std::fs::read_to_string(&augmented)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(input.len(), output.len());
    for (a, b) in input.iter().zip(&output) {
        assert_eq!(a["references"][0], b["references"][0]);
    }
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(rep["client"].as_str().map(|c| c.contains("mock")), Some(true));
}
