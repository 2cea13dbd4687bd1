use std::path::Path;
use std::process::{Command, Output};

fn towe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_towe"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = towe(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Runs a failing command and returns its single stderr line.
fn fails(args: &[&str], cwd: &Path) -> String {
    let out = towe(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic spans lines: {err}");
    err
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// Small corpus and a quick training config.
fn setup(dir: &Path) {
    ok(&["synth", "--kind", "subword", "--sentences", "120", "--out-dir", "data"], dir);
    std::fs::write(
        dir.join("cfg.txt"),
        "# tiny\nembed_dim = 6\nhidden-dim = 6\nmax_epochs = 2\nseeds = 3\n",
    )
    .unwrap();
}

fn train(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", "--train", "data/train.jsonl", "--dev", "data/dev.jsonl", "--test",
        "data/test.jsonl", "--vocab", "data/vocab.txt", "--config", "cfg.txt", "--out-dir", out,
    ];
    args.extend_from_slice(extra);
    ok(&args, dir)
}

#[test]
fn train_writes_logs_checkpoints_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    let out = train(d, "run", &["--variant", "S"]);

    let logs: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(logs.len(), 2);
    assert_eq!(logs[1]["epoch"], 2);
    assert_eq!(logs[0]["seed"], 3);
    assert!(logs[0]["loss"].as_f64().unwrap() > 0.0);
    assert!(logs[0]["dev_f1"].is_number());

    let meta: serde_json::Value = serde_json::from_str(&read(&d.join("run/seed-3.ckpt.json"))).unwrap();
    assert_eq!(meta["variant"], "S");
    assert_eq!(meta["hyperparameters"]["embed_dim"], 6);
    assert_eq!(meta["hyperparameters"]["hidden_dim"], 6);
    let report: serde_json::Value = serde_json::from_str(&read(&d.join("run/report.json"))).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 1);
    assert_eq!(report["runs"][0]["checkpoint"], "seed-3.ckpt");
    assert!(std::fs::read(d.join("run/seed-3.ckpt")).unwrap().starts_with(b"TOWE"));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    train(d, "run", &["--embed-dim", "4", "--seeds", "1,2", "--max-epochs", "1"]);
    let meta: serde_json::Value = serde_json::from_str(&read(&d.join("run/seed-2.ckpt.json"))).unwrap();
    assert_eq!(meta["hyperparameters"]["embed_dim"], 4);
    assert_eq!(meta["hyperparameters"]["hidden_dim"], 6);
    assert_eq!(meta["variant"], "SA");
    assert!(d.join("run/seed-1.ckpt").exists());
    let history: serde_json::Value =
        serde_json::from_str(&read(&d.join("run/seed-1.history.json"))).unwrap();
    assert_eq!(history["epochs"].as_array().unwrap().len(), 1);
}

#[test]
fn evaluate_predict_and_ablate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    train(d, "s", &["--variant", "S"]);
    train(d, "sa", &["--variant", "SA"]);
    train(d, "m", &["--variant", "S", "--mask-aspect"]);

    let out = ok(
        &["evaluate", "--test", "data/test.jsonl", "--checkpoint", "sa", "--vocab", "data/vocab.txt", "--report", "ev.json"],
        d,
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("run"), "{table}");
    let ev: serde_json::Value = serde_json::from_str(&read(&d.join("ev.json"))).unwrap();
    let trained: serde_json::Value = serde_json::from_str(&read(&d.join("sa/report.json"))).unwrap();
    assert_eq!(ev["runs"], trained["runs"]);

    ok(
        &["predict", "--input", "data/test.jsonl", "--checkpoint", "sa/seed-3.ckpt", "--vocab", "data/vocab.txt", "--out", "pred.jsonl"],
        d,
    );
    let pred = read(&d.join("pred.jsonl"));
    let gold = read(&d.join("data/test.jsonl"));
    assert_eq!(pred.lines().count(), gold.lines().count());
    for (p, g) in pred.lines().zip(gold.lines()) {
        let (p, g): (serde_json::Value, serde_json::Value) =
            (serde_json::from_str(p).unwrap(), serde_json::from_str(g).unwrap());
        assert_eq!(p["id"], g["id"]);
        assert_eq!(p["words"], g["words"]);
        assert!(p["opinions"].is_array());
    }

    let out = ok(
        &["ablate", "--test", "data/test.jsonl", "--vocab", "data/vocab.txt", "--s", "s", "--sa", "sa", "--s-masked", "m/seed-3.ckpt", "--report", "abl.json"],
        d,
    );
    let table = String::from_utf8(out.stdout).unwrap();
    for row in ["BiLSTM(S)", "BiLSTM(S,A)", "-mask(S)"] {
        assert!(table.contains(row), "{table}");
    }
    let abl: serde_json::Value = serde_json::from_str(&read(&d.join("abl.json"))).unwrap();
    assert_eq!(abl["table"]["rows"].as_array().unwrap().len(), 3);
    assert_eq!(abl["table"]["rows"][0]["delta"], 0.0);

    let err = fails(
        &["ablate", "--test", "data/test.jsonl", "--vocab", "data/vocab.txt", "--s", "sa", "--sa", "sa", "--s-masked", "m"],
        d,
    );
    assert!(err.contains("trained as variant SA"), "{err}");
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    train(d, "run", &[]);

    let err = fails(
        &["train", "--train", "missing.jsonl", "--dev", "data/dev.jsonl", "--vocab", "data/vocab.txt", "--out-dir", "x"],
        d,
    );
    assert!(err.contains("missing.jsonl"), "{err}");

    std::fs::write(d.join("bad.jsonl"), "{\"id\":\"a\",\"words\":[\"x\"],\"aspect\":[0,0]}\nnot json\n").unwrap();
    let err = fails(&["evaluate", "--test", "bad.jsonl", "--checkpoint", "run", "--vocab", "data/vocab.txt"], d);
    assert!(err.contains("line 1"), "{err}");

    std::fs::write(d.join("other.txt"), "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nzz\n").unwrap();
    let err = fails(&["evaluate", "--test", "data/test.jsonl", "--checkpoint", "run", "--vocab", "other.txt"], d);
    assert!(err.contains("does not match the vocabulary"), "{err}");

    std::fs::write(d.join("bad.cfg"), "learning_rate = 1\n").unwrap();
    let err = fails(
        &["train", "--train", "data/train.jsonl", "--dev", "data/dev.jsonl", "--vocab", "data/vocab.txt", "--config", "bad.cfg", "--out-dir", "x"],
        d,
    );
    assert!(err.contains("unknown key"), "{err}");

    let err = fails(
        &["train", "--train", "data/train.jsonl", "--dev", "data/dev.jsonl", "--vocab", "data/vocab.txt", "--variant", "Q", "--out-dir", "x"],
        d,
    );
    assert!(err.contains("unknown variant"), "{err}");

    std::fs::remove_file(d.join("run/seed-3.ckpt.json")).unwrap();
    let err = fails(&["predict", "--input", "data/test.jsonl", "--checkpoint", "run/seed-3.ckpt", "--vocab", "data/vocab.txt", "--out", "p.jsonl"], d);
    assert!(err.contains("metadata"), "{err}");
}

#[test]
fn bpe_vocab_and_prepared_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    ok(&["train-vocab", "--corpus", "data/train.jsonl", "--merges", "40", "--out", "bpe"], d);
    assert_eq!(read(&d.join("bpe/merges.txt")).lines().count(), 40);
    let vocab = read(&d.join("bpe/vocab.txt"));
    assert!(vocab.lines().any(|l| l == "[MASK]"));

    ok(
        &["prepare", "--data", "data/test.jsonl", "--vocab", "bpe/vocab.txt", "--merges", "bpe/merges.txt", "--variant", "S", "--mask-aspect", "--out", "prep.jsonl"],
        d,
    );
    let mask_id = vocab.lines().position(|l| l == "[MASK]").unwrap() as u64;
    for line in read(&d.join("prep.jsonl")).lines() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        let ids = r["token_ids"].as_array().unwrap();
        assert_eq!(ids.len(), r["pieces"].as_array().unwrap().len() + 2);
        assert_eq!(r["variant"], "S");
        let span = &r["aspect_piece_span"];
        let start = span[0].as_u64().unwrap() as usize;
        assert_eq!(ids[start].as_u64().unwrap(), mask_id);
    }

    ok(
        &["train", "--train", "data/train.jsonl", "--dev", "data/dev.jsonl", "--vocab", "bpe/vocab.txt", "--merges", "bpe/merges.txt", "--config", "cfg.txt", "--out-dir", "bpe-run"],
        d,
    );
    let err = fails(&["evaluate", "--test", "data/test.jsonl", "--checkpoint", "bpe-run", "--vocab", "bpe/vocab.txt"], d);
    assert!(err.contains("Bpe"), "{err}");
}

#[test]
fn converts_legacy_tsv() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("in.tsv"),
        "s_id\tsentence\ttarget_tags\topinion_words_tags\n\
         7\tsuch an awesome surfboard\tsuch\\O an\\O awesome\\O surfboard\\B\tsuch\\O an\\O awesome\\B surfboard\\O\n",
    )
    .unwrap();
    ok(&["convert-tsv", "--input", "in.tsv", "--split", "test", "--out", "out.jsonl"], d);
    let rec: serde_json::Value = serde_json::from_str(read(&d.join("out.jsonl")).trim()).unwrap();
    assert_eq!(rec["id"], "7");
    assert_eq!(rec["aspect"], serde_json::json!([3, 3]));
    assert_eq!(rec["opinions"], serde_json::json!([[2, 2]]));

    std::fs::write(d.join("short.tsv"), "only one column\n").unwrap();
    let err = fails(&["convert-tsv", "--input", "short.tsv", "--out", "x.jsonl"], d);
    assert!(err.contains("line 1"), "{err}");
}
