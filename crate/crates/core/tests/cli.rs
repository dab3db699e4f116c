use std::path::Path;
use std::process::{Command, Output};

use pixmt::corpus::{toy_corpus, write_tsv};

fn pixmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pixmt"))
        .args(args)
        .env_remove("PIXMT_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn render_then_ocr_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("x.pgm");
    for text in ["", "Hallo Welt", "the dog runs today"] {
        let out = pixmt(&["render", "--text", text, "--out", path(&img)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = pixmt(&["ocr", "--image", path(&img)]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end_matches('\n'), text);
    }
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pixmt(&[
        "translate",
        "--ckpt",
        path(&dir.path().join("none.ckpt")),
        "--text",
        "der Hund",
        "--out",
        path(&dir.path().join("o.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn configuration_errors_are_usage_errors() {
    let out = pixmt(&["--set", "colour=blue", "gradcheck"]);
    assert_eq!(out.status.code(), Some(2));
    let out = pixmt(&["--epochs", "many", "gradcheck"]);
    assert_eq!(out.status.code(), Some(2));
    let out = pixmt(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_subcommand_passes() {
    let out = pixmt(&["gradcheck"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().count() >= 8);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn gen_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("toy.tsv");
    write_tsv(&toy_corpus(4, 3), &corpus).unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("m.ckpt");
    let eval = dir.path().join("eval");

    let out = pixmt(&["gen", "--corpus", path(&corpus), "--out", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("index.txt").exists());

    let out = pixmt(&["--epochs", "1", "--max-steps", "2", "train", "--data", path(&data), "--ckpt", path(&ckpt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(ckpt.with_extension("ckpt.loss.csv")).unwrap();
    assert!(curve.starts_with("epoch,split,nll\n1,train,"));

    let translated = dir.path().join("t.pgm");
    let out = pixmt(&[
        "--decode-steps",
        "3",
        "translate",
        "--ckpt",
        path(&ckpt),
        "--text",
        "der Hund",
        "--out",
        path(&translated),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(translated.exists());

    let out = pixmt(&["--decode-steps", "3", "eval", "--ckpt", path(&ckpt), "--corpus", path(&corpus), "--out", path(&eval)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 5);
    assert!(stdout.lines().last().unwrap().starts_with("{\"summary\""));
    assert_eq!(std::fs::read_to_string(eval.join("report.jsonl")).unwrap(), stdout);
    assert!(eval.join("table.txt").exists());
}
