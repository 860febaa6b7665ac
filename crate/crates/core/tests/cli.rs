use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pneumoseg"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_train_eval_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(run(&["synth", "--out", "ds", "--n", "6", "--size", "16", "--seed", "3"], d).status.success());
    let train = run(
        &[
            "train", "--csv", "ds/index.csv", "--images", "ds/images", "--out", "m.ckpt", "--history", "h.csv",
            "--image-size", "16", "--depth", "2", "--base-channels", "4", "--blocks-per-stage", "1", "--epochs", "2",
            "--batch-size", "2", "--lr", "1e-3", "--seed", "3",
        ],
        d,
    );
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    assert!(stdout(&train).starts_with("best_epoch="));
    let history = std::fs::read_to_string(d.join("h.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss,val_dice,val_iou\n1,"));

    let eval = run(&["eval", "--checkpoint", "m.ckpt", "--csv", "ds/index.csv", "--images", "ds/images", "--json"], d);
    assert!(eval.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&eval)).unwrap();
    assert_eq!(report["n_samples"], 6);

    let pred = run(
        &["predict", "--checkpoint", "m.ckpt", "--image", "ds/images/synth_00000.png", "--min-area", "0", "--mask-out", "mask.png"],
        d,
    );
    assert!(pred.status.success());
    let rle = stdout(&pred).trim().to_string();
    let enc = run(&["encode", "--mask", "mask.png"], d);
    assert_eq!(stdout(&enc).trim(), rle);
}

#[test]
fn encode_decode_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let dec = run(&["decode", "--rle", "2 3  9 1", "--width", "3", "--height", "4", "--out", "m.png"], d);
    assert!(dec.status.success());
    assert_eq!(stdout(&run(&["encode", "--mask", "m.png"], d)).trim(), "2 3 9 1");
}

#[test]
fn exit_codes_and_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(&["train"], d).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"], d).status.code(), Some(2));

    let bad = run(&["decode", "--rle", "1 x", "--width", "2", "--height", "2", "--out", "o.png"], d);
    assert_eq!(bad.status.code(), Some(1));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.trim_end().ends_with(r#"error: kind=rle message="token 1: \"x\" is not a positive integer""#), "{err}");

    let missing = run(&["predict", "--checkpoint", "absent.ckpt", "--image", "x.png"], d);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error: kind=io"));
}
