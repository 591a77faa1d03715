use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn msgsem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msgsem"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

const TINY: &str = r#"
train_scenes = 0
test_scenes = 6
sample_size = 4

[scenes.bounds]
min = 1
max = 4

[model]
hidden_dim = 4
decoder_hidden = 4
batch_size = 3
train_steps = 2
"#;

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stages_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.toml"), TINY).unwrap();
    let base = ["--config", "tiny.toml", "--out", "run"];

    let o = msgsem(d, &[&["gen-data"][..], &base].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let test = fs::read_to_string(d.join("run/test.jsonl")).unwrap();
    assert_eq!(test.lines().count(), 7);
    assert!(fs::read(d.join("run/train.jsonl")).unwrap().is_empty());

    let o = msgsem(d, &[&["train"][..], &base].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(d.join("run/model.ckpt").exists());

    let o = msgsem(d, &[&["eval-theories"][..], &base].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(d.join("run/theories.txt")).unwrap();
    for label in ["random", "literal", "human"] {
        assert!(report.contains(&format!("row {label} objects")), "{report}");
    }
    assert!(report.contains("meta config_digest "));
    assert!(report.contains("meta seed_theory "));

    // the training split is empty, so nothing can be aligned
    let o = msgsem(d, &[&["fit-op", "--op", "not"][..], &base].concat());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no aligned pairs"), "{}", stderr(&o));

    let o = msgsem(d, &[&["pca", "--op", "and"][..], &base].concat());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing operator"), "{}", stderr(&o));

    let o = msgsem(d, &[&["eval-theories", "--checkpoint", "nowhere.ckpt"][..], &base].concat());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "sample_size = 0\n").unwrap();
    fs::write(d.join("typo.toml"), "sample_sise = 3\n").unwrap();
    for args in [
        &["frobnicate"][..],
        &["fit-op"][..],
        &["fit-op", "--op", "xor"][..],
        &["train", "--seed", "minus-one"][..],
        &["train", "--config", "bad.toml"][..],
        &["train", "--config", "typo.toml"][..],
        &["train", "--config", "absent.toml"][..],
    ] {
        let o = msgsem(d, args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(msgsem(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn seed_flag_changes_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.toml"), TINY).unwrap();
    for (seed, out) in [("1", "a"), ("1", "b"), ("2", "c")] {
        let o = msgsem(d, &["gen-data", "--config", "tiny.toml", "--seed", seed, "--out", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |o: &str| fs::read(d.join(o).join("test.jsonl")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}
