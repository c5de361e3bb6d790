use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const ARCH: &str = "12x12-16-16(3)-16(3)-24-12x12[3]";

fn mvp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn mvp")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mvp(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn gen(dir: &Path) {
    ok(
        dir,
        &["gen-data", "--out", "d", "--identities", "6", "--size", "12", "--views=-30,0,30", "--illums", "2"],
    );
}

fn train(dir: &Path, out: &str, epochs: &str, extra: &[&str]) -> String {
    let mut args = vec![
        "train", "--manifest", "d/manifest.txt", "--out", out, "--arch", ARCH, "--epochs", epochs, "--samples", "4",
        "--optimizer", "adam", "--lr", "0.002",
    ];
    args.extend_from_slice(extra);
    ok(dir, &args)
}

#[test]
fn gen_data_writes_a_loadable_manifest() {
    let t = tempfile::tempdir().unwrap();
    let stdout = ok(
        t.path(),
        &["gen-data", "--out", "d", "--identities", "4", "--size", "12", "--views=-15,15", "--illums", "1"],
    );
    assert!(stdout.contains("records: 8"), "{stdout}");
    let manifest = fs::read_to_string(t.path().join("d/manifest.txt")).unwrap();
    assert!(manifest.lines().count() > 8);
}

#[test]
fn identical_runs_write_identical_checkpoints() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path());
    train(t.path(), "a", "2", &[]);
    train(t.path(), "b", "2", &[]);
    for e in 0..=2 {
        let name = format!("ckpt_epoch{e}.mvpc");
        assert_eq!(
            fs::read(t.path().join("a").join(&name)).unwrap(),
            fs::read(t.path().join("b").join(&name)).unwrap(),
            "{name}"
        );
    }
    let metrics = fs::read_to_string(t.path().join("a/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn zero_epochs_writes_only_the_initial_checkpoint() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path());
    train(t.path(), "z", "0", &[]);
    assert!(t.path().join("z/ckpt_epoch0.mvpc").exists());
    assert!(!t.path().join("z/ckpt_epoch1.mvpc").exists());
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path());
    train(t.path(), "full", "3", &[]);
    train(t.path(), "part", "1", &[]);
    train(t.path(), "part", "3", &["--resume", "part/ckpt_epoch1.mvpc"]);
    assert_eq!(
        fs::read(t.path().join("full/ckpt_epoch3.mvpc")).unwrap(),
        fs::read(t.path().join("part/ckpt_epoch3.mvpc")).unwrap()
    );
}

#[test]
fn config_file_and_flag_overrides() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path());
    fs::write(
        t.path().join("run.cfg"),
        format!("manifest = d/manifest.txt\narch = {ARCH}\nepochs = 5\nsamples = 3\ngrad_mode = weighted\n"),
    )
    .unwrap();
    ok(t.path(), &["train", "--config", "run.cfg", "--epochs", "1", "--out", "c"]);
    let resolved = fs::read_to_string(t.path().join("c/config.txt")).unwrap();
    assert!(resolved.contains("epochs = 1"));
    assert!(resolved.contains("grad_mode = weighted"));
    assert!(t.path().join("c/ckpt_epoch1.mvpc").exists());

    fs::write(t.path().join("bad.cfg"), "epoch = 5\n").unwrap();
    let out = mvp(t.path(), &["train", "--config", "bad.cfg"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}

#[test]
fn reconstruct_writes_views_and_sheet() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path());
    train(t.path(), "r", "1", &[]);
    let input = "d/id0/v0_l0.pgm";
    ok(t.path(), &["reconstruct", "--checkpoint", "r/ckpt_epoch1.mvpc", "--input", input, "--out", "o"]);
    let n = fs::read_dir(t.path().join("o")).unwrap().count();
    assert_eq!(n, 4, "three views plus a contact sheet");

    let out = mvp(
        t.path(),
        &["reconstruct", "--checkpoint", "r/ckpt_epoch1.mvpc", "--input", input, "--views", "5"],
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("valid labels: 0,1,2"));
}

#[test]
fn estimate_view_and_eval_protocols_run() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path());
    train(t.path(), "r", "2", &[]);
    let ck = "r/ckpt_epoch2.mvpc";
    ok(t.path(), &["estimate-view", "--checkpoint", ck, "--manifest", "d/manifest.txt", "--out", "v.csv"]);
    let csv = fs::read_to_string(t.path().join("v.csv")).unwrap();
    assert!(csv.starts_with("path,true_view,predicted_view,abs_error"));
    assert_eq!(csv.lines().count(), 1 + 18, "three held-out identities, six images each");

    for p in ["recognition", "recon-quality", "view-error"] {
        let out = format!("{p}.csv");
        ok(t.path(), &["eval", p, "--checkpoint", ck, "--manifest", "d/manifest.txt", "--out", &out]);
        assert!(t.path().join(&out).exists(), "{p}");
    }
    let s = ok(t.path(), &["eval", "sparsity", "--metrics", "r/metrics.csv", "--out", "s.csv"]);
    assert!(s.contains("late_max_weight_median"), "{s}");
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&mvp(t.path(), &["--help"])), 0);
    assert_eq!(code(&mvp(t.path(), &["no-such-command"])), 1);
    assert_eq!(code(&mvp(t.path(), &["eval", "nonsense"])), 1);
    assert_eq!(code(&mvp(t.path(), &["train", "--manifest", "missing/manifest.txt"])), 2);

    gen(t.path());
    train(t.path(), "r", "0", &[]);
    let mut bytes = fs::read(t.path().join("r/ckpt_epoch0.mvpc")).unwrap();
    bytes[64] ^= 0x10;
    fs::write(t.path().join("flip.mvpc"), bytes).unwrap();
    let out = mvp(t.path(), &["estimate-view", "--checkpoint", "flip.mvpc", "--manifest", "d/manifest.txt"]);
    assert_eq!(code(&out), 3);
    fs::write(t.path().join("short.mvpc"), b"MVPC").unwrap();
    let out = mvp(t.path(), &["estimate-view", "--checkpoint", "short.mvpc", "--manifest", "d/manifest.txt"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gradcheck_passes() {
    let t = tempfile::tempdir().unwrap();
    let s = ok(t.path(), &["gradcheck", "--seed", "7"]);
    assert!(s.contains("max relative error"));
}
