use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gliomapipe"));
    c.env_remove("GLIOMAPIPE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn gliomapipe")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three tiny synthetic studies plus a config that trains in a second or two.
fn setup(dir: &Path) -> PathBuf {
    let studies = dir.join("studies");
    ok(&["synth", "--out", s(&studies), "--n", "3", "--seed", "1", "--dims", "16,16,4"]);
    let cfg = dir.join("pipeline.toml");
    fs::write(
        &cfg,
        r#"seed = 3

[paths]
studies = "studies"
reference = "studies/SYN000.toml"
output = "out"

[network]
encoder_filters = [4, 8]
levels = 2

[train]
epochs = 2

[postprocess]
min_size = 5

[survival]
n_trees = 5
"#,
    )
    .unwrap();
    cfg
}

#[test]
fn help_lists_subcommands() {
    let text = ok(&["--help"]);
    for sub in [
        "preprocess",
        "train",
        "segment",
        "postprocess",
        "features",
        "survival-train",
        "survival-predict",
        "evaluate",
        "pipeline",
    ] {
        assert!(text.contains(sub), "missing {sub}");
    }
}

#[test]
fn pipeline_then_survival_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("out");
    ok(&["pipeline", "--config", s(&cfg)]);
    for f in ["features.csv", "targets.csv", "survival.csv", "evaluation.csv", "provenance.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let model = dir.path().join("gbt.json");
    let preds = dir.path().join("preds.csv");
    ok(&[
        "survival-train",
        "--config",
        s(&cfg),
        "--features",
        s(&out.join("features.csv")),
        "--targets",
        s(&out.join("targets.csv")),
        "--out",
        s(&model),
    ]);
    ok(&[
        "survival-predict",
        "--model",
        s(&model),
        "--features",
        s(&out.join("features.csv")),
        "--out",
        s(&preds),
    ]);
    // Same config and data as the pipeline's survival stage.
    assert_eq!(fs::read(&preds).unwrap(), fs::read(out.join("survival.csv")).unwrap());
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = bin()
        .env("GLIOMAPIPE_SEED", "11")
        .args(["pipeline", "--config", s(&cfg), "--stages", "preprocess"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let prov = fs::read_to_string(dir.path().join("out/provenance.json")).unwrap();
    assert!(prov.contains("\"seed\": 11"), "{prov}");

    let bad = bin()
        .env("GLIOMAPIPE_SEED", "eleven")
        .args(["pipeline", "--config", s(&cfg), "--stages", "preprocess"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn stage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = run(&["pipeline", "--config", s(&cfg), "--stages", "segment,preprocess"]);
    assert!(!out.status.success());
    let out = run(&["pipeline", "--config", s(&cfg), "--stages", "features"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!run(&["pipeline", "--config", s(&cfg), "--stages", "train"]).status.success());
}

#[test]
fn single_study_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let d = dir.path();
    let studies = d.join("studies");
    let pp = d.join("pp");
    for id in ["SYN000", "SYN001", "SYN002"] {
        let m = studies.join(format!("{id}.toml"));
        ok(&[
            "preprocess",
            "--manifest",
            s(&m),
            "--reference",
            s(&studies.join("SYN000.toml")),
            "--out",
            s(&pp),
        ]);
    }
    let ckpt = d.join("model/net.ckpt");
    let log = ok(&["train", "--config", s(&cfg), "--studies", s(&pp), "--out", s(&ckpt)]);
    assert!(log.contains("epoch   2"), "{log}");
    assert!(ckpt.exists());
    assert!(PathBuf::from(format!("{}.best", ckpt.display())).exists());

    let pred_dir = d.join("pred");
    let truth_dir = d.join("truth");
    let manifest = pp.join("SYN001_pp.toml");
    let raw = pred_dir.join("raw_SYN001_seg.gpv1");
    ok(&["segment", "--ckpt", s(&ckpt), "--manifest", s(&manifest), "--out", s(&raw)]);
    let clean = pred_dir.join("SYN001_seg.gpv1");
    ok(&["postprocess", "--in", s(&raw), "--out", s(&clean), "--min-size", "5", "--connectivity", "6"]);
    fs::remove_file(&raw).unwrap();

    // Ground truth scored against itself.
    fs::create_dir_all(&truth_dir).unwrap();
    fs::copy(pp.join("SYN001_seg.gpv1"), truth_dir.join("SYN001_seg.gpv1")).unwrap();
    let eval = d.join("dice.csv");
    ok(&["evaluate", "--pred", s(&truth_dir), "--truth", s(&truth_dir), "--out", s(&eval)]);
    let text = fs::read_to_string(&eval).unwrap();
    assert!(text.starts_with("patient_id,whole,core,active\nSYN001,1,1,1\n"), "{text}");
    assert!(text.contains("\nmean,1,1,1\n"));
    ok(&[
        "evaluate",
        "--pred",
        s(&pred_dir),
        "--truth",
        s(&truth_dir),
        "--out",
        s(&eval),
        "--empty-policy",
        "exclude-nan",
    ]);
    assert!(!run(&["evaluate", "--pred", s(&pred_dir), "--truth", s(&truth_dir), "--out", s(&eval), "--empty-policy", "bogus"])
        .status
        .success());

    let feats = d.join("feat.csv");
    ok(&[
        "features",
        "--manifest",
        s(&manifest),
        "--seg",
        s(&truth_dir.join("SYN001_seg.gpv1")),
        "--out",
        s(&feats),
    ]);
    let text = fs::read_to_string(&feats).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 142);
    assert!(lines.next().unwrap().starts_with("SYN001,"));

    let ppm = d.join("overlay.ppm");
    ok(&[
        "overlay",
        "--manifest",
        s(&manifest),
        "--seg",
        s(&truth_dir.join("SYN001_seg.gpv1")),
        "--slice",
        "2",
        "--out",
        s(&ppm),
    ]);
    assert!(fs::read(&ppm).unwrap().starts_with(b"P6\n16 16\n255\n"));
}

#[test]
fn missing_input_reports_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "postprocess",
        "--in",
        s(&dir.path().join("nope.gpv1")),
        "--out",
        s(&dir.path().join("x.gpv1")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.gpv1"));
}
