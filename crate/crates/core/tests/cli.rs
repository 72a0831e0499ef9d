//! Drives the command-line binary end to end on tiny instances.

use std::path::Path;
use std::process::Command;

fn run(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_branchlab"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("BRANCHLAB_CONFIG")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_solve_evaluate_report() {
    let dir = tempfile::tempdir().unwrap();
    let inst_dir = dir.path().join("inst");
    let listed = run(&inst_dir, &["generate", "--family", "mk", "--params", "10,2", "--instances", "3"]);
    assert_eq!(listed.lines().count(), 3);

    let first = inst_dir.join("mk-0.milp");
    let row: serde_json::Value =
        serde_json::from_str(run(dir.path(), &["solve", "--instance", first.to_str().unwrap(), "--policy", "random"]).trim())
            .unwrap();
    assert_eq!(row["status"], "optimal");

    let eval = dir.path().join("eval");
    run(
        &eval,
        &[
            "evaluate",
            "--instance-dir",
            inst_dir.to_str().unwrap(),
            "--policies",
            "random,sb",
            "--seeds",
            "2",
            "--reference",
            "sb",
            "--workers",
            "2",
        ],
    );
    let summary = std::fs::read_to_string(eval.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let again = dir.path().join("again");
    run(&again, &["report", "--runs", eval.join("runs.csv").to_str().unwrap(), "--reference", "sb"]);
    assert_eq!(std::fs::read_to_string(again.join("summary.csv")).unwrap(), summary);
    assert_eq!(
        std::fs::read(again.join("summary.json")).unwrap(),
        std::fs::read(eval.join("summary.json")).unwrap()
    );
}

#[test]
fn train_then_plan_sweep_and_align() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(
        &cfg,
        "family = ca\nfamily_params = 20,50\nhidden_dim = 8\nproj_dim = 4\nbatch_size = 2\ntraining_steps = 20\nwarmup_episodes = 2\n",
    )
    .unwrap();
    let train_dir = dir.path().join("train");
    run(&train_dir, &["--config", cfg.to_str().unwrap(), "train"]);
    let ckpt = train_dir.join("final.ckpt");
    assert!(ckpt.exists());
    let curve = std::fs::read_to_string(train_dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 21);

    let common = ["--family", "ca", "--params", "20,50", "--instances", "2", "--checkpoint", ckpt.to_str().unwrap()];
    let sweep_dir = dir.path().join("sweep");
    let mut args = vec!["sweep", "--budgets", "8,0,4"];
    args.extend(common);
    run(&sweep_dir, &args);
    let sweep = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    let budgets: Vec<&str> = sweep.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(budgets, ["0", "4", "8"]);

    let mut args = vec!["align", "--policy", "net"];
    args.extend(common);
    let out = run(&dir.path().join("align"), &args);
    assert!(out.starts_with("net: c-entropy"));
}

#[test]
fn timing_report_has_every_family() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["--limit-nodes", "60", "timing", "--instances", "1"]);
    let text = std::fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    let fams: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(fams, ["sc", "ca", "mis", "mk"]);
}

#[test]
fn bad_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "hiden_dim = 8\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_branchlab"))
        .args(["--config", cfg.to_str().unwrap(), "train"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden_dim"));
}
