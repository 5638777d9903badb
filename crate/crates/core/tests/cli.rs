use std::path::Path;
use std::process::Command;

use modalbridge::cli;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("modalbridge").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_modalbridge");
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(bin)
        .args(["generate", "--modality", "hsi", "--samples", "2", "--out"])
        .arg(dir.path().join("d"))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));

    let usage = Command::new(bin).args(["inspect", "--no-such-flag"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&usage.stderr).contains("Usage"));

    let missing = Command::new(bin)
        .args(["eval", "--checkpoint"])
        .arg(dir.path().join("nope"))
        .arg("--data")
        .arg(dir.path().join("d"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2), "{}", String::from_utf8_lossy(&missing.stderr));
}

#[test]
fn contract_errors_exit_one() {
    let (code, _, err) = run(&["inspect"]);
    assert_eq!(code, 1);
    assert!(err.contains("--modality"));
    assert_eq!(run(&["inspect", "--modality", "sonar"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&["generate", "--modality", "rgb", "--samples", "0", "--out", s(dir.path())]);
    assert_eq!(code, 1);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn inspect_echoes_point_cloud_shapes() {
    let (code, out, _) = run(&["inspect", "--modality", "pointcloud", "--preset", "desk"]);
    assert_eq!(code, 0);
    assert!(out.contains("tokens     8 x 32"), "{out}");
    assert!(out.contains("bridged    8 x 64"), "{out}");
    let prompt_len = modalbridge::prompts::PromptRegistry::builtin().prompts(modalbridge::Modality::PointCloud)[0].len();
    assert!(out.contains(&format!("assembled  {} (boundary 8)", 8 + prompt_len)), "{out}");
}

#[test]
fn train_then_eval_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run_dir = dir.path().join("run");
    assert_eq!(run(&["generate", "--modality", "rgb", "--samples", "4", "--seed", "3", "--out", s(&data)]).0, 0);
    let (code, out, err) = run(&["train", "--modality", "rgb", "--data", s(&data), "--epochs", "2", "--out", s(&run_dir)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("trained rgb"));
    assert!(run_dir.join("loss.csv").exists());
    let ckpt = run_dir.join("checkpoint");
    assert!(ckpt.join("manifest.json").exists());

    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let eval_dir = dir.path().join(name);
        let (code, _, err) = run(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&eval_dir)]);
        assert_eq!(code, 0, "{err}");
        outputs.push((
            std::fs::read(eval_dir.join("metrics.json")).unwrap(),
            std::fs::read(eval_dir.join("metrics.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(csv.starts_with("modality,samples,metric,value\n"));
}

#[test]
fn gradcheck_trajectory_at_both_precisions() {
    for (precision, tol) in [("64", "1e-6"), ("32", "1e-4")] {
        let dir = tempfile::tempdir().unwrap();
        let (code, out, err) = run(&[
            "gradcheck",
            "--modality",
            "trajectory",
            "--samples",
            "100",
            "--precision",
            precision,
            "--out",
            s(dir.path()),
        ]);
        assert_eq!(code, 0, "{out}{err}");
        assert!(out.contains("PASS trajectory") && out.contains(&format!("tolerance {tol}")), "{out}");
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("gradcheck.json")).unwrap()).unwrap();
        assert_eq!(report["checked"], 100);
        assert_eq!(report["passed"], true);
    }
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"modality":"table","seed":4}"#).unwrap();
    let (code, out, _) = run(&["--config", s(&cfg), "inspect"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("modality   table"));
    std::fs::write(&cfg, "{").unwrap();
    assert_ne!(run(&["--config", s(&cfg), "inspect"]).0, 0);
}
