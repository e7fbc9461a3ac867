use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fol_core::io::{load_json, FolCheckpoint};
use fol_core::neural::Params;
use tempfile::TempDir;

fn fol() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fol"))
}

fn run(args: &[&str]) -> Output {
    fol().args(args).output().expect("running fol")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "fol {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, n_samples: usize, epochs: usize) -> PathBuf {
    let cfg = serde_json::json!({
        "version": 1,
        "mesh": {"grid": {"n": 5, "side": 1.0}},
        "bcs": [
            {"set": "left", "component": 0, "value": 0.0},
            {"set": "left", "component": 1, "value": 0.0},
            {"set": "right", "component": 0, "value": 0.05},
            {"set": "right", "component": 1, "value": 0.05}
        ],
        "sampling": {"kind": "two_phase", "n_samples": n_samples},
        "fol": {
            "mode": "soft_bc", "architecture": "subnet_bank", "encoding": "nodal_e",
            "hidden": [4], "activation": "swish", "batch_size": 2, "epochs": epochs,
            "learning_rate": 1e-3, "a_b": 10.0, "nu": 0.3, "seed": 0
        },
        "deeponet": {
            "hidden": [8, 8], "p": 3, "activation": "swish", "batch_size": 2,
            "epochs": epochs, "learning_rate": 1e-3, "seed": 0
        },
        "seed": 7,
        "out": "run"
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_rejects_zero_samples() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), 0, 1);
    let out = run(&["generate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("n_samples"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), 4, 3);
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let o = dir.path().join(tag);
        ok(&["generate", "--config", s(&cfg), "--out", s(&o)]);
        ok(&["solve", "--config", s(&cfg), "--out", s(&o)]);
        ok(&["train-fol", "--config", s(&cfg), "--out", s(&o)]);
        ok(&["train-deeponet", "--config", s(&cfg), "--out", s(&o)]);
        outputs.push(o);
    }
    let mut names: Vec<String> = fs::read_dir(outputs[0].join("solutions"))
        .unwrap()
        .map(|e| format!("solutions/{}", e.unwrap().file_name().to_str().unwrap()))
        .collect();
    assert_eq!(names.len(), 8);
    names.extend(
        [
            "samples.csv",
            "solve_summary.csv",
            "fol_checkpoint.json",
            "fol_history.csv",
            "deeponet_checkpoint.json",
            "deeponet_history.csv",
        ]
        .map(String::from),
    );
    for name in &names {
        let a = fs::read(outputs[0].join(name)).unwrap();
        let b = fs::read(outputs[1].join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn seed_override_changes_samples() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), 3, 1);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["generate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["generate", "--config", s(&cfg), "--out", s(&b), "--seed", "8"]);
    assert_ne!(fs::read(a.join("samples.csv")).unwrap(), fs::read(b.join("samples.csv")).unwrap());
}

#[test]
fn missing_samples_file_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), 3, 1);
    let out = run(&["solve", "--config", s(&cfg), "--out", s(&dir.path().join("nothing"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("samples"), "{err}");
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = TempDir::new().unwrap();
    let full_cfg = write_config(dir.path(), 4, 6);
    let full = dir.path().join("full");
    ok(&["generate", "--config", s(&full_cfg), "--out", s(&full)]);
    ok(&["train-fol", "--config", s(&full_cfg), "--out", s(&full)]);

    let half_dir = dir.path().join("half_cfg");
    fs::create_dir(&half_dir).unwrap();
    let half_cfg = write_config(&half_dir, 4, 3);
    let split = dir.path().join("split");
    let samples = full.join("samples.csv");
    ok(&["train-fol", "--config", s(&half_cfg), "--out", s(&split), "--samples", s(&samples)]);
    let ckpt = split.join("fol_checkpoint.json");
    ok(&["train-fol", "--config", s(&full_cfg), "--out", s(&split), "--samples", s(&samples), "--resume", s(&ckpt)]);

    assert_eq!(
        fs::read(full.join("fol_checkpoint.json")).unwrap(),
        fs::read(split.join("fol_checkpoint.json")).unwrap()
    );
    assert_eq!(fs::read(full.join("fol_history.csv")).unwrap(), fs::read(split.join("fol_history.csv")).unwrap());
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), 2, 0);
    let o = dir.path().join("o");
    ok(&["generate", "--config", s(&cfg), "--out", s(&o)]);
    ok(&["train-fol", "--config", s(&cfg), "--out", s(&o)]);
    let ckpt: FolCheckpoint = load_json(&o.join("fol_checkpoint.json")).unwrap();
    assert_eq!(ckpt.epochs_done, 0);
    assert!(ckpt.history.is_empty());
    let trainer = ckpt.to_trainer().unwrap();
    assert!(trainer.adam.m.iter().all(|&x| x == 0.0));
    let run_cfg = fol_cli::RunConfig::load(&cfg).unwrap();
    let mesh = run_cfg.build_mesh().unwrap();
    let dofs = run_cfg.build_dofs(&mesh).unwrap();
    let problem = fol_core::fol::FolProblem::new(mesh, dofs, 0.3).unwrap();
    let fresh = fol_core::fol::FolModel::init(run_cfg.fol.as_ref().unwrap(), &problem, None).unwrap();
    assert_eq!(trainer.model.network.flatten(), fresh.network.flatten());
}

#[test]
fn evaluate_rejects_unknown_checkpoint() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), 2, 1);
    let o = dir.path().join("o");
    ok(&["generate", "--config", s(&cfg), "--out", s(&o)]);
    let bogus = dir.path().join("bogus.json");
    fs::write(&bogus, r#"{"version": 1, "model": "transformer"}"#).unwrap();
    let out = run(&["evaluate", "--config", s(&cfg), "--out", s(&o), "--checkpoint", s(&bogus), "--inputs", s(&o.join("samples.csv"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.trim_end().lines().count() == 1, "{err}");
}

#[test]
fn evaluate_writes_error_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), 2, 2);
    let o = dir.path().join("o");
    ok(&["generate", "--config", s(&cfg), "--out", s(&o)]);
    ok(&["train-deeponet", "--config", s(&cfg), "--out", s(&o)]);
    let samples = o.join("samples.csv");
    ok(&["evaluate", "--config", s(&cfg), "--out", s(&o), "--checkpoint", s(&o.join("deeponet_checkpoint.json")), "--inputs", s(&samples)]);
    let table = fs::read_to_string(o.join("evaluation_errors.csv")).unwrap();
    assert!(table.lines().count() > 1);
    assert!(fs::read_dir(&o).unwrap().count() > 4);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = fol_cli::RunConfig::load(&path).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let mesh = cfg.build_mesh().unwrap();
            cfg.build_dofs(&mesh).unwrap();
            n += 1;
        }
    }
    assert!(n >= 3);
}
