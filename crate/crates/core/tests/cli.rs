use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"{
  "seed": 3,
  "data": {
    "domains": [
      {"name": "a", "artifact": "color_shift", "strength": 0.2, "n_real": 24, "n_fake": 24, "seed": 1},
      {"name": "b", "artifact": "boundary_seam", "strength": 0.2, "n_real": 24, "n_fake": 24, "seed": 2},
      {"name": "c", "artifact": "lowpass_patch", "strength": 0.5, "n_real": 24, "n_fake": 24, "seed": 4}
    ],
    "split": {"test_fraction": 0.25, "seed": 0}
  },
  "pretrain": {"sgd": {"lr": 0.01, "step_size": 6, "descending_rate": 0.5, "batch_size": 8, "epochs": 2}},
  "probe": {"sgd": {"lr": 0.03, "step_size": 400, "descending_rate": 0.8, "batch_size": 16, "epochs": 20}}
}"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(ws.config(), TINY).unwrap();
        ws
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("tiny.json")
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("run")
    }

    fn ucl(&self, args: &[&str]) -> Output {
        let config = self.config();
        let out = self.out();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ucl"));
        cmd.args(args);
        if args.first() != Some(&"roc") {
            cmd.arg("--config").arg(&config).arg("--out").arg(&out);
        }
        cmd.output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.ucl(args);
        assert!(
            o.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }

    /// gen-data, pretrain and probe.
    fn trained() -> Self {
        let ws = Self::new();
        ws.ok(&["gen-data"]);
        ws.ok(&["pretrain"]);
        ws.ok(&["probe"]);
        ws
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_refuses_to_overwrite() {
    let ws = Workspace::new();
    ws.ok(&["gen-data"]);
    let again = ws.ucl(&["gen-data"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--force"));
    ws.ok(&["gen-data", "--force"]);
}

#[test]
fn same_config_and_seed_give_identical_checkpoints() {
    let ws = Workspace::trained();
    let first = fs::read(ws.out().join("pretrain/encoder.ckpt")).unwrap();
    let probe = fs::read(ws.out().join("probe/probe.ckpt")).unwrap();
    ws.ok(&["pretrain", "--force"]);
    ws.ok(&["probe", "--force"]);
    assert_eq!(
        first,
        fs::read(ws.out().join("pretrain/encoder.ckpt")).unwrap()
    );
    assert_eq!(probe, fs::read(ws.out().join("probe/probe.ckpt")).unwrap());
    // without --force the existing checkpoint is kept
    assert_eq!(ws.ucl(&["pretrain"]).status.code(), Some(1));
}

#[test]
fn invalid_temperature_fails_before_any_work() {
    let ws = Workspace::new();
    let bad = TINY.replace("\"pretrain\": {", "\"pretrain\": {\"tau\": 0.0, ");
    fs::write(ws.config(), bad).unwrap();
    let o = ws.ucl(&["gen-data"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pretrain.tau"), "{}", stderr(&o));
    assert!(!ws.out().exists());
}

#[test]
fn unknown_key_is_named() {
    let ws = Workspace::new();
    fs::write(ws.config(), TINY.replace("\"lr\": 0.01", "\"lrr\": 0.01")).unwrap();
    let o = ws.ucl(&["pretrain"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pretrain.sgd.lrr"), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_names_the_path() {
    let ws = Workspace::new();
    ws.ok(&["gen-data"]);
    let o = ws.ucl(&["probe", "--encoder", "nowhere/encoder.ckpt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("nowhere/encoder.ckpt"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn eval_reports_every_domain_and_roc_spans_the_square() {
    let ws = Workspace::trained();
    let stdout = ws.ok(&["eval"]);
    let eval = ws.out().join("eval");
    assert!(json(&ws.out().join("config.json")).is_object());
    for d in ["a", "b", "c"] {
        let report = json(&eval.join(format!("{d}.json")));
        assert_eq!(report["train_domain"], "a");
        assert_eq!(report["test_domain"], d);
        assert!(report["config_hash"].as_str().unwrap().len() == 16);
        let auc = report["auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert!(stdout
            .lines()
            .any(|l| l.split_whitespace().nth(1) == Some(d)));

        let csv = fs::read_to_string(eval.join(format!("{d}_roc.csv"))).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "threshold,fpr,tpr");
        assert!(rows[1].ends_with(",0,0"), "{}", rows[1]);
        assert!(
            rows[rows.len() - 1].ends_with(",1,1"),
            "{}",
            rows[rows.len() - 1]
        );
    }
    assert!(fs::read_to_string(eval.join("roc.svg"))
        .unwrap()
        .starts_with("<svg"));

    let svg = ws.dir.path().join("all.svg");
    let out = ws.out();
    ws.ok(&[
        "roc",
        "--out",
        out.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read_to_string(svg)
            .unwrap()
            .matches("<polyline")
            .count(),
        3
    );
}

#[test]
fn probe_from_a_different_encoder_is_rejected() {
    let ws = Workspace::trained();
    let other = ws.dir.path().join("other.ckpt");
    fs::copy(ws.out().join("pretrain/encoder.ckpt"), &other).unwrap();
    ws.ok(&["pretrain", "--force", "--seed", "9"]);
    let o = ws.ucl(&["eval"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("encoder"), "{}", stderr(&o));
    ws.ok(&["eval", "--encoder", other.to_str().unwrap()]);
}

#[test]
fn ablation_grids() {
    let ws = Workspace::new();
    ws.ok(&["gen-data"]);
    let text = ws.ok(&["ablate", "--grid", "augmentation-rows", "--seeds", "3"]);
    let csv = fs::read_to_string(ws.out().join("ablate/augmentation-rows.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "label,seed,a,b,c");
    assert_eq!(rows.len(), 4);
    for (row, label) in rows[1..]
        .iter()
        .zip(["crop", "crop+flip", "crop+flip+jitter+grayscale"])
    {
        assert!(row.starts_with(&format!("{label},3,")), "{row}");
    }
    assert!(text.contains("crop+flip+jitter+grayscale"));

    ws.ok(&["ablate", "--grid", "feature-source", "--seeds", "3"]);
    let csv = fs::read_to_string(ws.out().join("ablate/feature-source.csv")).unwrap();
    let labels: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(labels, ["encoder", "projection_head"]);

    let o = ws.ucl(&["ablate", "--grid", "feature-source", "--cells", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn single_cell_grid_matches_eval() {
    let ws = Workspace::trained();
    ws.ok(&["eval"]);
    ws.ok(&[
        "ablate",
        "--grid",
        "feature-source",
        "--cells",
        "encoder",
        "--seeds",
        "3",
    ]);
    for d in ["a", "b", "c"] {
        let eval = json(&ws.out().join(format!("eval/{d}.json")));
        let cell = json(
            &ws.out()
                .join(format!("ablate/feature-source/encoder/seed3/{d}.json")),
        );
        assert_eq!(eval["auc"], cell["auc"], "{d}");
        assert_eq!(eval["accuracy"], cell["accuracy"], "{d}");
        assert_eq!(
            fs::read_to_string(ws.out().join(format!("eval/{d}_roc.csv"))).unwrap(),
            fs::read_to_string(
                ws.out()
                    .join(format!("ablate/feature-source/encoder/seed3/{d}_roc.csv"))
            )
            .unwrap()
        );
    }
}

#[test]
fn presets_resolve() {
    let o = Command::new(env!("CARGO_BIN_EXE_ucl"))
        .args(["show-config", "--preset", "paper"])
        .output()
        .unwrap();
    let config: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(config["pretrain"]["sgd"]["lr"], 5e-4);
    assert_eq!(config["probe"]["sgd"]["batch_size"], 6000);
    let o = Command::new(env!("CARGO_BIN_EXE_ucl"))
        .args(["show-config", "--preset", "nope"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
