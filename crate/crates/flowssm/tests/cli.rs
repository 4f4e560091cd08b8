//! End-to-end exercises of the CLI surface: file formats, exit codes, and
//! the synth -> train -> diagnose -> detect -> eval -> plotdata pipeline on
//! a reduced-scale configuration.

use std::path::{Path, PathBuf};

use flowssm::cli::run;
use tempfile::TempDir;

fn args(parts: &[&str]) -> Vec<String> {
    let mut v = vec!["flowssm".to_string()];
    v.extend(parts.iter().map(|s| s.to_string()));
    v
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "format_version": 1,
  "seed": 11,
  "synth": {
    "dims": 2,
    "length": 320,
    "frequencies": [0.025, 0.04],
    "amplitudes": [2.0, 1.6],
    "phases": [0.0, 1.1],
    "noise_sigma": 0.1,
    "anomalies": [
      {"start": 200, "end": 240, "kind": "frequency", "factor": 1.5}
    ]
  },
  "train": {
    "context": 8,
    "layers": 2,
    "hidden_layers": 1,
    "hidden_size": 16,
    "learning_rate": 0.005,
    "epochs": 40,
    "regime": {"minibatch": {"batch_size": 78}},
    "scale_clamp": 2.0
  },
  "gof": {"alpha": 0.05},
  "detector": {"window": 16, "stride": 1}
}"#,
    )
    .unwrap();
    path
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path());
    let series = dir.path().join("series.csv");
    let ckpt = dir.path().join("ckpt.json");
    let loss = dir.path().join("loss.csv");
    let fit = dir.path().join("fit.json");
    let det = dir.path().join("det.csv");
    let latents = dir.path().join("latents.csv");
    let metrics = dir.path().join("metrics.csv");
    let heatmap = dir.path().join("heatmap.csv");
    let scatter = dir.path().join("scatter.csv");

    let code = run(args(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out",
        series.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&series).unwrap();
    assert!(text.starts_with("# flowssm-series format_version=1"));
    // header + 320 rows
    assert_eq!(text.lines().count(), 2 + 320);
    let labeled = text.lines().skip(2).filter(|l| l.ends_with(",1")).count();
    assert_eq!(labeled, 40, "exactly the injected interval is labeled");

    let code = run(args(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--loss-csv",
        loss.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    assert!(std::fs::read_to_string(&loss).unwrap().lines().count() > 40);

    let code = run(args(&[
        "diagnose",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--out",
        fit.to_str().unwrap(),
        "--window",
        "64",
        "--stride",
        "16",
    ]));
    assert_eq!(code, 0);
    let fit_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    assert!(fit_json["fit_fraction"].as_f64().is_some());

    let code = run(args(&[
        "detect",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--out",
        det.to_str().unwrap(),
        "--window",
        "16",
        "--latents",
        latents.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let det_text = std::fs::read_to_string(&det).unwrap();
    assert!(det_text.contains("# k=8 w=16 stride=1 alpha=0.05"));
    assert!(det_text.lines().nth(2).unwrap().starts_with("t,ks_score,ks_flag,nll_score,label"));

    let code = run(args(&[
        "eval",
        "--detections",
        det.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
        "--dataset",
        "demo",
    ]));
    assert_eq!(code, 0);
    let m = std::fs::read_to_string(&metrics).unwrap();
    assert!(m.lines().nth(1).unwrap().starts_with("dataset,score_source,window"));
    assert!(m.contains("demo,ks,16"));
    assert!(m.contains("demo,nll,16"));

    let code = run(args(&[
        "plotdata",
        "--detections",
        det.to_str().unwrap(),
        "--latents",
        latents.to_str().unwrap(),
        "--heatmap",
        heatmap.to_str().unwrap(),
        "--scatter",
        scatter.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let hm = std::fs::read_to_string(&heatmap).unwrap();
    assert!(hm.lines().nth(1).unwrap().starts_with("t,channel,value"));
    assert!(hm.contains(",ks_score,"));
    assert!(hm.contains(",label,"));
    let sc = std::fs::read_to_string(&scatter).unwrap();
    assert!(sc.contains("z0-z1,"));
}

#[test]
fn usage_error_exits_one() {
    assert_eq!(run(args(&["no-such-command"])), 1);
    assert_eq!(run(args(&["synth", "--config"])), 1);
    assert_eq!(run(args(&[])), 1);
}

#[test]
fn malformed_config_exits_two() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"format_version": 1, "seed": 1, "sinth": {}}"#).unwrap();
    let out = dir.path().join("out.csv");
    let code = run(args(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 2);
}

#[test]
fn missing_file_exits_two() {
    let code = run(args(&["detect", "--checkpoint", "/nonexistent/c.json", "--series", "/nonexistent/s.csv", "--out", "/tmp/d.csv"]));
    assert_eq!(code, 2);
}

#[test]
fn eval_with_perfect_scores_reports_ones() {
    // scores identical to labels: every AUC/VUS metric is 1.0
    let dir = TempDir::new().unwrap();
    let det = dir.path().join("det.csv");
    let mut text = String::from("# flowssm-detections format_version=1\n# k=2 w=4 alpha=0.05\n");
    text.push_str("t,ks_score,ks_flag,nll_score,label\n");
    for t in 0..40 {
        let label = u8::from((20..30).contains(&t));
        text.push_str(&format!("{t},{label},{label},{label},{label}\n"));
    }
    std::fs::write(&det, text).unwrap();
    let metrics = dir.path().join("metrics.csv");
    let code = run(args(&[
        "eval",
        "--detections",
        det.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
        "--max-buffer",
        "0",
    ]));
    assert_eq!(code, 0);
    let m = std::fs::read_to_string(&metrics).unwrap();
    for line in m.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        // auc_roc, auc_pr, vus_roc, vus_pr all exactly 1
        for idx in 4..8 {
            assert_eq!(fields[idx], "1", "line: {line}");
        }
    }
}

#[test]
fn detect_on_identity_checkpoint_is_calibrated_on_white_noise() {
    // an untrained (zero-epoch) model is the identity flow; white-noise
    // input is exactly the prescribed latent, so flags stay near alpha
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "format_version": 1,
  "seed": 3,
  "train": {
    "context": 4, "layers": 2, "hidden_layers": 1, "hidden_size": 8,
    "epochs": 0, "a_init": 0.0
  }
}"#,
    )
    .unwrap();
    // white-noise series: amplitudes ~ 0, noise_sigma 1
    let series_path = dir.path().join("noise.csv");
    {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut text = String::from("t,x0,x1\n");
        for t in 0..600 {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            text.push_str(&format!("{t},{a},{b}\n"));
        }
        std::fs::write(&series_path, text).unwrap();
    }
    let ckpt = dir.path().join("ckpt.json");
    let code = run(args(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series_path.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let det = dir.path().join("det.csv");
    let code = run(args(&[
        "detect",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--series",
        series_path.to_str().unwrap(),
        "--out",
        det.to_str().unwrap(),
        "--window",
        "64",
        "--stride",
        "8",
    ]));
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&det).unwrap();
    let total = text.lines().skip(3).count();
    let flagged = text
        .lines()
        .skip(3)
        .filter(|l| l.split(',').nth(2) == Some("1"))
        .count();
    let fraction = flagged as f64 / total as f64;
    assert!(fraction <= 0.10, "flagged fraction {fraction}");
}

#[test]
fn univariate_series_is_duplicated() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "format_version": 1,
  "seed": 3,
  "train": {"context": 4, "layers": 2, "hidden_layers": 1, "hidden_size": 8, "epochs": 1,
            "regime": "sequential"}
}"#,
    )
    .unwrap();
    let series_path = dir.path().join("uni.csv");
    let mut text = String::from("t,x0\n");
    for t in 0..100 {
        text.push_str(&format!("{t},{}\n", (t as f64 * 0.2).sin()));
    }
    std::fs::write(&series_path, text).unwrap();
    let ckpt = dir.path().join("ckpt.json");
    let code = run(args(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series_path.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let ckpt_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ckpt).unwrap()).unwrap();
    assert_eq!(ckpt_json["dims"], 2);
}

#[test]
fn synth_is_deterministic_under_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let code = run(args(&[
            "synth",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn grid_emits_ranked_summary() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("grid.json");
    std::fs::write(
        &config,
        r#"{
  "format_version": 1,
  "seed": 2,
  "synth": {
    "dims": 2, "length": 260,
    "frequencies": [0.025, 0.04],
    "amplitudes": [2.0, 1.6],
    "phases": [0.0, 1.1],
    "noise_sigma": 0.1
  },
  "train": {
    "context": 6, "layers": 2, "hidden_layers": 1, "hidden_size": 8,
    "learning_rate": 0.005, "epochs": 10,
    "regime": {"minibatch": {"batch_size": 127}}
  },
  "detector": {"fit_window": 64, "fit_stride": 64},
  "grid": {"hidden_size": [8, 16], "learn_b": [true, false]}
}"#,
    )
    .unwrap();
    let series = dir.path().join("series.csv");
    assert_eq!(
        run(args(&["synth", "--config", config.to_str().unwrap(), "--out", series.to_str().unwrap()])),
        0
    );
    let out = dir.path().join("summary.csv");
    let code = run(args(&[
        "grid",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    // 2 hidden sizes x 2 learn_b = 4 ranked rows
    assert_eq!(text.lines().count(), 2 + 4);
    assert!(text.lines().nth(1).unwrap().starts_with("rank,context,layers"));
}
