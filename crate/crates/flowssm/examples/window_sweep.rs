//! The window-size study: score the contaminated test series with several
//! MV-KS window sizes and report AUC/VUS metrics per window, plus the NLL
//! baseline row. Small windows are noisy, large windows dilute; the
//! recommended D^3 scaling sits at the sweet spot.
//!
//! Usage: `cargo run --release --example window_sweep`

use flowssm::detector::{detect, nll_score, recommended_window};
use flowssm::metrics::{auc_pr, auc_roc, vus, ScoredLabels, VusMetric};
use flowssm::synth::{generate_base, inject_anomaly, AnomalyKind, AnomalySpec, SignalSpec};
use flowssm::train::{train, Regime, TrainConfig};

fn main() {
    let mut spec = SignalSpec::desk_scale(42);
    spec.length = 4000;
    let train_series = generate_base(&spec).unwrap();
    let config = TrainConfig {
        context: 20,
        layers: 4,
        hidden_layers: 1,
        hidden_size: 16,
        learning_rate: 0.005,
        epochs: 150,
        regime: Regime::Minibatch { batch_size: 256 },
        scale_clamp: 2.0,
        seed: 0,
        ..TrainConfig::default()
    };
    println!("training ...");
    let outcome = train(&config, &train_series).unwrap();

    let mut test_spec = SignalSpec::desk_scale(43);
    test_spec.length = 1000;
    let mut test_series = generate_base(&test_spec).unwrap();
    for a in [
        AnomalySpec { start: 160, end: 240, kind: AnomalyKind::Frequency, factor: 1.5 },
        AnomalySpec { start: 440, end: 520, kind: AnomalyKind::Amplitude, factor: 1.07 },
        AnomalySpec { start: 760, end: 840, kind: AnomalyKind::Amplitude, factor: 0.5 },
    ] {
        test_series = inject_anomaly(&test_series, &test_spec, &a).unwrap();
    }
    let k = config.context;
    let labels: Vec<bool> = test_series.labels().unwrap().to_vec();
    let buffer = 32;

    println!(
        "recommended window for D=4: {}",
        recommended_window(test_series.dims(), 10_000)
    );
    println!("\n{:<12}{:>10}{:>10}{:>10}{:>10}", "score", "AUC-PR", "AUC-ROC", "VUS-PR", "VUS-ROC");
    let nll = nll_score(&outcome.model, &test_series, k).unwrap();
    let sl = ScoredLabels::new(nll, labels.clone(), k).unwrap();
    println!(
        "{:<12}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
        "NLL",
        auc_pr(&sl).unwrap(),
        auc_roc(&sl).unwrap(),
        vus(&sl, VusMetric::Pr, buffer).unwrap(),
        vus(&sl, VusMetric::Roc, buffer).unwrap()
    );
    for w in [20usize, 32, 64, 100, 200, 400] {
        let (result, _) = detect(&outcome.model, &test_series, k, w, 1, 0.05).unwrap();
        let sl = ScoredLabels::new(result.ks_score.clone(), labels.clone(), k).unwrap();
        println!(
            "{:<12}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
            format!("KS w={w}"),
            auc_pr(&sl).unwrap(),
            auc_roc(&sl).unwrap(),
            vus(&sl, VusMetric::Pr, buffer).unwrap(),
            vus(&sl, VusMetric::Roc, buffer).unwrap()
        );
    }
}
