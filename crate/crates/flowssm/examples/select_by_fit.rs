//! Model selection by training-compliance: train several seeds of the same
//! configuration and rank them with the FIT diagnostic plus the whole-series
//! MV-KS statistic, all computed on training data only. Models whose latent
//! trajectories comply with the prescribed dynamics are the ones whose
//! critical-value detector can be trusted.
//!
//! Usage: `cargo run --release --example select_by_fit [epochs] [seed...]`

use flowssm::detector::{detect, fit_diagnostic, latent_trajectory, nll_score};
use flowssm::dynamics::spectral_radius;
use flowssm::gof::{critical_value, mv_ks_statistic};
use flowssm::metrics::{vus, ScoredLabels, VusMetric};
use flowssm::synth::{generate_base, inject_anomaly, AnomalyKind, AnomalySpec, SignalSpec};
use flowssm::train::{train, Regime, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(150);
    let seeds: Vec<u64> = {
        let rest: Vec<u64> = args.filter_map(|s| s.parse().ok()).collect();
        if rest.is_empty() {
            vec![0, 1, 2, 3]
        } else {
            rest
        }
    };

    let spec = SignalSpec {
        dims: 4,
        length: 4000,
        frequencies: vec![1.0 / 50.0, 1.0 / 40.0, 1.0 / 25.0, 1.0 / 60.0],
        amplitudes: vec![2.0, 1.6, 2.4, 1.8],
        phases: vec![0.0, 0.7, 1.9, 3.1],
        noise_sigma: 0.1,
        seed: 42,
    };
    let train_series = generate_base(&spec).unwrap();
    let mut test_spec = spec.clone();
    test_spec.length = 1000;
    test_spec.seed = 43;
    let mut test_series = generate_base(&test_spec).unwrap();
    let anomalies = [
        AnomalySpec { start: 160, end: 240, kind: AnomalyKind::Frequency, factor: 1.5 },
        AnomalySpec { start: 440, end: 520, kind: AnomalyKind::Amplitude, factor: 1.07 },
        AnomalySpec { start: 760, end: 840, kind: AnomalyKind::Amplitude, factor: 0.5 },
    ];
    for anomaly in &anomalies {
        test_series = inject_anomaly(&test_series, &test_spec, anomaly).unwrap();
    }
    let labels: Vec<bool> = test_series.labels().unwrap().to_vec();

    let k = 20;
    let tau_full = critical_value(train_series.len() - k, 4, 0.05).unwrap();
    println!("whole-series tau = {tau_full:.4}; training {} seeds at {epochs} epochs", seeds.len());

    for seed in seeds {
        let config = TrainConfig {
            context: k,
            layers: 4,
            hidden_layers: 1,
            hidden_size: 16,
            learning_rate: 0.005,
            epochs,
            regime: Regime::Minibatch { batch_size: 256 },
            learn_b: true,
            scale_clamp: 2.0,
            a_init: 0.9,
            seed,
            ..TrainConfig::default()
        };
        let t0 = std::time::Instant::now();
        let outcome = match train(&config, &train_series) {
            Ok(o) => o,
            Err(e) => {
                println!("seed {seed}: training failed: {e}");
                continue;
            }
        };
        let secs = t0.elapsed().as_secs_f64();
        let model = &outcome.model;
        let rho = spectral_radius(model.ldm.a(), 4).unwrap();

        // compliance on training data only
        let fit = fit_diagnostic(model, &train_series, k, 400, 32, 0.05, 0.05).unwrap();
        let traj = latent_trajectory(model, &train_series, k).unwrap();
        let s_full = mv_ks_statistic(&traj.whitened).unwrap();
        let dim_stds: Vec<f64> = (0..4)
            .map(|d| {
                let m: f64 =
                    traj.whitened.iter().map(|r| r[d]).sum::<f64>() / traj.whitened.len() as f64;
                (traj.whitened.iter().map(|r| (r[d] - m).powi(2)).sum::<f64>()
                    / traj.whitened.len() as f64)
                    .sqrt()
            })
            .collect();

        // detection behavior on the contaminated series
        let train_nll = nll_score(model, &train_series, k).unwrap();
        let threshold = train_nll[k..].iter().cloned().fold(f64::MIN, f64::max);
        let test_nll = nll_score(model, &test_series, k).unwrap();
        let nll_hits: Vec<bool> = anomalies
            .iter()
            .map(|a| test_nll[a.start..a.end].iter().any(|&v| v >= threshold))
            .collect();
        let (det, _) = detect(model, &test_series, k, 64, 1, 0.05).unwrap();
        let ks_hits: Vec<bool> = anomalies
            .iter()
            .map(|a| det.ks_flag[a.start..a.end].iter().any(|&f| f))
            .collect();
        let ks_sl = ScoredLabels::new(det.ks_score.clone(), labels.clone(), k).unwrap();
        let nll_sl = ScoredLabels::new(test_nll.clone(), labels.clone(), k).unwrap();
        let vus_ks = vus(&ks_sl, VusMetric::Pr, 32).unwrap();
        let vus_nll = vus(&nll_sl, VusMetric::Pr, 32).unwrap();
        let (det200, _) = detect(model, &test_series, k, 200, 1, 0.05).unwrap();
        let sl200 = ScoredLabels::new(det200.ks_score.clone(), labels.clone(), k).unwrap();
        let vus200 = vus(&sl200, VusMetric::Pr, 32).unwrap();

        println!(
            "seed {seed}: loss {:.4} rho {rho:.3} | FIT {:.2} s_full {s_full:.4} ({}) stds {:?} | \
             NLL hits {:?} KS hits {:?} | VUS ks/nll/w200 {vus_ks:.3}/{vus_nll:.3}/{vus200:.3} | {secs:.0}s",
            outcome.final_loss,
            fit.fit_fraction,
            if s_full < tau_full { "compliant" } else { "NOT compliant" },
            dim_stds.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
            nll_hits,
            ks_hits,
        );
    }
}
