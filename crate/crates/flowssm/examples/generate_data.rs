//! Generate a labeled synthetic series: four noisy sinusoids with a
//! frequency anomaly and two amplitude anomalies blended in, then print a
//! short summary and write the CSV the CLI subcommands consume.
//!
//! Usage: `cargo run --release --example generate_data [out.csv]`

use flowssm::cli::formats::write_series;
use flowssm::synth::{generate_base, inject_anomaly, AnomalyKind, AnomalySpec, SignalSpec};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "series.csv".into());
    let spec = SignalSpec::desk_scale(42);
    let mut series = generate_base(&spec).unwrap();
    let anomalies = [
        AnomalySpec { start: 160, end: 240, kind: AnomalyKind::Frequency, factor: 1.5 },
        AnomalySpec { start: 440, end: 520, kind: AnomalyKind::Amplitude, factor: 1.07 },
        AnomalySpec { start: 760, end: 840, kind: AnomalyKind::Amplitude, factor: 0.5 },
    ];
    for anomaly in &anomalies {
        series = inject_anomaly(&series, &spec, anomaly).unwrap();
    }

    println!("series: {} timesteps x {} dims", series.len(), series.dims());
    for (i, a) in anomalies.iter().enumerate() {
        println!("anomaly {i}: {:?} x{} over [{}, {})", a.kind, a.factor, a.start, a.end);
    }
    let labeled = series.labels().unwrap().iter().filter(|&&l| l).count();
    println!("labeled anomalous timesteps: {labeled}");

    // quick per-dimension summary of the clean vs anomalous ranges
    for d in 0..series.dims() {
        let values: Vec<f64> = series.rows().iter().map(|r| r[d]).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let rms =
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64)
                .sqrt();
        println!("x{d}: mean {mean:+.3}, rms {rms:.3}");
    }

    write_series(std::path::Path::new(&out), &series).unwrap();
    println!("wrote {out}");
}
