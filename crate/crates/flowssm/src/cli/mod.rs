//! Command-line front-end: generate -> train -> diagnose -> detect -> eval
//! -> plot-data export. Owns every on-disk format (see [`formats`]).
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure. Errors go to standard error.

pub mod config;
pub mod formats;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::detector::{self, recommended_window};
use crate::error::{Error, Result};
use crate::gof::GofConfig;
use crate::metrics::{self, ScoredLabels, ThresholdPolicy};
use crate::series::TimeSeries;
use crate::synth;
use crate::train::{self, Checkpoint, Model};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "flowssm",
    about = "Conditional-flow state-space models for unsupervised time-series anomaly detection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled series from a config
    Synth(SynthArgs),
    /// Train a model on a series file
    Train(TrainArgs),
    /// Run the FIT compliance diagnostic of a checkpoint on its training data
    Diagnose(DiagnoseArgs),
    /// Score a series with a trained checkpoint
    Detect(DetectArgs),
    /// Compute metrics from a labeled detections file
    Eval(EvalArgs),
    /// Train every combination of the config's hyperparameter grid
    Grid(GridArgs),
    /// Re-shape detections/latents into plot-ready long CSV files
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// RunConfig JSON with a `synth` section
    #[arg(long)]
    config: PathBuf,
    /// output series CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// RunConfig JSON with a `train` section
    #[arg(long)]
    config: PathBuf,
    /// training series CSV
    #[arg(long)]
    series: PathBuf,
    /// output checkpoint JSON
    #[arg(long)]
    checkpoint: PathBuf,
    /// optional per-epoch loss CSV
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// the series the model was trained on
    #[arg(long)]
    series: PathBuf,
    /// output FIT report JSON
    #[arg(long)]
    out: PathBuf,
    /// FIT window (default: recommended for the data dimension, at least 128)
    #[arg(long)]
    window: Option<usize>,
    /// FIT stride (default: non-overlapping)
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    series: PathBuf,
    /// output detections CSV
    #[arg(long)]
    out: PathBuf,
    /// scoring window (default: recommended_window(D))
    #[arg(long)]
    window: Option<usize>,
    /// scoring stride (default 1)
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// optional whitened-latent export CSV
    #[arg(long)]
    latents: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// detections CSV with a label column
    #[arg(long)]
    detections: PathBuf,
    /// output metrics CSV
    #[arg(long)]
    out: PathBuf,
    /// dataset name for the output key
    #[arg(long, default_value = "series")]
    dataset: String,
    /// VUS buffer range (default: window/2 from the detections metadata,
    /// or 4 when absent)
    #[arg(long)]
    max_buffer: Option<usize>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// RunConfig JSON with `train` and `grid` sections
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    series: PathBuf,
    /// ranked summary CSV
    #[arg(long)]
    out: PathBuf,
    /// directory for per-combination checkpoints (optional)
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotdataArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    latents: Option<PathBuf>,
    /// long-format (t, channel, value) CSV
    #[arg(long)]
    heatmap: PathBuf,
    /// latent 2-D projection CSV (needs --latents)
    #[arg(long)]
    scatter: Option<PathBuf>,
}

/// Entry point shared by the binary and the integration tests. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are successes, anything else is usage
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Numeric(_) => 3,
                _ => 2,
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Plotdata(args) => cmd_plotdata(args),
    }
}

/// Univariate series are duplicated onto two identical channels so the
/// coupling masks are well-defined; the detector then works on the 2-D
/// latent.
fn widen_univariate(series: TimeSeries) -> Result<TimeSeries> {
    if series.dims() > 1 {
        return Ok(series);
    }
    let values = series
        .rows()
        .iter()
        .map(|row| vec![row[0], row[0]])
        .collect();
    TimeSeries::new(values, series.labels().map(<[bool]>::to_vec))
}

fn load_checkpoint(path: &std::path::Path) -> Result<(Model, train::TrainConfig)> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_model()
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = RunConfig::from_path(&args.config)?;
    let (spec, anomalies) = config.signal_spec()?;
    let mut series = synth::generate_base(&spec)?;
    for anomaly in &anomalies {
        series = synth::inject_anomaly(&series, &spec, anomaly)?;
    }
    formats::write_series(&args.out, &series)?;
    println!(
        "wrote {} ({} x {}, {} anomalous timesteps)",
        args.out.display(),
        series.len(),
        series.dims(),
        series.labels().map(|l| l.iter().filter(|&&x| x).count()).unwrap_or(0)
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = RunConfig::from_path(&args.config)?;
    let train_config = config.train_config()?;
    let series = widen_univariate(formats::read_series(&args.series)?)?;
    train_config.validate(series.len())?;
    let outcome = train::train(&train_config, &series)?;
    let ckpt = Checkpoint::from_model(
        &outcome.model,
        &train_config,
        outcome.final_loss,
        outcome.loss_history.clone(),
        outcome.carried_mu.clone(),
    );
    std::fs::write(&args.checkpoint, serde_json::to_string_pretty(&ckpt)?)?;
    if let Some(loss_path) = args.loss_csv {
        formats::write_loss_history(&loss_path, &outcome.loss_history)?;
    }
    println!(
        "trained {} epochs: final loss {:.6}, rho(A) {:.4} -> {}",
        outcome.loss_history.len(),
        outcome.final_loss,
        ckpt.spectral_radius,
        args.checkpoint.display()
    );
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let (model, train_config) = load_checkpoint(&args.checkpoint)?;
    let series = widen_univariate(formats::read_series(&args.series)?)?;
    let dims = series.dims();
    let w = args.window.unwrap_or_else(|| recommended_window(dims, 10_000).max(128));
    let stride = args.stride.unwrap_or(w);
    let alpha = args.alpha.unwrap_or(GofConfig::default().alpha);
    let margin = args.margin.unwrap_or(0.05);
    let report =
        detector::fit_diagnostic(&model, &series, train_config.context, w, stride, alpha, margin)?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "FIT {}/{} windows compliant ({:.3}); verdict: {}",
        report.n_compliant,
        report.n_windows,
        report.fit_fraction,
        if report.trustworthy { "trustworthy" } else { "not trustworthy" }
    );
    Ok(())
}

fn cmd_detect(args: DetectArgs) -> Result<()> {
    let (model, train_config) = load_checkpoint(&args.checkpoint)?;
    let series = widen_univariate(formats::read_series(&args.series)?)?;
    let dims = series.dims();
    let w = args.window.unwrap_or_else(|| recommended_window(dims, 10_000));
    let stride = args.stride.unwrap_or(1);
    let alpha = args.alpha.unwrap_or(GofConfig::default().alpha);
    let (result, traj) = detector::detect(&model, &series, train_config.context, w, stride, alpha)?;
    formats::write_detections(&args.out, &result, series.labels())?;
    if let Some(latent_path) = args.latents {
        formats::write_latents(&latent_path, &traj.whitened, train_config.context)?;
    }
    let flagged = result.windows.iter().filter(|win| win.flag).count();
    println!(
        "scored {} windows (w={w}, stride={stride}): {flagged} flagged -> {}",
        result.windows.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let det = formats::read_detections(&args.detections)?;
    let labels = det
        .labels
        .clone()
        .ok_or_else(|| Error::invalid("eval needs a detections file with a label column"))?;
    let max_buffer = args
        .max_buffer
        .unwrap_or(if det.window > 0 { det.window / 2 } else { 4 });
    let mut rows = Vec::new();
    let tau = crate::gof::critical_value(det.window.max(1), 1, det.alpha).ok();
    for (source, scores, threshold) in [
        ("ks", &det.ks_score, tau.map(ThresholdPolicy::Given)),
        ("nll", &det.nll_score, None),
    ] {
        let sl = ScoredLabels::new(scores.clone(), labels.clone(), det.context)?;
        let policy = threshold.unwrap_or(ThresholdPolicy::BestF1Sweep);
        let report = metrics::report(&sl, max_buffer, policy)?;
        rows.push((args.dataset.clone(), source.to_string(), det.window, report));
    }
    formats::write_metric_rows(&args.out, &rows)?;
    for (_, source, _, report) in &rows {
        println!(
            "{source}: auc_pr {:.4} auc_roc {:.4} vus_pr {:.4} vus_roc {:.4} f1 {:.4} f1_pa {:.4}",
            report.auc_pr,
            report.auc_roc,
            report.vus_pr,
            report.vus_roc,
            report.f1_standard,
            report.f1_point_adjusted
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<()> {
    let config = RunConfig::from_path(&args.config)?;
    let combos = config.grid_configs()?;
    let series = widen_univariate(formats::read_series(&args.series)?)?;
    let detector_cfg = config.detector();
    let alpha = config.alpha()?;
    let mut rows = Vec::new();
    for (idx, combo) in combos.iter().enumerate() {
        combo.validate(series.len())?;
        let outcome = train::train(combo, &series)?;
        let dims = series.dims();
        let fit_w = if detector_cfg.fit_window > 0 {
            detector_cfg.fit_window
        } else {
            recommended_window(dims, 10_000).max(128)
        };
        let fit_stride = if detector_cfg.fit_stride > 0 { detector_cfg.fit_stride } else { fit_w };
        let report = detector::fit_diagnostic(
            &outcome.model,
            &series,
            combo.context,
            fit_w,
            fit_stride,
            alpha,
            detector_cfg.margin,
        )?;
        let rho = crate::dynamics::spectral_radius(outcome.model.ldm.a(), dims)?;
        if let Some(dir) = &args.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            let ckpt = Checkpoint::from_model(
                &outcome.model,
                combo,
                outcome.final_loss,
                outcome.loss_history.clone(),
                outcome.carried_mu.clone(),
            );
            std::fs::write(
                dir.join(format!("grid_{idx:03}.json")),
                serde_json::to_string(&ckpt)?,
            )?;
        }
        println!(
            "[{}/{}] k={} L={} hidden={}x{} learn_b={} {:?}: loss {:.4}, FIT {:.3}",
            idx + 1,
            combos.len(),
            combo.context,
            combo.layers,
            combo.hidden_layers,
            combo.hidden_size,
            combo.learn_b,
            combo.regime,
            outcome.final_loss,
            report.fit_fraction
        );
        rows.push((combo.clone(), outcome.final_loss, report, rho));
    }
    // rank: compliant models first (by FIT), then by loss
    rows.sort_by(|a, b| {
        b.2.fit_fraction
            .partial_cmp(&a.2.fit_fraction)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    let mut out = String::from("# flowssm-grid format_version=1\n");
    out.push_str(
        "rank,context,layers,hidden_layers,hidden_size,learn_b,regime,final_loss,fit_fraction,trustworthy,spectral_radius\n",
    );
    for (rank, (combo, loss, report, rho)) in rows.iter().enumerate() {
        let regime = match combo.regime {
            train::Regime::Sequential => "sequential".to_string(),
            train::Regime::Minibatch { batch_size } => batch_size.to_string(),
        };
        out.push_str(&format!(
            "{rank},{},{},{},{},{},{regime},{loss},{},{},{rho}\n",
            combo.context,
            combo.layers,
            combo.hidden_layers,
            combo.hidden_size,
            combo.learn_b,
            report.fit_fraction,
            report.trustworthy
        ));
    }
    std::fs::write(&args.out, out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_plotdata(args: PlotdataArgs) -> Result<()> {
    let det = formats::read_detections(&args.detections)?;
    formats::write_heatmap(&args.heatmap, &det)?;
    println!("wrote {}", args.heatmap.display());
    if let Some(scatter) = args.scatter {
        let latents_path = args
            .latents
            .ok_or_else(|| Error::invalid("--scatter needs --latents"))?;
        let (whitened, k) = formats::read_latents(&latents_path)?;
        formats::write_scatter(&scatter, &whitened, k)?;
        println!("wrote {}", scatter.display());
    }
    Ok(())
}
