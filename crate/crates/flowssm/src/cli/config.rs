//! The JSON run configuration shared by the CLI subcommands. Unknown keys
//! are rejected everywhere so typos fail loudly instead of silently taking
//! defaults.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof::GofConfig;
use crate::synth::{AnomalySpec, SignalSpec};
use crate::train::{Regime, TrainConfig};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    /// single seed funneled into generation and training
    pub seed: u64,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub gof: Option<GofConfig>,
    #[serde(default)]
    pub detector: Option<DetectorSection>,
    #[serde(default)]
    pub grid: Option<GridSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub dims: usize,
    pub length: usize,
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub anomalies: Vec<AnomalySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    /// scoring window; 0 means "use recommended_window(D)"
    pub window: usize,
    pub stride: usize,
    /// FIT window; 0 means "same as window"
    pub fit_window: usize,
    /// FIT stride; 0 means non-overlapping (= fit window)
    pub fit_stride: usize,
    pub margin: f64,
    /// VUS buffer; None means window / 2
    pub max_buffer: Option<usize>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self { window: 0, stride: 1, fit_window: 0, fit_stride: 0, margin: 0.05, max_buffer: None }
    }
}

/// Declarative hyperparameter grid; absent lists fall back to the single
/// value in the `train` section.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub context: Option<Vec<usize>>,
    pub layers: Option<Vec<usize>>,
    pub hidden_layers: Option<Vec<usize>>,
    pub hidden_size: Option<Vec<usize>>,
    pub learn_b: Option<Vec<bool>>,
    /// each entry is "sequential" or a batch size
    pub batch: Option<Vec<BatchChoice>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchChoice {
    Sequential(SequentialTag),
    Size(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequentialTag {
    Sequential,
}

impl BatchChoice {
    pub fn to_regime(self) -> Regime {
        match self {
            BatchChoice::Sequential(_) => Regime::Sequential,
            BatchChoice::Size(bs) => Regime::Minibatch { batch_size: bs },
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)?;
        if config.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported config format_version {}",
                config.format_version
            )));
        }
        Ok(config)
    }

    /// The generator spec with the run seed threaded in.
    pub fn signal_spec(&self) -> Result<(SignalSpec, Vec<AnomalySpec>)> {
        let synth = self
            .synth
            .as_ref()
            .ok_or_else(|| Error::invalid("config has no `synth` section"))?;
        let spec = SignalSpec {
            dims: synth.dims,
            length: synth.length,
            frequencies: synth.frequencies.clone(),
            amplitudes: synth.amplitudes.clone(),
            phases: synth.phases.clone(),
            noise_sigma: synth.noise_sigma,
            seed: self.seed,
        };
        spec.validate()?;
        for anomaly in &synth.anomalies {
            anomaly.validate(spec.length)?;
        }
        Ok((spec, synth.anomalies.clone()))
    }

    /// The training config with the run seed threaded in.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut config = self
            .train
            .clone()
            .ok_or_else(|| Error::invalid("config has no `train` section"))?;
        config.seed = self.seed;
        Ok(config)
    }

    pub fn alpha(&self) -> Result<f64> {
        let gof = self.gof.unwrap_or_default();
        gof.validate()?;
        Ok(gof.alpha)
    }

    pub fn detector(&self) -> DetectorSection {
        self.detector.clone().unwrap_or_default()
    }

    /// Expands the grid section into concrete training configs (Cartesian
    /// product over the present lists).
    pub fn grid_configs(&self) -> Result<Vec<TrainConfig>> {
        let base = self.train_config()?;
        let grid = self
            .grid
            .clone()
            .ok_or_else(|| Error::invalid("config has no `grid` section"))?;
        let contexts = grid.context.unwrap_or_else(|| vec![base.context]);
        let layers = grid.layers.unwrap_or_else(|| vec![base.layers]);
        let hidden_layers = grid.hidden_layers.unwrap_or_else(|| vec![base.hidden_layers]);
        let hidden_sizes = grid.hidden_size.unwrap_or_else(|| vec![base.hidden_size]);
        let learn_bs = grid.learn_b.unwrap_or_else(|| vec![base.learn_b]);
        let batches: Vec<Regime> = match grid.batch {
            Some(choices) => choices.into_iter().map(BatchChoice::to_regime).collect(),
            None => vec![base.regime],
        };
        let mut out = Vec::new();
        for &context in &contexts {
            for &n_layers in &layers {
                for &hl in &hidden_layers {
                    for &hs in &hidden_sizes {
                        for &lb in &learn_bs {
                            for &regime in &batches {
                                let mut cfg = base.clone();
                                cfg.context = context;
                                cfg.layers = n_layers;
                                cfg.hidden_layers = hl;
                                cfg.hidden_size = hs;
                                cfg.learn_b = lb;
                                cfg.regime = regime;
                                out.push(cfg);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
