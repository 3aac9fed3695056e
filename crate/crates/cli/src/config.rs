//! JSON run configuration.
//!
//! Every field is optional in the file and falls back to the documented
//! default; unknown keys are rejected. The fully resolved config is
//! echoed into every output artifact for provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use herosgan_core::nets::ArchConfig;
use herosgan_core::ot::OtConfig;
use herosgan_core::signal::{MotionSpec, NoiseModel};
use herosgan_core::train::TrainConfig;

use crate::{CliError, CliResult};

/// Synthetic dataset parameters: motion shape plus degradation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Episodes to generate.
    pub episodes: usize,
    /// Axes per episode (1-3).
    pub axes: usize,
    /// Sample interval, seconds.
    pub dt: f64,
    /// Leading/trailing rest, seconds.
    pub rest_s: f64,
    /// Active shaking, seconds.
    pub shake_s: f64,
    /// Peak magnitude, g.
    pub peak_g: f64,
    /// Oscillatory bursts per episode.
    pub n_bursts: usize,
    /// Master seed; per-episode seeds derive from it.
    pub seed: u64,
    /// White-noise std-dev of the degraded copies, g.
    pub white_sigma: f64,
    /// Bias random-walk step std-dev, g.
    pub bias_rw_sigma: f64,
    /// Quantization step, g (0 disables).
    pub quant_step: f64,
    /// Saturation threshold, g (`null` disables clipping).
    pub clip_level: Option<f64>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            episodes: 20,
            axes: 3,
            dt: 0.005,
            rest_s: 1.0,
            shake_s: 2.0,
            peak_g: 12.0,
            n_bursts: 3,
            seed: 1,
            white_sigma: 0.05,
            bias_rw_sigma: 1e-4,
            quant_step: 0.0,
            clip_level: Some(6.0),
        }
    }
}

impl DatasetSection {
    pub fn motion_spec(&self, episode_seed: u64) -> MotionSpec {
        MotionSpec {
            rest_s: self.rest_s,
            shake_s: self.shake_s,
            peak_g: self.peak_g,
            n_bursts: self.n_bursts,
            seed: episode_seed,
        }
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            white_sigma: self.white_sigma,
            bias_rw_sigma: self.bias_rw_sigma,
            quant_step: self.quant_step,
            clip_level: self.clip_level.unwrap_or(f64::INFINITY),
        }
    }
}

/// Training parameters mirrored onto [`TrainConfig`] plus file paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub window: usize,
    pub enc_channels: Vec<usize>,
    pub bottleneck_layers: usize,
    pub disc_channels: Vec<usize>,
    /// Windows per domain per step.
    pub batch: usize,
    pub steps: usize,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub lambda_adv: f64,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub lambda_ots: f64,
    pub lambda_mle: f64,
    /// Transport-supervised feature alignment.
    pub ots: bool,
    /// Laplace-energy regularization.
    pub mle: bool,
    /// Direct elementwise feature alignment instead of transport
    /// supervision (mutually exclusive with `ots`).
    pub l1_substitute: bool,
    pub seed: u64,
    pub ot_eps: f64,
    pub ot_tol: f64,
    pub ot_max_iter: usize,
    /// Affine pre-scaling of the raw Laplace energy before the sigmoid
    /// (1 = the written formula; experimentation knob).
    pub mle_energy_prescale: f64,
    /// Checkpoint every k steps (0 = only at the end).
    pub checkpoint_every: usize,
    /// Directory of low-cost training CSVs.
    pub data_low: Option<String>,
    /// Directory of high-cost training CSVs.
    pub data_high: Option<String>,
    /// Checkpoint output path.
    pub checkpoint_out: Option<String>,
    /// Step-report JSON-lines path (omit to skip the report stream).
    pub report_path: Option<String>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            window: t.arch.window,
            enc_channels: t.arch.enc_channels.clone(),
            bottleneck_layers: t.arch.bottleneck_layers,
            disc_channels: t.arch.disc_channels.clone(),
            batch: t.batch,
            steps: t.steps,
            lr_gen: t.lr_gen,
            lr_disc: t.lr_disc,
            lambda_adv: t.lambda_adv,
            lambda_cyc: t.lambda_cyc,
            lambda_id: t.lambda_id,
            lambda_ots: t.lambda_ots,
            lambda_mle: t.lambda_mle,
            ots: t.ots_on,
            mle: t.mle_on,
            l1_substitute: t.l1_substitute_on,
            seed: t.seed,
            ot_eps: t.ot.eps,
            ot_tol: t.ot.tol,
            ot_max_iter: t.ot.max_iter,
            mle_energy_prescale: t.mle_energy_prescale,
            checkpoint_every: t.checkpoint_every,
            data_low: None,
            data_high: None,
            checkpoint_out: None,
            report_path: None,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            arch: ArchConfig {
                window: self.window,
                enc_channels: self.enc_channels.clone(),
                bottleneck_layers: self.bottleneck_layers,
                disc_channels: self.disc_channels.clone(),
            },
            batch: self.batch,
            steps: self.steps,
            lr_gen: self.lr_gen,
            lr_disc: self.lr_disc,
            lambda_adv: self.lambda_adv,
            lambda_cyc: self.lambda_cyc,
            lambda_id: self.lambda_id,
            lambda_ots: self.lambda_ots,
            lambda_mle: self.lambda_mle,
            ots_on: self.ots,
            mle_on: self.mle,
            l1_substitute_on: self.l1_substitute,
            seed: self.seed,
            ot: OtConfig {
                eps: self.ot_eps,
                tol: self.ot_tol,
                max_iter: self.ot_max_iter,
            },
            mle_energy_prescale: self.mle_energy_prescale,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

/// Metric evaluation options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Axis used by Allan analysis.
    pub allan_axis: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { allan_axis: 0 }
    }
}

/// The whole run configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub metrics: MetricsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io_err(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Structural validation beyond what serde enforces.
    pub fn validate(&self) -> CliResult<()> {
        let d = &self.dataset;
        if d.episodes == 0 {
            return Err(CliError::Config("dataset.episodes must be >= 1".into()));
        }
        if d.axes == 0 || d.axes > 3 {
            return Err(CliError::Config("dataset.axes must be 1-3".into()));
        }
        d.motion_spec(0)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        d.noise_model()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(d.dt > 0.0) {
            return Err(CliError::Config("dataset.dt must be > 0".into()));
        }
        self.train
            .train_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn empty_json_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"nope": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"nope": 1}}"#).is_err());
    }

    #[test]
    fn partial_override() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"train": {"steps": 5, "ots": false}}"#).unwrap();
        assert_eq!(cfg.train.steps, 5);
        assert!(!cfg.train.ots);
        assert_eq!(cfg.train.batch, TrainSection::default().batch);
    }

    #[test]
    fn conflicting_toggles_fail_validation() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"train": {"ots": true, "l1_substitute": true}}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
