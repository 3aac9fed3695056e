//! Drivers behind the CLI subcommands, callable as a library.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use herosgan_core::metrics::{allan_report, csre, zvre, AllanReport};
use herosgan_core::signal::Signal;
use herosgan_core::train::{enhance, train, Checkpoint, StepReport, TrainSink};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::csvio::{load_csv, load_dir, save_csv};
use crate::dataset::{generate, Manifest};
use crate::{core_err, io_err, CliError, CliResult, TOOL_VERSION};

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    generate(cfg, out)
}

/// Writes step reports as JSON lines and checkpoints on schedule.
struct FileSink {
    checkpoint_path: PathBuf,
    report: Option<std::io::BufWriter<std::fs::File>>,
    failure: Option<CliError>,
}

impl FileSink {
    fn new(checkpoint_path: PathBuf, report_path: Option<&Path>) -> CliResult<Self> {
        let report = match report_path {
            Some(p) => Some(std::io::BufWriter::new(
                std::fs::File::create(p).map_err(|e| io_err(p, e))?,
            )),
            None => None,
        };
        Ok(FileSink {
            checkpoint_path,
            report,
            failure: None,
        })
    }

    fn record<T>(&mut self, result: CliResult<T>) {
        if let (Err(e), None) = (result, &self.failure) {
            self.failure = Some(e);
        }
    }

    fn finish(mut self) -> CliResult<()> {
        if let Some(w) = self.report.as_mut() {
            let flushed = w
                .flush()
                .map_err(|e| CliError::Data(format!("report stream: {e}")));
            self.record(flushed);
        }
        match self.failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl TrainSink for FileSink {
    fn on_step(&mut self, report: &StepReport) {
        if let Some(w) = self.report.as_mut() {
            let line = serde_json::to_string(report)
                .map_err(|e| CliError::Data(format!("report serialization: {e}")))
                .and_then(|s| {
                    writeln!(w, "{s}").map_err(|e| CliError::Data(format!("report stream: {e}")))
                });
            self.record(line);
        }
    }

    fn on_checkpoint(&mut self, checkpoint: &Checkpoint) {
        let saved = save_checkpoint(checkpoint, &self.checkpoint_path);
        self.record(saved);
    }

    fn on_abort(&mut self, checkpoint: &Checkpoint) {
        let mut diag = self.checkpoint_path.clone();
        diag.set_extension("diag.bin");
        let saved = save_checkpoint(checkpoint, &diag);
        self.record(saved);
    }
}

/// Trains from the directories named in the config and writes the
/// checkpoint (and optional report stream). Returns the checkpoint path.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let t = &cfg.train;
    let data_low = t
        .data_low
        .as_ref()
        .ok_or_else(|| CliError::Config("train.data_low is required".into()))?;
    let data_high = t
        .data_high
        .as_ref()
        .ok_or_else(|| CliError::Config("train.data_high is required".into()))?;
    let out = PathBuf::from(
        t.checkpoint_out
            .clone()
            .unwrap_or_else(|| "checkpoint.herosgan".into()),
    );

    let low: Vec<Signal> = load_dir(Path::new(data_low))?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let high: Vec<Signal> = load_dir(Path::new(data_high))?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    if low.is_empty() {
        return Err(CliError::Data(format!("no CSV signals in {data_low}")));
    }
    if high.is_empty() {
        return Err(CliError::Data(format!("no CSV signals in {data_high}")));
    }

    let mut sink = FileSink::new(out.clone(), t.report_path.as_deref().map(Path::new))?;
    let result = train(&t.train_config(), &low, &high, &mut sink);
    let sink_result = sink.finish();
    result.map_err(core_err)?;
    sink_result?;
    Ok(out)
}

pub fn cmd_enhance(checkpoint: &Path, input: &Path, output: &Path) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let signal = load_csv(input)?;
    let out = enhance(&ckpt, &signal).map_err(core_err)?;
    save_csv(&out, output)
}

/// Per-pair metrics of one reference/reconstruction file pair.
#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub name: String,
    /// RMS error between reference and reconstruction, g.
    pub csre: f64,
    /// Per-axis zero-velocity residual of the reconstruction, m/s.
    pub zvre_recon: Vec<f64>,
    /// Per-axis zero-velocity residual of the reference, m/s.
    pub zvre_ref: Vec<f64>,
    pub max_abs_recon: f64,
    pub max_abs_ref: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationAggregate {
    pub mean_csre: f64,
    /// Mean over episodes of the per-episode mean over axes.
    pub mean_zvre_recon: f64,
    pub mean_zvre_ref: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub tool_version: String,
    pub config: RunConfig,
    pub pairs: Vec<PairReport>,
    pub aggregate: EvaluationAggregate,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Compares reconstructions against references, matching files by name.
pub fn cmd_evaluate_dirs(
    cfg: &RunConfig,
    reference: &Path,
    recon: &Path,
) -> CliResult<EvaluationReport> {
    let refs = load_dir(reference)?;
    let recons = load_dir(recon)?;
    let ref_names: BTreeSet<&str> = refs.iter().map(|(n, _)| n.as_str()).collect();
    let recon_names: BTreeSet<&str> = recons.iter().map(|(n, _)| n.as_str()).collect();
    if ref_names != recon_names {
        let only_ref: Vec<&&str> = ref_names.difference(&recon_names).collect();
        let only_recon: Vec<&&str> = recon_names.difference(&ref_names).collect();
        return Err(CliError::Data(format!(
            "file sets differ: only in {}: {only_ref:?}; only in {}: {only_recon:?}",
            reference.display(),
            recon.display()
        )));
    }
    if refs.is_empty() {
        return Err(CliError::Data(format!(
            "no CSV signals in {}",
            reference.display()
        )));
    }

    let mut pairs = Vec::with_capacity(refs.len());
    for ((name, r), (_, c)) in refs.iter().zip(recons.iter()) {
        let err = csre(r, c).map_err(core_err)?;
        pairs.push(PairReport {
            name: name.clone(),
            csre: err,
            zvre_recon: zvre(c),
            zvre_ref: zvre(r),
            max_abs_recon: c.max_abs(),
            max_abs_ref: r.max_abs(),
        });
    }
    let aggregate = EvaluationAggregate {
        mean_csre: mean(pairs.iter().map(|p| p.csre)),
        mean_zvre_recon: mean(pairs.iter().map(|p| mean(p.zvre_recon.iter().copied()))),
        mean_zvre_ref: mean(pairs.iter().map(|p| mean(p.zvre_ref.iter().copied()))),
    };
    Ok(EvaluationReport {
        tool_version: TOOL_VERSION.to_string(),
        config: cfg.clone(),
        pairs,
        aggregate,
    })
}

/// Allan analysis output for one signal file.
#[derive(Debug, Clone, Serialize)]
pub struct AllanCommandReport {
    pub tool_version: String,
    pub config: RunConfig,
    pub file: String,
    pub axis: usize,
    #[serde(flatten)]
    pub report: AllanReport,
}

pub fn cmd_allan(
    cfg: &RunConfig,
    input: &Path,
    axis: usize,
    curve_csv: Option<&Path>,
) -> CliResult<AllanCommandReport> {
    let signal = load_csv(input)?;
    let report = allan_report(&signal, axis).map_err(core_err)?;
    if let Some(path) = curve_csv {
        let mut text = String::from("tau,adev\n");
        for (t, a) in report.curve.taus.iter().zip(&report.curve.adev) {
            text.push_str(&format!("{t},{a}\n"));
        }
        std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    }
    Ok(AllanCommandReport {
        tool_version: TOOL_VERSION.to_string(),
        config: cfg.clone(),
        file: input.display().to_string(),
        axis,
        report,
    })
}

/// Serializes a report to the given path, or stdout when `None`.
pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("report serialization: {e}")))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| io_err(path, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::dataset_dirs;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.dataset.episodes = 2;
        cfg.dataset.seed = 21;
        cfg
    }

    #[test]
    fn evaluate_identical_dirs_gives_zero_csre() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        cmd_generate(&cfg, dir.path()).unwrap();
        let (_, high) = dataset_dirs(dir.path());
        let report = cmd_evaluate_dirs(&cfg, &high, &high).unwrap();
        assert_eq!(report.pairs.len(), 2);
        for p in &report.pairs {
            assert_eq!(p.csre, 0.0);
        }
        assert_eq!(report.aggregate.mean_csre, 0.0);
    }

    #[test]
    fn evaluate_low_vs_high_sees_clipping() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        cmd_generate(&cfg, dir.path()).unwrap();
        let (low, high) = dataset_dirs(dir.path());
        let report = cmd_evaluate_dirs(&cfg, &high, &low).unwrap();
        assert!(report.aggregate.mean_csre > 0.3);
        for p in &report.pairs {
            assert!(p.max_abs_ref > 6.0);
            assert!(p.max_abs_recon <= 6.0 + 1e-12);
        }
    }

    #[test]
    fn evaluate_mismatched_sets_lists_names() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        cmd_generate(&cfg, dir.path()).unwrap();
        let (low, high) = dataset_dirs(dir.path());
        std::fs::remove_file(low.join("ep_001.csv")).unwrap();
        let err = cmd_evaluate_dirs(&cfg, &high, &low).unwrap_err().to_string();
        assert!(err.contains("ep_001.csv"), "{err}");
    }

    #[test]
    fn enhance_round_trip_identity_checkpoint() {
        use herosgan_core::nets::{init_params, ArchConfig};
        use herosgan_core::train::TrainConfig;
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        cmd_generate(&cfg, dir.path()).unwrap();

        let config = TrainConfig {
            arch: ArchConfig::default(),
            ..TrainConfig::default()
        };
        let ckpt = Checkpoint {
            params: init_params(&config.arch, 5).unwrap(),
            seed: 5,
            step: 0,
            scale: 12.6,
            config,
        };
        let ckpt_path = dir.path().join("id.ckpt");
        save_checkpoint(&ckpt, &ckpt_path).unwrap();

        let input = dir.path().join("low/ep_000.csv");
        let output = dir.path().join("enhanced.csv");
        cmd_enhance(&ckpt_path, &input, &output).unwrap();
        let a = load_csv(&input).unwrap();
        let b = load_csv(&output).unwrap();
        assert_eq!(a.len(), b.len());
        for axis in 0..a.axes() {
            for (x, y) in a.axis(axis).iter().zip(b.axis(axis)) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn train_writes_checkpoint_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg();
        cmd_generate(&cfg, dir.path()).unwrap();
        let (low, high) = dataset_dirs(dir.path());
        cfg.train.window = 16;
        cfg.train.enc_channels = vec![8];
        cfg.train.bottleneck_layers = 1;
        cfg.train.disc_channels = vec![4, 8];
        cfg.train.batch = 2;
        cfg.train.steps = 2;
        cfg.train.data_low = Some(low.display().to_string());
        cfg.train.data_high = Some(high.display().to_string());
        cfg.train.checkpoint_out = Some(dir.path().join("out.ckpt").display().to_string());
        cfg.train.report_path = Some(dir.path().join("reports.jsonl").display().to_string());
        let path = cmd_train(&cfg).unwrap();
        assert!(path.exists());
        let text = std::fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["step"], 1);
        assert!(first["loss_ots"].as_f64().unwrap() > 0.0);
        let ckpt = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt.step, 2);
    }
}
