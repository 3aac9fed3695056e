//! Desk-scale end-to-end fixture shared by criteria 6-8: generate a
//! synthetic dataset, train, enhance held-out episodes, and evaluate.
//! Runs are cached per process so the determinism criterion can rerun
//! and byte-compare without repeating work.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Duration;

use herosgan_cli::commands::{cmd_enhance, cmd_evaluate_dirs, cmd_generate, write_json, EvaluationReport};
use herosgan_cli::config::RunConfig;
use herosgan_cli::csvio::list_csv;

pub const CLIP_LEVEL: f64 = 6.0;
pub const TRAIN_SEED: u64 = 7;
pub const DATA_SEED: u64 = 11;
pub const HOLDOUT_SEED: u64 = 1213;
pub const FULL_STEPS: usize = 2000;
pub const ABLATION_STEPS: usize = 600;

/// Shared dataset + full-configuration pipeline config.
pub fn dataset_config(episodes: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.dataset.episodes = episodes;
    cfg.dataset.seed = seed;
    cfg.dataset.peak_g = 12.0;
    cfg.dataset.clip_level = Some(CLIP_LEVEL);
    cfg.dataset.white_sigma = 0.05;
    cfg.dataset.bias_rw_sigma = 1e-4;
    cfg
}

pub struct Dataset {
    pub train_dir: PathBuf,
    pub test_dir: PathBuf,
}

pub struct PipelineRun {
    pub checkpoint_bytes: Vec<u8>,
    pub report_bytes: Vec<u8>,
    pub eval_bytes: Vec<u8>,
    pub eval: EvaluationReport,
    pub baseline: EvaluationReport,
    pub train_time: Duration,
}

fn workspace_root() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let dir = std::env::temp_dir().join(format!("herosgan-acceptance-{}", std::process::id()));
        std::fs::create_dir_all(&dir).expect("create acceptance workspace");
        dir
    })
}

/// Generates the 40-episode training set and 10-episode holdout once.
pub fn dataset() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| {
        let root = workspace_root();
        let train_dir = root.join("data-train");
        let test_dir = root.join("data-test");
        cmd_generate(&dataset_config(40, DATA_SEED), &train_dir).expect("generate training data");
        cmd_generate(&dataset_config(10, HOLDOUT_SEED), &test_dir).expect("generate holdout data");
        Dataset {
            train_dir,
            test_dir,
        }
    })
}

/// Training configuration used by the end-to-end and ablation runs.
/// Output paths are relative so rerun configs (and the configs echoed
/// into artifacts) are byte-identical; the binary runs with the run
/// directory as its working directory.
pub fn train_config(data: &Dataset, steps: usize) -> RunConfig {
    let mut cfg = dataset_config(40, DATA_SEED);
    cfg.train.steps = steps;
    cfg.train.seed = TRAIN_SEED;
    cfg.train.batch = 8;
    cfg.train.window = 256;
    cfg.train.lr_gen = 5e-4;
    cfg.train.lr_disc = 5e-4;
    cfg.train.data_low = Some(data.train_dir.join("low").display().to_string());
    cfg.train.data_high = Some(data.train_dir.join("high").display().to_string());
    cfg.train.checkpoint_out = Some("checkpoint.herosgan".into());
    cfg.train.report_path = Some("steps.jsonl".into());
    cfg
}

/// Runs the herosgan binary in `cwd`, asserting success.
pub fn run_binary(cwd: &Path, args: &[&str]) -> std::process::Output {
    let exe = env!("CARGO_BIN_EXE_herosgan");
    let out = Command::new(exe)
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("spawn herosgan binary");
    assert!(
        out.status.success(),
        "herosgan {:?} failed: {}\n{}",
        args,
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Full pipeline: train via the CLI binary, enhance every holdout
/// episode, evaluate against ground truth, write the per-episode JSON
/// report. `tag` isolates the artifacts of one run.
pub fn run_pipeline(tag: &str, steps: usize, extra_train_flags: &[&str]) -> PipelineRun {
    let data = dataset();
    let out_dir = workspace_root().join(tag);
    std::fs::create_dir_all(&out_dir).expect("create run dir");
    let cfg = train_config(data, steps);
    let cfg_path = out_dir.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let t0 = std::time::Instant::now();
    let mut args: Vec<&str> = vec!["train", "--config", "config.json"];
    args.extend_from_slice(extra_train_flags);
    run_binary(&out_dir, &args);
    let train_time = t0.elapsed();

    let ckpt_path = out_dir.join("checkpoint.herosgan");
    let enhanced_dir = out_dir.join("enhanced");
    std::fs::create_dir_all(&enhanced_dir).unwrap();
    for input in list_csv(&data.test_dir.join("low")).unwrap() {
        let name = input.file_name().unwrap();
        cmd_enhance(&ckpt_path, &input, &enhanced_dir.join(name)).expect("enhance");
    }

    let baseline = cmd_evaluate_dirs(&cfg, &data.test_dir.join("high"), &data.test_dir.join("low"))
        .expect("evaluate baseline");
    let eval = cmd_evaluate_dirs(&cfg, &data.test_dir.join("high"), &enhanced_dir)
        .expect("evaluate enhanced");
    let eval_path = out_dir.join("evaluation.json");
    write_json(&eval, Some(&eval_path)).expect("write evaluation");

    PipelineRun {
        checkpoint_bytes: std::fs::read(&ckpt_path).unwrap(),
        report_bytes: std::fs::read(out_dir.join("steps.jsonl")).unwrap(),
        eval_bytes: std::fs::read(&eval_path).unwrap(),
        eval,
        baseline,
        train_time,
    }
}

/// The four ablation rows: no extensions, MLE only, OTS only, both.
pub const ABLATIONS: [(&str, &[&str]); 4] = [
    ("ablation-baseline", &["--no-ots", "--no-mle"]),
    ("ablation-mle", &["--no-ots"]),
    ("ablation-ots", &["--no-mle"]),
    ("ablation-full", &[]),
];

pub struct AblationRun {
    pub name: &'static str,
    pub run: PipelineRun,
}

/// First full-configuration pipeline run (shared by criteria 6 and 8).
pub fn full_run() -> &'static PipelineRun {
    static RUN: OnceLock<PipelineRun> = OnceLock::new();
    RUN.get_or_init(|| run_pipeline("full-a", FULL_STEPS, &[]))
}

/// First ablation-suite run (shared by criteria 7 and 8).
pub fn ablation_runs() -> &'static Vec<AblationRun> {
    static RUNS: OnceLock<Vec<AblationRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        ABLATIONS
            .iter()
            .map(|(name, flags)| AblationRun {
                name,
                run: run_pipeline(name, ABLATION_STEPS, flags),
            })
            .collect()
    })
}
