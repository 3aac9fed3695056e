//! Synthetic dataset generation: paired `high/` (clean) and `low/`
//! (degraded) directories plus a manifest. The pairing is available by
//! file name for evaluation; training reads the two directories
//! independently.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use herosgan_core::signal::{degrade, synth_motion};

use crate::config::RunConfig;
use crate::csvio::save_csv;
use crate::{core_err, io_err, CliResult, TOOL_VERSION};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub file: String,
    pub synth_seed: u64,
    pub degrade_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub episodes: Vec<ManifestEntry>,
}

/// Splitmix-style derivation of per-episode seeds from the master seed.
fn derive_seed(master: u64, k: u64) -> u64 {
    let mut z = master.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Writes `out/high`, `out/low`, and `out/manifest.json`.
pub fn generate(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    cfg.validate()?;
    let high_dir = out.join("high");
    let low_dir = out.join("low");
    std::fs::create_dir_all(&high_dir).map_err(|e| io_err(&high_dir, e))?;
    std::fs::create_dir_all(&low_dir).map_err(|e| io_err(&low_dir, e))?;

    let d = &cfg.dataset;
    let nm = d.noise_model();
    let mut entries = Vec::with_capacity(d.episodes);
    for i in 0..d.episodes {
        let synth_seed = derive_seed(d.seed, 2 * i as u64);
        let degrade_seed = derive_seed(d.seed, 2 * i as u64 + 1);
        let clean = synth_motion(&d.motion_spec(synth_seed), d.axes, d.dt).map_err(core_err)?;
        let noisy = degrade(&clean, &nm, degrade_seed).map_err(core_err)?;
        let file = format!("ep_{i:03}.csv");
        save_csv(&clean, &high_dir.join(&file))?;
        save_csv(&noisy, &low_dir.join(&file))?;
        entries.push(ManifestEntry {
            index: i,
            file,
            synth_seed,
            degrade_seed,
        });
    }
    let manifest = Manifest {
        tool_version: TOOL_VERSION.to_string(),
        config: cfg.clone(),
        episodes: entries,
    };
    let manifest_path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| crate::CliError::Data(format!("manifest serialization: {e}")))?;
    std::fs::write(&manifest_path, text).map_err(|e| io_err(&manifest_path, e))?;
    Ok(manifest)
}

/// The standard locations inside a generated dataset.
pub fn dataset_dirs(root: &Path) -> (PathBuf, PathBuf) {
    (root.join("low"), root.join("high"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csvio::{list_csv, load_csv};

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.dataset.episodes = 3;
        cfg.dataset.seed = 9;
        cfg
    }

    #[test]
    fn generates_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&small_cfg(), dir.path()).unwrap();
        assert_eq!(manifest.episodes.len(), 3);
        assert_eq!(list_csv(&dir.path().join("high")).unwrap().len(), 3);
        assert_eq!(list_csv(&dir.path().join("low")).unwrap().len(), 3);
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&small_cfg(), a.path()).unwrap();
        generate(&small_cfg(), b.path()).unwrap();
        for sub in ["high", "low"] {
            for i in 0..3 {
                let fa = std::fs::read(a.path().join(sub).join(format!("ep_{i:03}.csv"))).unwrap();
                let fb = std::fs::read(b.path().join(sub).join(format!("ep_{i:03}.csv"))).unwrap();
                assert_eq!(fa, fb, "{sub}/ep_{i:03}");
            }
        }
        let ma = std::fs::read(a.path().join("manifest.json")).unwrap();
        let mb = std::fs::read(b.path().join("manifest.json")).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn low_is_clipped_high_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg();
        generate(&cfg, dir.path()).unwrap();
        let clip = cfg.dataset.clip_level.unwrap();
        for i in 0..3 {
            let high = load_csv(&dir.path().join("high").join(format!("ep_{i:03}.csv"))).unwrap();
            let low = load_csv(&dir.path().join("low").join(format!("ep_{i:03}.csv"))).unwrap();
            assert!(high.max_abs() > clip, "episode {i} high peak under clip");
            assert!(low.max_abs() <= clip + 1e-12, "episode {i} low exceeds clip");
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg_b = small_cfg();
        cfg_b.dataset.seed = 10;
        generate(&small_cfg(), a.path()).unwrap();
        generate(&cfg_b, b.path()).unwrap();
        let fa = std::fs::read(a.path().join("high/ep_000.csv")).unwrap();
        let fb = std::fs::read(b.path().join("high/ep_000.csv")).unwrap();
        assert_ne!(fa, fb);
    }
}
