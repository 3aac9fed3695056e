//! Checkpoint files: one JSON header line followed by the raw
//! little-endian `f64` parameter block. Round trips are bit-exact.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use herosgan_core::nets::{ArchConfig, ModelParams};
use herosgan_core::train::{Checkpoint, TrainConfig};

use crate::{io_err, CliError, CliResult};

const FORMAT_TAG: &str = "herosgan-checkpoint";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    tool_version: String,
    arch: ArchConfig,
    seed: u64,
    step: usize,
    scale: f64,
    param_count: usize,
    config: TrainConfig,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> CliResult<()> {
    let header = Header {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        tool_version: crate::TOOL_VERSION.to_string(),
        arch: ckpt.params.arch.clone(),
        seed: ckpt.seed,
        step: ckpt.step,
        scale: ckpt.scale,
        param_count: ckpt.params.data().len(),
        config: ckpt.config.clone(),
    };
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut text = serde_json::to_string(&header)
        .map_err(|e| CliError::Data(format!("checkpoint header serialization: {e}")))?;
    text.push('\n');
    file.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    let mut block = Vec::with_capacity(ckpt.params.data().len() * 8);
    for v in ckpt.params.data() {
        block.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&block).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CliError::Data(format!("{}: missing header line", path.display())))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| CliError::Data(format!("{}: bad header: {e}", path.display())))?;
    if header.format != FORMAT_TAG {
        return Err(CliError::Data(format!(
            "{}: not a checkpoint file (format '{}')",
            path.display(),
            header.format
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(CliError::Data(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            header.version
        )));
    }
    let block = &bytes[newline + 1..];
    if block.len() != header.param_count * 8 {
        return Err(CliError::Data(format!(
            "{}: expected {} parameter bytes, found {}",
            path.display(),
            header.param_count * 8,
            block.len()
        )));
    }
    let data: Vec<f64> = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ModelParams::from_flat(header.arch, header.seed, data)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Checkpoint {
        params,
        seed: header.seed,
        step: header.step,
        scale: header.scale,
        config: header.config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use herosgan_core::nets::init_params;

    fn sample_checkpoint() -> Checkpoint {
        let config = TrainConfig {
            arch: ArchConfig::tiny(),
            ..TrainConfig::default()
        };
        Checkpoint {
            params: init_params(&config.arch, 77).unwrap(),
            seed: 77,
            step: 123,
            scale: 12.57,
            config,
        }
    }

    #[test]
    fn round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let ckpt = sample_checkpoint();
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.step, ckpt.step);
        assert_eq!(back.scale.to_bits(), ckpt.scale.to_bits());
        assert_eq!(back.config, ckpt.config);
        let bits = |p: &ModelParams| p.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&ckpt.params));
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        let ckpt = sample_checkpoint();
        save_checkpoint(&ckpt, &a).unwrap();
        save_checkpoint(&ckpt, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn truncated_block_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&sample_checkpoint(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn arbitrary_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.bin");
        std::fs::write(&path, b"{\"format\":\"something\"}\n").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
