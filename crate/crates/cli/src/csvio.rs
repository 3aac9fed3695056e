//! Signal CSV format.
//!
//! ```text
//! # dt=0.005
//! # axes=3
//! 0.01,-0.02,0.005
//! ...
//! ```
//!
//! Header keys `dt` and `axes` are mandatory and bit-exact; an optional
//! `# label=...` line carries provenance. Values are written with Rust's
//! shortest round-trip float formatting, so save/load reproduces samples
//! exactly.

use std::fmt::Write as _;
use std::path::Path;

use herosgan_core::signal::Signal;

use crate::{io_err, CliError, CliResult};

pub fn save_csv(signal: &Signal, path: &Path) -> CliResult<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# dt={}", signal.dt());
    let _ = writeln!(out, "# axes={}", signal.axes());
    if !signal.label().is_empty() {
        let _ = writeln!(out, "# label={}", signal.label());
    }
    for i in 0..signal.len() {
        for axis in 0..signal.axes() {
            if axis > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", signal.axis(axis)[i]);
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_csv(path: &Path) -> CliResult<Signal> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let name = path.display();
    let mut dt: Option<f64> = None;
    let mut axes: Option<usize> = None;
    let mut label = String::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some(v) = rest.strip_prefix("dt=") {
                if dt.is_some() {
                    return Err(CliError::Data(format!("{name}:{lineno}: duplicate dt header")));
                }
                let parsed: f64 = v.trim().parse().map_err(|_| {
                    CliError::Data(format!("{name}:{lineno}: malformed dt value '{v}'"))
                })?;
                dt = Some(parsed);
            } else if let Some(v) = rest.strip_prefix("axes=") {
                if axes.is_some() {
                    return Err(CliError::Data(format!(
                        "{name}:{lineno}: duplicate axes header"
                    )));
                }
                let parsed: usize = v.trim().parse().map_err(|_| {
                    CliError::Data(format!("{name}:{lineno}: malformed axes value '{v}'"))
                })?;
                axes = Some(parsed);
            } else if let Some(v) = rest.strip_prefix("label=") {
                label = v.to_string();
            } else {
                return Err(CliError::Data(format!(
                    "{name}:{lineno}: unknown header line '{line}'"
                )));
            }
            continue;
        }
        let axes = axes.ok_or_else(|| {
            CliError::Data(format!(
                "{name}:{lineno}: data before '# axes=' header (missing header?)"
            ))
        })?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != axes {
            return Err(CliError::Data(format!(
                "{name}:{lineno}: expected {axes} fields, got {}",
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(axes);
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| {
                CliError::Data(format!("{name}:{lineno}: malformed sample '{f}'"))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "{name}:{lineno}: non-finite sample '{f}'"
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }

    let dt = dt.ok_or_else(|| CliError::Data(format!("{name}: missing '# dt=' header")))?;
    let axes = axes.ok_or_else(|| CliError::Data(format!("{name}: missing '# axes=' header")))?;
    if rows.len() < 2 {
        return Err(CliError::Data(format!(
            "{name}: need at least 2 sample rows, got {}",
            rows.len()
        )));
    }
    let mut samples = vec![Vec::with_capacity(rows.len()); axes];
    for row in rows {
        for (axis, v) in row.into_iter().enumerate() {
            samples[axis].push(v);
        }
    }
    Signal::new(samples, dt, label).map_err(|e| CliError::Data(format!("{name}: {e}")))
}

/// CSV names in a directory, sorted for deterministic processing order.
pub fn list_csv(dir: &Path) -> CliResult<Vec<std::path::PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every CSV in a directory, sorted by file name.
pub fn load_dir(dir: &Path) -> CliResult<Vec<(String, Signal)>> {
    let mut out = Vec::new();
    for path in list_csv(dir)? {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push((name, load_csv(&path)?));
    }
    Ok(out)
}
