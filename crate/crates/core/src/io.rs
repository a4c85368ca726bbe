//! File outputs: CSV with full-precision reals, PGM (P2) images with a
//! de-normalization sidecar, and the run manifest that ties outputs to the
//! exact configuration that produced them.
//!
//! Every writer goes through an atomic temp-file-plus-rename so readers never
//! observe a partially written file, and identical inputs produce
//! byte-identical files (the determinism contract of the whole pipeline).

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Format a real with up to 17 significant digits, shortest form (the C
/// `%.17g` convention): fixed notation for moderate exponents, scientific
/// with a two-digit exponent otherwise, trailing zeros stripped. 17
/// significant digits round-trip every finite `f64`.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // 17 significant digits in scientific form, then regroup per %g rules.
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };

    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if exp < -4 || exp >= 17 {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        let _ = write!(out, "e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    } else if exp >= 0 {
        let point = (exp + 1) as usize;
        if digits.len() <= point {
            out.push_str(digits);
            for _ in digits.len()..point {
                out.push('0');
            }
        } else {
            out.push_str(&digits[..point]);
            out.push('.');
            out.push_str(&digits[point..]);
        }
    } else {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(digits);
    }
    out
}

/// Write `bytes` to `path` atomically: a temp file in the same directory is
/// written and fsynced, then renamed over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        use std::io::Write;
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Write a CSV with a header row and full-precision reals.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "CSV row {i} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        let mut first = true;
        for v in row {
            if !first {
                text.push(',');
            }
            text.push_str(&fmt_g17(*v));
            first = false;
        }
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Read a CSV written by [`write_csv`]: header row plus float rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty CSV", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.parse::<f64>().map_err(|e| {
                    Error::Config(format!("{} row {}: `{s}`: {e}", path.display(), i + 1))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "{} row {}: {} fields, header has {}",
                path.display(),
                i + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// De-normalization sidecar for PGM images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgmRange {
    pub min: f64,
    pub max: f64,
}

/// Write a real-valued image as PGM (P2, max gray 255, row-major) with a
/// `<path>.json` sidecar recording the {min, max} used for normalization so
/// pixel values can be mapped back to image values.
pub fn write_pgm(path: &Path, values: &[f64], shape: [usize; 2]) -> Result<()> {
    let [rows, cols] = shape;
    if rows * cols != values.len() {
        return Err(Error::Config(format!(
            "PGM shape {rows}x{cols} does not match {} values",
            values.len()
        )));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::Numerical("PGM image has non-finite values".into()));
    }
    let span = max - min;
    let mut text = format!("P2\n{cols} {rows}\n255\n");
    for r in 0..rows {
        let mut first = true;
        for c in 0..cols {
            let v = values[r * cols + c];
            let g = if span > 0.0 {
                ((v - min) / span * 255.0).round() as u32
            } else {
                0
            };
            if !first {
                text.push(' ');
            }
            let _ = write!(text, "{g}");
            first = false;
        }
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())?;
    let sidecar = serde_json::to_string_pretty(&PgmRange { min, max })
        .map_err(|e| Error::Config(format!("sidecar serialization: {e}")))?;
    let mut side_path = path.as_os_str().to_owned();
    side_path.push(".json");
    write_atomic(Path::new(&side_path), sidecar.as_bytes())
}

/// Run manifest: the full configuration, its hash, and provenance fields.
/// `cmd_image` refuses to image data whose manifest hash differs from the
/// requested config, printing the differing fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        Ok(Manifest {
            config: config.clone(),
            config_hash: config.hash()?,
            seed: config.mc.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Error (listing the differing fields) if `config` does not hash to the
    /// manifest's recorded configuration.
    pub fn check_matches(&self, config: &ExperimentConfig) -> Result<()> {
        if self.config_hash == config.hash()? {
            return Ok(());
        }
        let a = serde_json::to_value(&self.config)
            .map_err(|e| Error::Config(format!("manifest config: {e}")))?;
        let b = serde_json::to_value(config)
            .map_err(|e| Error::Config(format!("requested config: {e}")))?;
        let mut diffs = Vec::new();
        json_diff(&a, &b, "", &mut diffs);
        Err(Error::Config(format!(
            "config hash mismatch with data manifest; differing fields: {}",
            if diffs.is_empty() {
                "(none at field level; hash inputs differ)".to_string()
            } else {
                diffs.join(", ")
            }
        )))
    }
}

/// Collect JSON paths where `a` and `b` differ, as `path: a_value != b_value`.
fn json_diff(a: &serde_json::Value, b: &serde_json::Value, path: &str, out: &mut Vec<String>) {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            let keys: std::collections::BTreeSet<&String> =
                ma.keys().chain(mb.keys()).collect();
            for k in keys {
                let sub = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                json_diff(
                    ma.get(k).unwrap_or(&Value::Null),
                    mb.get(k).unwrap_or(&Value::Null),
                    &sub,
                    out,
                );
            }
        }
        (Value::Array(va), Value::Array(vb)) if va.len() == vb.len() => {
            for (i, (x, y)) in va.iter().zip(vb).enumerate() {
                json_diff(x, y, &format!("{path}[{i}]"), out);
            }
        }
        _ => {
            if a != b {
                out.push(format!("{path}: {a} != {b}"));
            }
        }
    }
}
