use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_FORMAT: u8 = 3;
pub const EXIT_EMPTY: u8 = 4;

/// Maps the first recognizable cause in the chain to an exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<omniflow::Error>() {
            return match e {
                omniflow::Error::EmptyInput(_) | omniflow::Error::EmptyMask => EXIT_EMPTY,
                e if e.is_io() => EXIT_IO,
                e if e.is_shape_or_format() => EXIT_FORMAT,
                _ => EXIT_USAGE,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<tempfile::PersistError>().is_some() {
            return EXIT_IO;
        }
        if cause.downcast_ref::<walkdir::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_USAGE
}

/// `1.5` is radians, `30deg` is degrees.
pub fn parse_angle(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let (num, scale) = match t.strip_suffix("deg") {
        Some(n) => (n.trim(), std::f64::consts::PI / 180.0),
        None => (t, 1.0),
    };
    let v: f64 = num.parse().map_err(|_| format!("not an angle: `{s}`"))?;
    if !v.is_finite() {
        return Err(format!("angle must be finite: `{s}`"));
    }
    Ok(v * scale)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so a failed run leaves no partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("cannot write into {}", dir.display()))?;
    tmp.write_all(bytes).with_context(|| format!("writing {}", path.display()))?;
    tmp.as_file().sync_all().with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).context("serializing report")?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| omniflow::Error::Io { path: path.to_path_buf(), source: e }.into())
}

/// Toolkit identification embedded in every report.
#[derive(Debug, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

pub const TOOL: Tool = Tool { name: "omniflow", version: env!("CARGO_PKG_VERSION") };

/// Files with the given extension under `root`, as sorted `/`-separated
/// relative names.
pub fn list_files(root: &Path, ext: &str) -> Result<Vec<String>> {
    if !root.is_dir() {
        return Err(omniflow::Error::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        }
        .into());
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry?;
        let p = entry.path();
        if entry.file_type().is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            let rel = p.strip_prefix(root).expect("walk stays under root");
            let name: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(name.join("/"));
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("0.5").unwrap(), 0.5);
        assert!((parse_angle("180deg").unwrap() - std::f64::consts::PI).abs() < 1e-15);
        assert!((parse_angle("-90 deg").unwrap() + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(parse_angle("abc").is_err());
        assert!(parse_angle("inf").is_err());
    }

    #[test]
    fn digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
