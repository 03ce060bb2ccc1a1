//! Artifact serialization: JSON and CSV with floats fixed at 17 significant
//! digits, atomic file writes and the run manifest.

use crate::error::{Error, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub const REPORT_SCHEMA: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pretty JSON with every float written as `{:.16e}`; non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&tree, 0, &mut out);
    out.push('\n');
    Ok(out)
}

/// JSON object `{"schema_version": 1, "report": ...}`.
pub fn report_json<T: Serialize + ?Sized>(kind: &str, value: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Envelope<'a, T: ?Sized> {
        schema_version: u32,
        kind: &'a str,
        report: &'a T,
    }
    to_json(&Envelope { schema_version: REPORT_SCHEMA, kind, report: value })
}

fn write_value(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize, out: &mut String| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                match n.as_f64() {
                    Some(f) if f.is_finite() => out.push_str(&format_float(f)),
                    _ => out.push_str("null"),
                }
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // Flat numeric arrays stay on one line.
            if items.iter().all(|x| x.is_number() || x.is_null()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, depth, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                pad(depth + 1, out);
                write_value(x, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                pad(depth + 1, out);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(x, depth + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push('}');
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Float(f64),
    Int(i64),
    Text(&'a str),
}

/// CSV text with a header row; rows must match the header width.
pub fn csv(header: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::InvalidArgument(format!("csv row has {} cells for {} columns", row.len(), header.len())));
        }
        for (i, c) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            match c {
                Cell::Float(f) => out.push_str(&format_float(*f)),
                Cell::Int(v) => {
                    let _ = write!(out, "{v}");
                }
                Cell::Text(s) => {
                    if s.contains([',', '"', '\n']) {
                        let _ = write!(out, "\"{}\"", s.replace('"', "\"\""));
                    } else {
                        out.push_str(s);
                    }
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory and renames it into place.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// One emitted file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
    pub schema_version: u32,
}

impl Artifact {
    pub fn json<T: Serialize + ?Sized>(name: &str, kind: &str, value: &T) -> Result<Self> {
        Ok(Self { name: name.into(), bytes: report_json(kind, value)?.into_bytes(), schema_version: REPORT_SCHEMA })
    }

    pub fn text(name: &str, text: String) -> Self {
        Self { name: name.into(), bytes: text.into_bytes(), schema_version: REPORT_SCHEMA }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
    pub schema_version: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub crate_version: String,
    pub config_schema: u32,
    pub config_sha256: String,
    pub seed: u64,
    pub seed_from_env: bool,
    pub assertions_passed: bool,
    pub files: Vec<ManifestEntry>,
}

/// Writes every artifact, then the manifest. Nothing is written if the directory cannot be created.
pub fn emit(dir: &Path, artifacts: &[Artifact], mut manifest: Manifest) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    manifest.files = artifacts
        .iter()
        .map(|a| ManifestEntry {
            name: a.name.clone(),
            sha256: sha256_hex(&a.bytes),
            bytes: a.bytes.len(),
            schema_version: a.schema_version,
        })
        .collect();
    for a in artifacts {
        write_atomic(dir, &a.name, &a.bytes)?;
    }
    write_atomic(dir, MANIFEST_NAME, to_json(&manifest)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.0), "-2.0000000000000000e0");
        let v: f64 = format_float(std::f64::consts::PI).parse().unwrap();
        assert_eq!(v, std::f64::consts::PI);
    }

    #[test]
    fn json_output_parses_back_exactly() {
        #[derive(Serialize)]
        struct R {
            a: f64,
            b: Vec<f64>,
            n: usize,
            s: String,
            bad: f64,
        }
        let r = R { a: 1.0 / 3.0, b: vec![1e-300, -0.0, 2.5], n: 7, s: "x\"y".into(), bad: f64::NAN };
        let text = to_json(&r).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), 1.0 / 3.0);
        assert_eq!(back["b"][0].as_f64().unwrap(), 1e-300);
        assert_eq!(back["n"].as_u64().unwrap(), 7);
        assert_eq!(back["s"].as_str().unwrap(), "x\"y");
        assert!(back["bad"].is_null());
    }

    #[test]
    fn csv_checks_widths_and_quotes() {
        let text = csv(&["name", "v"], &[vec![Cell::Text("a,b"), Cell::Float(1.5)]]).unwrap();
        assert_eq!(text, "name,v\n\"a,b\",1.5000000000000000e0\n");
        assert!(csv(&["a"], &[vec![Cell::Int(1), Cell::Int(2)]]).is_err());
    }

    #[test]
    fn emit_writes_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let arts = vec![Artifact::text("a.csv", "x\n1\n".into())];
        let manifest = Manifest {
            schema_version: REPORT_SCHEMA,
            subcommand: "simulate".into(),
            crate_version: "0".into(),
            config_schema: 1,
            config_sha256: sha256_hex(b"cfg"),
            seed: 1,
            seed_from_env: false,
            assertions_passed: true,
            files: Vec::new(),
        };
        emit(&out, &arts, manifest).unwrap();
        assert_eq!(std::fs::read_to_string(out.join("a.csv")).unwrap(), "x\n1\n");
        let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_NAME)).unwrap()).unwrap();
        assert_eq!(m["files"][0]["sha256"].as_str().unwrap(), sha256_hex(b"x\n1\n"));
        let leftovers = std::fs::read_dir(&out).unwrap().count();
        assert_eq!(leftovers, 2);
    }
}
