use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

/// One CSV field. Finite floats are written in the shortest form that parses
/// back to the same `f64` (exponent notation for very small or large values),
/// so identical runs give identical bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Float(v) if v.is_finite() => f.write_str(&serde_json::to_string(v).expect("finite float serializes")),
            Cell::Float(v) => write!(f, "{v}"),
            Cell::Int(v) => write!(f, "{v}"),
        }
    }
}

/// A header plus rows of cells.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<C: Into<Cell>>(&mut self, row: impl IntoIterator<Item = C>) {
        let row: Vec<Cell> = row.into_iter().map(Into::into).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r.iter().map(|v| v.to_string()))?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes artifacts and their manifests for one run.
pub struct Sink<'a> {
    pub config: &'a RunConfig,
    pub model_sha256: Option<String>,
}

impl Sink<'_> {
    /// CSV to `outputPath`, or to stdout when there is none.
    pub fn table(&self, table: &Table) -> Result<(), CliError> {
        match &self.config.output_path {
            Some(p) => {
                let mut buf = Vec::new();
                table.write(&mut buf)?;
                self.artifact(p, &buf)
            }
            None => table.write(std::io::stdout().lock()),
        }
    }

    /// Pretty JSON to `path`, or to stdout.
    pub fn json<T: Serialize>(&self, path: Option<&Path>, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
        text.push('\n');
        match path {
            Some(p) => self.artifact(p, text.as_bytes()),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn artifact(&self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_file(path, bytes)?;
        let manifest = self.manifest(bytes);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_file(&manifest_path(path), text.as_bytes())
    }

    fn manifest(&self, artifact: &[u8]) -> serde_json::Value {
        let config = serde_json::to_vec(self.config).expect("config serializes");
        json!({
            "tool": "lyap",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.config.command,
            "seed": self.config.seed,
            "configSha256": sha256_hex(&config),
            "modelSha256": self.model_sha256,
            "artifactSha256": sha256_hex(artifact),
            "config": self.config,
        })
    }
}

/// `<path>.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![0.1 + 0.2, -1e-300]);
        assert_eq!(Cell::Float(f64::INFINITY).to_string(), "inf");
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1 + 0.2, -1e-300]);
        assert!(text.starts_with("a,b\n"));
        assert!(text.len() < 40, "{text}");
    }

    #[test]
    fn manifest_sits_next_to_the_artifact() {
        assert_eq!(manifest_path(Path::new("out/x.csv")), PathBuf::from("out/x.csv.manifest.json"));
    }
}
