use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Mc,
    Chain,
    Operator,
    Edge,
    Dh,
    Wd,
    Compare,
    Fig2,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Mc => "mc",
            Command::Chain => "chain",
            Command::Operator => "operator",
            Command::Edge => "edge",
            Command::Dh => "dh",
            Command::Wd => "wd",
            Command::Compare => "compare",
            Command::Fig2 => "fig2",
        };
        f.write_str(s)
    }
}

/// One fully resolved invocation. Every subcommand is turned into one of these
/// before it runs, and `lyap run --config` reads the same document from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    /// CSV artifact; stdout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    /// JSON summary artifact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json_output_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// `left` or `right`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<String>,
    /// `dh` only: emit the edge constants instead of the per-k table.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub constants: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            model_path: None,
            output_path: None,
            json_output_path: None,
            seed: 0,
            eps: None,
            k: None,
            steps: None,
            burn_in: None,
            batches: None,
            tol: None,
            side: None,
            constants: false,
            mc_steps: None,
            chain_steps: None,
            window: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::Validation(format!("config not found: {}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut mark = |on: bool, name| {
            if on {
                v.push(name)
            }
        };
        mark(self.model_path.is_some(), "modelPath");
        mark(self.eps.is_some(), "eps");
        mark(self.k.is_some(), "k");
        mark(self.steps.is_some(), "steps");
        mark(self.burn_in.is_some(), "burnIn");
        mark(self.batches.is_some(), "batches");
        mark(self.tol.is_some(), "tol");
        mark(self.side.is_some(), "side");
        mark(self.constants, "constants");
        mark(self.mc_steps.is_some(), "mcSteps");
        mark(self.chain_steps.is_some(), "chainSteps");
        mark(self.window.is_some(), "window");
        v
    }

    fn allowed(&self) -> &'static [&'static str] {
        match self.command {
            Command::Mc => &["modelPath", "eps", "steps", "batches"],
            Command::Chain => &["modelPath", "k", "steps", "burnIn"],
            Command::Operator => &["modelPath", "k", "tol"],
            Command::Edge => &["modelPath", "side"],
            Command::Dh => &["modelPath", "k", "constants"],
            Command::Wd => &["eps"],
            Command::Compare => &["modelPath", "k", "mcSteps", "chainSteps", "burnIn", "batches", "tol"],
            Command::Fig2 => &["modelPath", "k", "window"],
        }
    }

    /// Field-level checks that do not need the model.
    pub fn validate(&self) -> Result<(), CliError> {
        let allowed = self.allowed();
        if let Some(f) = self.present().into_iter().find(|f| !allowed.contains(f)) {
            return Err(CliError::Validation(format!("{f}: not used by command `{}`", self.command)));
        }
        match self.command {
            Command::Mc | Command::Wd => {
                require_list("eps", self.eps.as_deref())?;
            }
            Command::Chain | Command::Operator => {
                let k = require_list("k", self.k.as_deref())?;
                if k.len() != 1 {
                    return Err(CliError::Validation(format!("k: command `{}` takes a single value", self.command)));
                }
            }
            Command::Fig2 => {
                if self.k.as_ref().is_some_and(|k| k.len() != 1) {
                    return Err(CliError::Validation("k: command `fig2` takes a single value".into()));
                }
            }
            Command::Dh => {
                if self.constants && self.k.is_some() {
                    return Err(CliError::Validation("k: not used with `constants`".into()));
                }
            }
            Command::Edge | Command::Compare => {}
        }
        if self.command == Command::Dh && self.constants && self.output_path.is_some() {
            return Err(CliError::Validation("outputPath: `dh constants` writes JSON only (use jsonOutputPath)".into()));
        }
        if let Some(v) = self.k.as_deref() {
            if let Some(bad) = v.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
                return Err(CliError::Validation(format!("k: must be positive and finite, got {bad}")));
            }
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Validation(format!("tol: must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn k_or(&self, default: &[f64]) -> Vec<f64> {
        self.k.clone().unwrap_or_else(|| default.to_vec())
    }
}

fn require_list<'a>(name: &str, v: Option<&'a [f64]>) -> Result<&'a [f64], CliError> {
    match v {
        None => Err(CliError::Validation(format!("{name}: required"))),
        Some([]) => Err(CliError::Validation(format!("{name}: empty list"))),
        Some(v) => Ok(v),
    }
}
