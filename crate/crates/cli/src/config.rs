//! Declarative run spec loaded from TOML.

use std::path::{Path, PathBuf};

use m2cmab::experiment::{GeneratorSpec, MatrixSpec, Policy, RegimeName, SchedulerTemplate};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_policy() -> Policy {
    Policy::M2Cmab
}

fn default_ratio() -> f64 {
    0.05
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub run: Option<RunSection>,
    #[serde(default)]
    pub matrix: Option<MatrixSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub trace: PathBuf,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    /// Rounds to run; defaults to the trace length.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Explicit budget totals, one per cost dimension.
    #[serde(default)]
    pub budget: Option<Vec<f64>>,
    /// Budget derived from the trace instead of `budget`.
    #[serde(default)]
    pub regime: Option<RegimeName>,
    #[serde(default)]
    pub t0: Option<usize>,
    /// Initial-phase fraction of the horizon when `t0` is unset.
    #[serde(default = "default_ratio")]
    pub init_ratio: f64,
    /// Write per-round diagnostics and the dual trajectory as CSV.
    #[serde(default)]
    pub rounds_csv: bool,
    #[serde(default)]
    pub scheduler: SchedulerTemplate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub trace: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSection {
    pub datasets: Vec<DatasetEntry>,
    pub spec: MatrixSpec,
    /// Write one regret-curve CSV per cell.
    #[serde(default)]
    pub regret_curves: bool,
}

impl CliConfig {
    /// Parses and validates; relative paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: CliConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(run) = config.run.as_mut() {
            resolve(&mut run.trace);
        }
        if let Some(m) = config.matrix.as_mut() {
            m.datasets.iter_mut().for_each(|d| resolve(&mut d.trace));
        }
        if let Some(out) = config.output_dir.as_mut() {
            resolve(out);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if let Some(run) = &self.run {
            if run.budget.is_some() == run.regime.is_some() {
                return bad("[run] needs exactly one of `budget` or `regime`".into());
            }
            if !(run.init_ratio > 0.0 && run.init_ratio < 1.0) {
                return bad(format!(
                    "[run] init_ratio {} outside (0, 1)",
                    run.init_ratio
                ));
            }
        }
        if let Some(m) = &self.matrix {
            if m.datasets.is_empty() {
                return bad("[matrix] needs at least one dataset".into());
            }
            m.spec
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
