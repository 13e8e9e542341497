//! Run configs and dataset schemas, both JSON.
//!
//! Relative paths inside a config resolve against the config file's directory.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use dtc_core::data::{MissingTokens, Stage, DEFAULT_MISSING_TOKENS};
use dtc_core::eval::ReportFormat;
use dtc_core::learners::LearnerSpec;
use dtc_core::pipeline::{Routing, StageSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<ReportFormat>,
    pub schema: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    /// Per-stage preprocessing, selection and learner.
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    /// Learners compared by `report`.
    #[serde(default)]
    pub learners: Vec<LearnerSpec>,
    pub routing: Option<Routing>,
    pub cascade_gate: Option<String>,
    pub folds: Option<usize>,
    pub test_fraction: Option<f64>,
}

fn read_text(path: &Path, what: &str) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {what} {}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path, "config")?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.out, &mut cfg.schema, &mut cfg.data, &mut cfg.test_data]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        for p in [&self.schema, &self.data, &self.test_data].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::Config(format!("config references missing file {}", p.display())));
            }
        }
        let mut seen = Vec::new();
        for s in &self.stages {
            if seen.contains(&s.stage) {
                return Err(CliError::Config(format!("stage {} configured twice", s.stage)));
            }
            seen.push(s.stage);
        }
        if let Some(f) = self.test_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::Config(format!("test_fraction {f} must lie in (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn stage_spec(&self, stage: Stage) -> Option<&StageSpec> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FeatureColumns {
    /// `"all_numeric"`: every numeric column except labels and exclusions.
    Keyword(String),
    Named(Vec<String>),
}

impl Default for FeatureColumns {
    fn default() -> Self {
        FeatureColumns::Keyword("all_numeric".into())
    }
}

/// How to read a raw flow CSV.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default)]
    pub delimiter: Option<char>,
    #[serde(default)]
    pub features: FeatureColumns,
    #[serde(default)]
    pub exclude: Vec<String>,
    /// Label column per stage; several stages may share one column.
    pub labels: BTreeMap<Stage, String>,
    /// Per-stage map from raw label text to class name.
    #[serde(default)]
    pub aliases: BTreeMap<Stage, HashMap<String, String>>,
    #[serde(default)]
    pub missing_tokens: Option<Vec<String>>,
}

impl SchemaConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path, "schema")?;
        let schema: SchemaConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if schema.labels.is_empty() {
            return Err(CliError::Config(format!("{}: no label columns configured", path.display())));
        }
        if schema.labels.contains_key(&Stage::Custom) {
            return Err(CliError::Config("schema labels must use stage1, stage2 or stage3".into()));
        }
        if let FeatureColumns::Keyword(k) = &schema.features {
            if k != "all_numeric" {
                return Err(CliError::Config(format!(
                    "features must be a column list or \"all_numeric\", got {k:?}"
                )));
            }
        }
        Ok(schema)
    }

    pub fn delimiter(&self) -> CliResult<u8> {
        match self.delimiter {
            None => Ok(b','),
            Some(c) if c.is_ascii() => Ok(c as u8),
            Some(c) => Err(CliError::Config(format!("delimiter {c:?} is not ASCII"))),
        }
    }

    pub fn missing_tokens(&self) -> MissingTokens {
        match &self.missing_tokens {
            Some(t) => MissingTokens::new(t.iter().cloned()),
            None => MissingTokens::new(DEFAULT_MISSING_TOKENS),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("d.csv"), "a,label_stage1\n1,Benign\n").unwrap();
        let cfg_path = tmp.path().join("run.json");
        fs::write(
            &cfg_path,
            r#"{"seed": 3, "data": "d.csv", "stages": [{"stage": "stage1", "learner": {"kind": "knn", "k": 1}}]}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.data.as_deref().unwrap(), tmp.path().join("d.csv").as_path());
        assert!(cfg.stage_spec(Stage::StageI).is_some());
    }

    #[test]
    fn missing_reference_is_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg_path = tmp.path().join("run.json");
        fs::write(&cfg_path, r#"{"schema": "nope.json"}"#).unwrap();
        let err = RunConfig::load(&cfg_path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("nope.json"));
    }

    #[test]
    fn schema_parsing() {
        let s: SchemaConfig = serde_json::from_str(
            r#"{"labels": {"stage1": "Label", "stage3": "Label.1"}, "aliases": {"stage1": {"Tor": "Malicious"}}}"#,
        )
        .unwrap();
        assert!(matches!(s.features, FeatureColumns::Keyword(_)));
        assert_eq!(s.labels[&Stage::StageIII], "Label.1");
        assert_eq!(s.delimiter().unwrap(), b',');
    }
}
