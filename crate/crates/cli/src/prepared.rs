//! Prepared tables: numeric feature columns followed by one class-name
//! column per stage (`label_stage1`, `label_stage2`, `label_stage3` unless a
//! stage spec names another column).

use std::collections::HashMap;
use std::path::Path;

use dtc_core::data::{load_flow_csv, to_dataset, ClassTaxonomy, Dataset, Stage};
use dtc_core::matrix::Matrix;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub struct Prepared {
    pub feature_names: Vec<String>,
    /// Stage datasets found in the file, in pipeline order.
    pub stages: Vec<Dataset>,
}

/// Label column of every pipeline stage under `cfg`.
pub fn label_columns(cfg: &RunConfig) -> Vec<(Stage, String)> {
    Stage::PIPELINE
        .iter()
        .map(|&stage| {
            let col = cfg
                .stage_spec(stage)
                .map(|s| s.label_column())
                .unwrap_or_else(|| format!("label_{}", stage.key()));
            (stage, col)
        })
        .collect()
}

pub fn load(path: &Path, label_cols: &[(Stage, String)]) -> CliResult<Prepared> {
    if !path.exists() {
        return Err(CliError::Input(format!("data file {} does not exist", path.display())));
    }
    let table = load_flow_csv(path)?;
    let feature_names: Vec<String> = table
        .header
        .iter()
        .filter(|h| !label_cols.iter().any(|(_, l)| l == *h))
        .cloned()
        .collect();
    if feature_names.is_empty() {
        return Err(CliError::Input(format!("{} has no feature columns", path.display())));
    }
    let no_aliases = HashMap::new();
    let mut stages = Vec::new();
    for (stage, col) in label_cols {
        if table.column_index(col).is_some() {
            let tax = ClassTaxonomy::for_stage(*stage).expect("pipeline stage");
            stages.push(to_dataset(&table, &feature_names, col, &tax, &no_aliases)?);
        }
    }
    if stages.is_empty() {
        return Err(CliError::Input(format!(
            "{} has none of the label columns {}",
            path.display(),
            label_cols.iter().map(|(_, c)| c.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(Prepared { feature_names, stages })
}

impl Prepared {
    pub fn stage(&self, stage: Stage) -> CliResult<&Dataset> {
        self.stages
            .iter()
            .find(|d| d.taxonomy().stage() == stage)
            .ok_or_else(|| CliError::Input(format!("no label column for {stage} in the data")))
    }

    pub fn features(&self) -> &Matrix {
        self.stages[0].features()
    }
}

/// CSV text of `features` plus class-name label columns.
pub fn to_csv(feature_names: &[String], features: &Matrix, labels: &[(String, Vec<String>)]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Input(format!("writing csv: {e}"));
    let header = feature_names
        .iter()
        .map(String::as_str)
        .chain(labels.iter().map(|(name, _)| name.as_str()));
    w.write_record(header).map_err(csv_err)?;
    for (i, row) in features.rows().enumerate() {
        let record = row
            .iter()
            .map(|v| v.to_string())
            .chain(labels.iter().map(|(_, l)| l[i].clone()));
        w.write_record(record).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Input(format!("writing csv: {e}")))
}
