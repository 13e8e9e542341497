use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use dtc_core::data::{
    impute_missing, is_numeric_column, load_flow_csv_with, stratified_split, to_dataset_with, ClassTaxonomy,
    Dataset, ImputeStrategy, Stage,
};
use dtc_core::eval::{
    cross_validate, emit_comparison, evaluate_labels, evaluate_stage, ComparisonRow, MetricsReport, ReportFormat,
};
use dtc_core::features::{rank_features, write_ranking_csv, ScoreMethod};
use dtc_core::learners::{LearnerSpec, ModelKind, TreeParams};
use dtc_core::persist;
use dtc_core::pipeline::{
    train_pipeline_timed, train_stage_timed, PipelineModel, RoutedPrediction, Routing, StageArtifacts, StageSpec,
    DEFAULT_CASCADE_GATE,
};
use dtc_core::synth::{generate, SynthParams};

use crate::config::{FeatureColumns, RunConfig, SchemaConfig};
use crate::error::{CliError, CliResult};
use crate::outputs::Outputs;
use crate::prepared::{self, label_columns, Prepared};

const STAGE_MODEL_VERSION: u32 = 1;

/// Settings shared by every command after merging flags over the config.
pub struct Context {
    pub cfg: RunConfig,
    seed: Option<u64>,
    pub out: PathBuf,
    pub format: ReportFormat,
}

impl Context {
    pub fn new(
        config: Option<&Path>,
        seed: Option<u64>,
        out: Option<PathBuf>,
        format: Option<ReportFormat>,
    ) -> CliResult<Self> {
        let cfg = match config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(Self {
            seed: seed.or(cfg.seed),
            out: out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("dtc-out")),
            format: format.or(cfg.format).unwrap_or_default(),
            cfg,
        })
    }

    fn seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::Config("no seed: pass --seed or set \"seed\" in the config".into()))
    }

    fn data(&self, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        flag.or_else(|| self.cfg.data.clone())
            .ok_or_else(|| CliError::Config("no data file: pass --data or set \"data\" in the config".into()))
    }

    fn outputs(&self) -> Outputs {
        Outputs::new(&self.out)
    }

    fn load(&self, path: &Path) -> CliResult<Prepared> {
        prepared::load(path, &label_columns(&self.cfg))
    }

    /// The config's spec for `stage` (or a default decision tree), with the
    /// learner replaced when `learner` names a different kind.
    fn stage_spec(&self, stage: Stage, learner: Option<&str>) -> CliResult<StageSpec> {
        let mut spec = self
            .cfg
            .stage_spec(stage)
            .cloned()
            .unwrap_or_else(|| StageSpec::new(stage, LearnerSpec::DecisionTree(TreeParams::default())));
        if let Some(name) = learner {
            let kind = parse_kind(name)?;
            if spec.learner.kind() != kind {
                spec.learner = LearnerSpec::default_for(kind);
            }
        }
        Ok(spec)
    }
}

fn parse_stage(s: &str) -> CliResult<Stage> {
    match Stage::parse(s) {
        Some(stage) if stage.index().is_some() => Ok(stage),
        _ => Err(CliError::Config(format!("unknown stage {s:?}; valid stages: stage1, stage2, stage3"))),
    }
}

fn parse_kind(s: &str) -> CliResult<ModelKind> {
    ModelKind::parse(s).ok_or_else(|| {
        let valid: Vec<&str> = ModelKind::ALL.iter().map(|k| k.key()).collect();
        CliError::Config(format!("unknown learner {s:?}; valid learners: {}", valid.join(", ")))
    })
}

fn parse_methods(s: &str) -> CliResult<Vec<ScoreMethod>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ScoreMethod::ALL.to_vec());
    }
    ScoreMethod::parse(s).map(|m| vec![m]).ok_or_else(|| {
        CliError::Config(format!(
            "unknown method {s:?}; valid methods: info_gain, fisher, chi_square, all"
        ))
    })
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn class_histogram(d: &Dataset) -> BTreeMap<String, usize> {
    d.taxonomy().names().iter().cloned().zip(d.class_counts()).collect()
}

fn label_names(d: &Dataset) -> Vec<String> {
    d.label_names().into_iter().map(str::to_string).collect()
}

fn prepared_csv(datasets: &[Dataset]) -> CliResult<Vec<u8>> {
    let labels: Vec<(String, Vec<String>)> = datasets
        .iter()
        .map(|d| (format!("label_{}", d.taxonomy().stage().key()), label_names(d)))
        .collect();
    prepared::to_csv(datasets[0].feature_names(), datasets[0].features(), &labels)
}

fn finish(out: Outputs) {
    for f in out.commit() {
        println!("{}", f.display());
    }
}

pub fn synth(ctx: &Context, rows: usize, separation: f64, name: &str) -> CliResult<()> {
    if rows < 40 {
        return Err(CliError::Config(format!("--rows {rows} is too small; use at least 40")));
    }
    let s = generate(&SynthParams {
        n_rows: rows,
        separation,
        seed: ctx.seed()?,
    });
    let mut buf = Vec::new();
    s.write_csv(&mut buf)
        .map_err(|e| CliError::Input(format!("writing synthetic csv: {e}")))?;
    let mut out = ctx.outputs();
    out.write(name, buf)?;
    finish(out);
    Ok(())
}

pub fn prep(
    ctx: &Context,
    input: &Path,
    schema: Option<PathBuf>,
    strategy: ImputeStrategy,
    test_fraction: Option<f64>,
) -> CliResult<()> {
    let schema_path = schema
        .or_else(|| ctx.cfg.schema.clone())
        .ok_or_else(|| CliError::Config("no schema: pass --schema or set \"schema\" in the config".into()))?;
    let schema = SchemaConfig::load(&schema_path)?;
    let test_fraction = test_fraction.or(ctx.cfg.test_fraction);

    let t = Instant::now();
    let table = load_flow_csv_with(input, schema.delimiter()?)?;
    let load_secs = secs(t);

    let t = Instant::now();
    let tokens = schema.missing_tokens();
    let label_cols: Vec<&String> = schema.labels.values().collect();
    let features: Vec<String> = match &schema.features {
        FeatureColumns::Named(cols) => cols.clone(),
        FeatureColumns::Keyword(_) => table
            .header
            .iter()
            .enumerate()
            .filter(|(_, h)| !label_cols.contains(h) && !schema.exclude.contains(h))
            .filter(|&(i, h)| {
                let numeric = is_numeric_column(&table, i, &tokens);
                if !numeric {
                    log::info!("skipping non-numeric column {h:?}");
                }
                numeric
            })
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if features.is_empty() {
        return Err(CliError::Input(format!("{}: no numeric feature columns", input.display())));
    }
    let no_aliases = Default::default();
    let raw: Vec<Dataset> = schema
        .labels
        .iter()
        .map(|(&stage, col)| {
            let tax = ClassTaxonomy::for_stage(stage).expect("pipeline stage");
            let aliases = schema.aliases.get(&stage).unwrap_or(&no_aliases);
            to_dataset_with(&table, &features, col, &tax, aliases, &tokens)
        })
        .collect::<Result<_, _>>()?;
    let missing = raw[0].missing_per_column();
    let cleaned: Vec<Dataset> = raw
        .iter()
        .map(|d| impute_missing(d, strategy))
        .collect::<Result<_, _>>()?;
    let clean_secs = secs(t);

    let t = Instant::now();
    let mut out = ctx.outputs();
    let mut split = serde_json::Value::Null;
    match test_fraction {
        Some(frac) => {
            let seed = ctx.seed()?;
            // stratify on the finest labelled stage
            let plan = stratified_split(cleaned.last().expect("at least one stage"), frac, seed)?;
            let part = |idx: &[usize]| cleaned.iter().map(|d| d.subset_rows(idx)).collect::<Vec<_>>();
            out.write("prepared_train.csv", prepared_csv(&part(&plan.train_indices))?)?;
            out.write("prepared_test.csv", prepared_csv(&part(&plan.test_indices))?)?;
            split = json!({
                "seed": seed,
                "test_fraction": frac,
                "stratified_on": cleaned.last().unwrap().taxonomy().stage(),
                "train_rows": plan.train_indices.len(),
                "test_rows": plan.test_indices.len(),
            });
        }
        None => {
            out.write("prepared.csv", prepared_csv(&cleaned)?)?;
        }
    }
    let write_secs = secs(t);

    let rows_out = cleaned[0].n_samples();
    let manifest = json!({
        "source": input,
        "schema": schema_path,
        "rows_in": table.n_rows(),
        "rows_out": rows_out,
        "dropped_rows": table.n_rows() - rows_out,
        "n_features": features.len(),
        "feature_columns": features,
        "impute": strategy,
        "missing_per_column": features.iter().cloned().zip(missing).collect::<BTreeMap<_, _>>(),
        "label_histogram": cleaned
            .iter()
            .map(|d| (d.taxonomy().stage().key(), class_histogram(d)))
            .collect::<BTreeMap<_, _>>(),
        "split": split,
        "timing": {"load_secs": load_secs, "clean_secs": clean_secs, "write_secs": write_secs},
    });
    out.write_json("prepared.manifest.json", &manifest)?;
    finish(out);
    Ok(())
}

pub fn rank(ctx: &Context, data: Option<PathBuf>, stage: &str, method: &str, bins: usize) -> CliResult<()> {
    let stage = parse_stage(stage)?;
    let methods = parse_methods(method)?;
    let prepared = ctx.load(&ctx.data(data)?)?;
    let d = impute_missing(prepared.stage(stage)?, ImputeStrategy::MedianPerFeature)?;
    let mut out = ctx.outputs();
    for m in methods {
        let ranking = rank_features(&d, m, bins)?;
        let mut buf = Vec::new();
        write_ranking_csv(&ranking, &mut buf).map_err(|e| CliError::Input(format!("writing ranking: {e}")))?;
        out.write(&format!("ranking_{}_{}.csv", stage.key(), m.name()), buf)?;
    }
    finish(out);
    Ok(())
}

/// Model file written by `train`: one stage plus the column names it was fitted on.
#[derive(Debug, Serialize, Deserialize)]
struct StageModelFile {
    format_version: u32,
    feature_names: Vec<String>,
    artifacts: StageArtifacts,
}

fn metrics_summary(r: &MetricsReport) -> serde_json::Value {
    json!({
        "accuracy": r.accuracy,
        "macro_f1": r.macro_f1,
        "macro_precision": r.macro_precision,
        "macro_recall": r.macro_recall,
    })
}

pub fn train(ctx: &Context, data: Option<PathBuf>, stage: &str, learner: Option<&str>) -> CliResult<()> {
    let stage = parse_stage(stage)?;
    let seed = ctx.seed()?;
    let spec = ctx.stage_spec(stage, learner)?;

    let t = Instant::now();
    let prepared = ctx.load(&ctx.data(data)?)?;
    let d = prepared.stage(stage)?;
    let load_secs = secs(t);

    let (artifacts, timings) = train_stage_timed(d, &spec, seed)?;
    let t = Instant::now();
    let report = evaluate_stage(&artifacts, d)?;
    let eval_secs = secs(t);

    let selected: Vec<&str> = artifacts
        .features
        .iter()
        .map(|&j| prepared.feature_names[j].as_str())
        .collect();
    let manifest = json!({
        "seed": seed,
        "stage": stage,
        "algorithm": spec.learner.kind().display_name(),
        "learner": spec.learner,
        "selection": spec.selection,
        "normalization": spec.normalization,
        "impute": spec.impute,
        "n_rows": d.n_samples(),
        "n_features": d.n_features(),
        "selected_features": selected,
        "training_metrics": metrics_summary(&report),
        "timing": {
            "load_secs": load_secs,
            "impute_secs": timings.impute_secs,
            "normalize_secs": timings.normalize_secs,
            "select_secs": timings.select_secs,
            "fit_secs": timings.fit_secs,
            "eval_secs": eval_secs,
        },
    });
    let file = StageModelFile {
        format_version: STAGE_MODEL_VERSION,
        feature_names: prepared.feature_names.clone(),
        artifacts,
    };
    let mut out = ctx.outputs();
    out.write(&format!("model_{}.json", stage.key()), persist::to_json_string(&file)? + "\n")?;
    out.write_json(&format!("model_{}.manifest.json", stage.key()), &manifest)?;
    finish(out);
    println!("training accuracy {:.6}", report.accuracy);
    Ok(())
}

fn check_columns(expected: &[String], actual: &[String]) -> CliResult<()> {
    if expected.len() != actual.len() {
        return Err(CliError::Input(format!(
            "model expects {} feature columns, data has {}",
            expected.len(),
            actual.len()
        )));
    }
    if expected != actual {
        log::warn!("feature column names differ from the model's; matching by position");
    }
    Ok(())
}

fn comparison_row(artifacts: &StageArtifacts, report: MetricsReport) -> ComparisonRow {
    ComparisonRow {
        algorithm: artifacts.model.kind().display_name().to_string(),
        stage: artifacts.spec.stage,
        report,
    }
}

pub fn eval(ctx: &Context, model: &Path, data: Option<PathBuf>) -> CliResult<()> {
    let text = std::fs::read_to_string(model).map_err(|e| CliError::io(model, e))?;
    let file: StageModelFile = persist::from_json_str(&text, STAGE_MODEL_VERSION)?;
    let stage = file.artifacts.spec.stage;
    let data = data
        .or_else(|| ctx.cfg.test_data.clone())
        .or_else(|| ctx.cfg.data.clone())
        .ok_or_else(|| CliError::Config("no data file: pass --data or set \"test_data\" in the config".into()))?;
    let mut cols = label_columns(&ctx.cfg);
    for (s, col) in &mut cols {
        if *s == stage {
            *col = file.artifacts.spec.label_column();
        }
    }
    let prepared = prepared::load(&data, &cols)?;
    check_columns(&file.feature_names, &prepared.feature_names)?;
    let report = evaluate_stage(&file.artifacts, prepared.stage(stage)?)?;

    let mut out = ctx.outputs();
    out.write_json(
        &format!("metrics_{}.json", stage.key()),
        &json!({
            "algorithm": file.artifacts.model.kind().display_name(),
            "stage": stage,
            "report": report,
        }),
    )?;
    let accuracy = report.accuracy;
    let table = emit_comparison(&[comparison_row(&file.artifacts, report)], ctx.format);
    out.write(&format!("comparison_{}.{}", stage.key(), ctx.format.extension()), table)?;
    finish(out);
    println!("accuracy {accuracy:.6}");
    Ok(())
}

pub fn cv(
    ctx: &Context,
    data: Option<PathBuf>,
    stage: &str,
    learner: Option<&str>,
    folds: Option<usize>,
) -> CliResult<()> {
    let stage = parse_stage(stage)?;
    let seed = ctx.seed()?;
    let spec = ctx.stage_spec(stage, learner)?;
    let k = folds.or(ctx.cfg.folds).unwrap_or(5);
    let prepared = ctx.load(&ctx.data(data)?)?;
    let result = cross_validate(prepared.stage(stage)?, &spec, k, seed)?;

    let mut out = ctx.outputs();
    for f in &result.folds {
        out.write_json(
            &format!("cv_{}_fold{}.json", stage.key(), f.fold + 1),
            &json!({
                "fold": f.fold + 1,
                "train_rows": f.plan.train_indices.len(),
                "test_rows": f.plan.test_indices.len(),
                "report": f.report,
            }),
        )?;
    }
    out.write_json(
        &format!("cv_{}_summary.json", stage.key()),
        &json!({
            "stage": stage,
            "algorithm": spec.learner.kind().display_name(),
            "learner": spec.learner,
            "folds": k,
            "seed": seed,
            "summary": result.summary,
            "fold_accuracy": result.folds.iter().map(|f| f.report.accuracy).collect::<Vec<_>>(),
        }),
    )?;
    finish(out);
    println!(
        "accuracy {:.6} +/- {:.6}",
        result.summary.accuracy.mean, result.summary.accuracy.std
    );
    Ok(())
}

pub fn pipeline_train(
    ctx: &Context,
    data: Option<PathBuf>,
    routing: Option<Routing>,
    gate: Option<String>,
) -> CliResult<()> {
    let seed = ctx.seed()?;
    let routing = routing.or(ctx.cfg.routing).unwrap_or(Routing::Cascade);
    let gate = gate
        .or_else(|| ctx.cfg.cascade_gate.clone())
        .unwrap_or_else(|| DEFAULT_CASCADE_GATE.to_string());
    let specs: Vec<StageSpec> = Stage::PIPELINE
        .iter()
        .map(|&s| ctx.stage_spec(s, None))
        .collect::<CliResult<_>>()?;

    let t = Instant::now();
    let prepared = ctx.load(&ctx.data(data)?)?;
    let datasets: Vec<Dataset> = Stage::PIPELINE
        .iter()
        .map(|&s| prepared.stage(s).cloned())
        .collect::<CliResult<_>>()?;
    let load_secs = secs(t);

    let (model, timings) = train_pipeline_timed(&datasets, &specs, routing, &gate, seed)?;
    let stages: Vec<serde_json::Value> = model
        .stages
        .iter()
        .map(|a| {
            json!({
                "stage": a.spec.stage,
                "algorithm": a.model.kind().display_name(),
                "learner": a.spec.learner,
                "selected_features": a.features.iter().map(|&j| &model.feature_names[j]).collect::<Vec<_>>(),
            })
        })
        .collect();
    let manifest = json!({
        "seed": seed,
        "routing": routing,
        "cascade_gate": gate,
        "n_rows": datasets[0].n_samples(),
        "stages": stages,
        "timing": {"load_secs": load_secs, "stages": timings},
    });
    let mut out = ctx.outputs();
    out.write("pipeline.json", model.to_json()? + "\n")?;
    out.write_json("pipeline.manifest.json", &manifest)?;
    finish(out);
    Ok(())
}

fn index_of(tax: &ClassTaxonomy, name: &str) -> usize {
    tax.index_of(name).expect("prediction names come from the taxonomy")
}

pub fn pipeline_eval(ctx: &Context, model: &Path, data: Option<PathBuf>, routing: Option<Routing>) -> CliResult<()> {
    let text = std::fs::read_to_string(model).map_err(|e| CliError::io(model, e))?;
    let mut model = PipelineModel::from_json(&text)?;
    if let Some(r) = routing {
        model.routing = r;
    }
    let data = data
        .or_else(|| ctx.cfg.test_data.clone())
        .or_else(|| ctx.cfg.data.clone())
        .ok_or_else(|| CliError::Config("no data file: pass --data or set \"test_data\" in the config".into()))?;
    let cols: Vec<(Stage, String)> = model.stages.iter().map(|a| (a.spec.stage, a.spec.label_column())).collect();
    let prepared = prepared::load(&data, &cols)?;
    check_columns(&model.feature_names, &prepared.feature_names)?;
    let datasets: Vec<&Dataset> = Stage::PIPELINE
        .iter()
        .map(|&s| prepared.stage(s))
        .collect::<CliResult<_>>()?;
    if datasets[0].has_missing() {
        return Err(CliError::Input(format!(
            "{} has missing cells; run `dtc prep` first",
            data.display()
        )));
    }
    let x = prepared.features();
    let independent = model.clone().with_routing(Routing::Independent).predict_routed(x)?;
    let cascade = model.clone().with_routing(Routing::Cascade).predict_routed(x)?;

    // the comparison table always scores every stage on every row
    let (rows, stagewise) = stage_reports(&model, &datasets, &independent)?;
    let mut metrics = json!({
        "routing": model.routing,
        "cascade_gate": model.cascade_gate,
        "stagewise": stagewise,
    });
    if model.routing == Routing::Cascade {
        metrics["cascade"] = stage_reports(&model, &datasets, &cascade)?.1.into();
    }
    let mut paths: BTreeMap<String, usize> = BTreeMap::new();
    for r in &cascade {
        *paths.entry(r.path()).or_default() += 1;
    }

    let mut out = ctx.outputs();
    let ext = ctx.format.extension();
    out.write(&format!("pipeline_comparison.{ext}"), emit_comparison(&rows, ctx.format))?;
    out.write_json("pipeline_metrics.json", &metrics)?;
    out.write(&format!("pipeline_paths.{ext}"), render_paths(&paths, ctx.format))?;
    finish(out);
    Ok(())
}

/// Metrics of each stage over the rows where `routed` carries a prediction for it.
fn stage_reports(
    model: &PipelineModel,
    datasets: &[&Dataset],
    routed: &[RoutedPrediction],
) -> CliResult<(Vec<ComparisonRow>, Vec<serde_json::Value>)> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (i, (artifacts, d)) in model.stages.iter().zip(datasets).enumerate() {
        let tax = artifacts.taxonomy();
        let (truth, predicted): (Vec<usize>, Vec<usize>) = routed
            .iter()
            .zip(d.labels())
            .filter_map(|(r, &y)| {
                let name = match i {
                    0 => Some(&r.stage1),
                    1 => r.stage2.as_ref(),
                    _ => r.stage3.as_ref(),
                };
                name.map(|n| (y, index_of(tax, n)))
            })
            .unzip();
        if truth.is_empty() {
            log::warn!("no rows reached {}; skipping its metrics", artifacts.spec.stage);
            continue;
        }
        let report = evaluate_labels(&truth, &predicted, tax)?;
        reports.push(json!({
            "stage": artifacts.spec.stage,
            "algorithm": artifacts.model.kind().display_name(),
            "evaluated_rows": truth.len(),
            "report": report,
        }));
        rows.push(comparison_row(artifacts, report));
    }
    Ok((rows, reports))
}

fn render_paths(paths: &BTreeMap<String, usize>, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut s = String::from("path,count\n");
            for (p, c) in paths {
                s.push_str(&format!("{p},{c}\n"));
            }
            s
        }
        ReportFormat::Json => {
            let rows: Vec<_> = paths.iter().map(|(p, c)| json!({"path": p, "count": c})).collect();
            serde_json::to_string_pretty(&rows).expect("json values serialize") + "\n"
        }
        ReportFormat::Text => {
            let width = paths.keys().map(|p| p.chars().count()).max().unwrap_or(0).max(4);
            let mut s = format!("{:<width$}  count\n", "path");
            for (p, c) in paths {
                s.push_str(&format!("{p:<width$}  {c:>5}\n"));
            }
            s
        }
    }
}

pub fn report(
    ctx: &Context,
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    stages: &[String],
    learners: &[String],
) -> CliResult<()> {
    let seed = ctx.seed()?;
    let train_data = ctx.load(&ctx.data(train)?)?;
    let test_path = test.or_else(|| ctx.cfg.test_data.clone());

    let stages: Vec<Stage> = if stages.is_empty() {
        train_data.stages.iter().map(|d| d.taxonomy().stage()).collect()
    } else {
        stages.iter().map(|s| parse_stage(s)).collect::<CliResult<_>>()?
    };
    let specs: Vec<LearnerSpec> = if !learners.is_empty() {
        learners
            .iter()
            .map(|l| parse_kind(l).map(LearnerSpec::default_for))
            .collect::<CliResult<_>>()?
    } else if !ctx.cfg.learners.is_empty() {
        ctx.cfg.learners.clone()
    } else {
        ModelKind::ALL.iter().map(|&k| LearnerSpec::default_for(k)).collect()
    };

    // hold-out split of the training file when no test file is given
    let (train_sets, test_sets): (Vec<Dataset>, Vec<Dataset>) = match &test_path {
        Some(p) => {
            let test_data = ctx.load(p)?;
            check_columns(&train_data.feature_names, &test_data.feature_names)?;
            let pick = |data: &Prepared| {
                stages
                    .iter()
                    .map(|&s| data.stage(s).cloned())
                    .collect::<CliResult<Vec<_>>>()
            };
            (pick(&train_data)?, pick(&test_data)?)
        }
        None => {
            let frac = ctx.cfg.test_fraction.unwrap_or(0.2);
            let finest = train_data.stages.last().expect("at least one stage");
            let plan = stratified_split(finest, frac, seed)?;
            let mut tr = Vec::new();
            let mut te = Vec::new();
            for &s in &stages {
                let d = train_data.stage(s)?;
                tr.push(d.subset_rows(&plan.train_indices));
                te.push(d.subset_rows(&plan.test_indices));
            }
            (tr, te)
        }
    };

    let mut rows = Vec::new();
    let mut details = Vec::new();
    for ((&stage, train_d), test_d) in stages.iter().zip(&train_sets).zip(&test_sets) {
        let stage_seed = seed.wrapping_add(stage.index().expect("pipeline stage") as u64);
        for (i, learner) in specs.iter().enumerate() {
            let mut spec = ctx.stage_spec(stage, None)?;
            spec.learner = learner.clone();
            let (artifacts, timings) = train_stage_timed(train_d, &spec, stage_seed)?;
            let t = Instant::now();
            let report = evaluate_stage(&artifacts, test_d)?;
            let eval_secs = secs(t);
            let kind = learner.kind();
            let mut algorithm = kind.display_name().to_string();
            if specs.iter().filter(|s| s.kind() == kind).count() > 1 {
                algorithm = format!("{algorithm} #{}", i + 1);
            }
            details.push(json!({
                "algorithm": algorithm,
                "stage": stage,
                "learner": learner,
                "train_rows": train_d.n_samples(),
                "test_rows": test_d.n_samples(),
                "report": report,
                "timing": {"fit_secs": timings.fit_secs, "select_secs": timings.select_secs, "eval_secs": eval_secs},
            }));
            rows.push(ComparisonRow {
                algorithm,
                stage,
                report,
            });
        }
    }
    let mut out = ctx.outputs();
    out.write(&format!("comparison.{}", ctx.format.extension()), emit_comparison(&rows, ctx.format))?;
    let (timing, metrics): (Vec<_>, Vec<_>) = details
        .into_iter()
        .map(|mut d| {
            let timing = json!({"algorithm": d["algorithm"], "stage": d["stage"], "timing": d["timing"].take()});
            d.as_object_mut().unwrap().remove("timing");
            (timing, d)
        })
        .unzip();
    out.write_json("comparison_metrics.json", &metrics)?;
    out.write_json("comparison.manifest.json", &json!({"seed": seed, "timing": timing}))?;
    finish(out);
    Ok(())
}
