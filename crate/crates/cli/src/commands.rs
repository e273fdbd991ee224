use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::{json, Value};
use strokescreen::bundle::ModelBundle;
use strokescreen::cohort::{cleanse as cleanse_cohort, ingest_csv, split_stratified, IngestReport, LABEL_COLUMN};
use strokescreen::cspp::label_cohort;
use strokescreen::evaluation::{
    classification_report, evaluate as evaluate_model, group_probability_tsv, missing_sweep, rfe as run_rfe,
    risk_group_probability,
};
use strokescreen::explain::{explain_model, permutation_importance, shap_summary_export};
use strokescreen::logit::{fit_logit, relabel_binary, select_features};
use strokescreen::model::{ModelKind, ModelSpec};
use strokescreen::synth::{generate_cohort, CalibrationTargets};
use strokescreen::{Classifier, Cohort, Error, FeatureSchema, LabelKind, Model};

use crate::config::Config;
use crate::{Common, Kind, Method, Outcome};

/// Rows kept in a logistic bundle as the explanation background.
const BACKGROUND_ROWS: usize = 50;

fn out_file(common: &Common) -> anyhow::Result<&Path> {
    let path = common.out.as_deref().context("--out is required")?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(path)
}

fn out_dir(common: &Common) -> anyhow::Result<PathBuf> {
    let dir = common.out.clone().context("--out is required")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn save_csv(c: &Cohort, path: &Path) -> anyhow::Result<()> {
    c.save_csv(path).with_context(|| format!("writing {}", path.display()))
}

/// Read a CSV whose header is any subset of `base` (plus an optional label
/// column). Columns keep the order of `base`.
fn read_cohort(path: &Path, base: &FeatureSchema) -> anyhow::Result<(Cohort, IngestReport)> {
    let ctx = || format!("reading {}", path.display());
    let mut header = csv_header(path).with_context(ctx)?;
    header.retain(|h| h != LABEL_COLUMN);
    let mut columns = Vec::with_capacity(header.len());
    for h in &header {
        columns.push(base.index_of(h).ok_or_else(|| Error::UnknownColumn(h.clone())).with_context(ctx)?);
    }
    columns.sort_unstable();
    Ok(ingest_csv(path, &base.select(&columns)).with_context(ctx)?)
}

fn csv_header(path: &Path) -> Result<Vec<String>, Error> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

/// Columns the bundle's model reads, relabeled to 0/1 for logistic models.
fn bundle_view(bundle: &ModelBundle, path: &Path) -> anyhow::Result<(Cohort, Cohort)> {
    let (c, _) = read_cohort(path, &bundle.schema)?;
    let names: Vec<&str> = bundle.model_features.iter().map(String::as_str).collect();
    let view = c.select_named(&names)?;
    let model_view = match (&bundle.model, view.labels()) {
        (Model::Logit(_), Some(_)) => relabel_binary(&view)?,
        _ => view.clone(),
    };
    Ok((view, model_view))
}

fn load_bundle(path: &Path) -> anyhow::Result<ModelBundle> {
    ModelBundle::load(path).with_context(|| format!("loading bundle {}", path.display()))
}

fn model_kind(kind: Kind) -> ModelKind {
    match kind {
        Kind::Tree => ModelKind::Tree,
        Kind::Forest => ModelKind::Forest,
        Kind::Logit => ModelKind::Logit,
    }
}

fn model_spec(cfg: &Config, kind: Kind, seed: u64) -> ModelSpec {
    let mut spec = ModelSpec::new(model_kind(kind));
    spec.train = cfg.train.clone();
    spec.train.seed = seed;
    spec.logit = cfg.logit.clone();
    spec
}

pub fn ingest(common: &Common, cfg: &Config, input: &Path) -> anyhow::Result<()> {
    let (c, report) = read_cohort(input, &cfg.schema())?;
    save_csv(&c, out_file(common)?)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

pub fn cleanse(common: &Common, cfg: &Config, input: &Path) -> anyhow::Result<()> {
    let (c, _) = read_cohort(input, &cfg.schema())?;
    let (clean, report) = cleanse_cohort(&c, &cfg.cleanse);
    save_csv(&clean, out_file(common)?)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

pub fn label(common: &Common, cfg: &Config, input: &Path) -> anyhow::Result<()> {
    let (c, _) = read_cohort(input, &cfg.schema())?;
    let labeled = label_cohort(&c, &cfg.cspp)?;
    save_csv(&labeled, out_file(common)?)?;
    Ok(())
}

pub fn synth(common: &Common, n: usize, outcome: Outcome, targets: Option<&Path>) -> anyhow::Result<()> {
    let targets = match targets {
        Some(p) => CalibrationTargets::load(p).with_context(|| format!("loading targets {}", p.display()))?,
        None => CalibrationTargets::default(),
    };
    let s = generate_cohort(&targets, n, common.seed)?;
    let c = match outcome {
        Outcome::Risk => s.cohort,
        Outcome::Stroke => s.stroke_cohort()?,
    };
    save_csv(&c, out_file(common)?)
}

/// Evenly spaced rows, so the background does not depend on a random draw.
fn background_rows(c: &Cohort) -> Vec<Vec<f64>> {
    let n = c.n_rows();
    let k = n.min(BACKGROUND_ROWS);
    (0..k).map(|i| c.row(i * n / k).to_vec()).collect()
}

fn class_counts(c: &Cohort) -> anyhow::Result<Value> {
    let labels = c.require_labels()?;
    let mut counts = vec![0usize; labels.n_classes()];
    for &v in &labels.values {
        counts[v as usize] += 1;
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, n)| (labels.class_name(k as u32), json!(n)))
        .collect::<serde_json::Map<_, _>>()
        .into())
}

pub fn train(common: &Common, cfg: &Config, input: &Path, kind: Kind, holdout: bool) -> anyhow::Result<()> {
    let dir = out_dir(common)?;
    let (data, ingest) = read_cohort(input, &cfg.schema())?;
    data.require_labels()?;
    let schema = data.schema().clone();
    let data = if holdout {
        let (train, test) = split_stratified(&data, cfg.test_fraction.unwrap_or(0.2), common.seed)?;
        save_csv(&test, &dir.join("holdout.csv"))?;
        train
    } else {
        data
    };
    let spec = model_spec(cfg, kind, common.seed);
    let mut report = json!({
        "kind": spec.kind,
        "seed": common.seed,
        "ingest": ingest,
        "rows": data.n_rows(),
    });

    let (model, training, background) = if kind == Kind::Logit {
        let (selected, selection) = select_features(&relabel_binary(&data)?, &cfg.selection)?;
        let (lm, fit) = fit_logit(&selected, &cfg.logit)?;
        write_text(&dir.join("coefficients.tsv"), &fit.to_tsv())?;
        report["selection"] = serde_json::to_value(&selection)?;
        report["fit"] = serde_json::to_value(&fit)?;
        let bg = background_rows(&selected);
        (Model::Logit(lm), selected, bg)
    } else {
        (spec.fit(&data)?, data, Vec::new())
    };

    let predicted = model.predict_cohort(&training);
    let labels = training.require_labels()?;
    let y_true: Vec<usize> = labels.values.iter().map(|&v| v as usize).collect();
    let names = labels.kind.class_names();
    report["class_counts"] = class_counts(&training)?;
    report["resubstitution"] = serde_json::to_value(classification_report(&y_true, &predicted, &names)?)?;

    let mut bundle = ModelBundle::new(model, schema, &training, cfg.cleanse.clone(), cfg.cspp.clone(), spec, common.seed)?;
    if !background.is_empty() {
        bundle = bundle.with_background(background)?;
    }
    report["model_features"] = json!(bundle.model_features);
    report["data_fingerprint"] = json!(bundle.provenance.data_fingerprint);
    bundle.save(&dir.join("model.json"))?;
    write_json(&dir.join("training_report.json"), &report)
}

pub fn evaluate(common: &Common, _cfg: &Config, model: &Path, input: &Path) -> anyhow::Result<()> {
    let dir = out_dir(common)?;
    let bundle = load_bundle(model)?;
    let (view, data) = bundle_view(&bundle, input)?;
    let report = evaluate_model(&bundle.model, &data)?;
    write_json(&dir.join("report.json"), &report)?;
    write_text(&dir.join("report.tsv"), &report.to_tsv())?;
    if let (Model::Logit(lm), Some(labels)) = (&bundle.model, view.labels()) {
        if labels.kind != LabelKind::Binary {
            let groups = risk_group_probability(lm, &view)?;
            write_text(&dir.join("group_probability.tsv"), &group_probability_tsv(&groups))?;
        }
    }
    Ok(())
}

pub fn explain(
    common: &Common,
    cfg: &Config,
    model: &Path,
    input: &Path,
    method: Method,
    row: Option<usize>,
) -> anyhow::Result<()> {
    let dir = out_dir(common)?;
    let bundle = load_bundle(model)?;
    let (_, data) = bundle_view(&bundle, input)?;
    let names = data.schema().names();
    if row.is_some() && method != Method::Shap {
        bail!("--row applies to --method shap only");
    }
    match method {
        Method::Mdi => {
            let imp = bundle
                .model
                .mdi_importance()
                .context("MDI importance needs a tree or forest bundle")?;
            let mut tsv = String::from("feature\timportance\n");
            for (f, v) in names.iter().zip(&imp) {
                tsv.push_str(&format!("{f}\t{v}\n"));
            }
            write_text(&dir.join("importance.tsv"), &tsv)
        }
        Method::Permutation => {
            let p = &cfg.permutation;
            let report = permutation_importance(&bundle.model, &data, p.metric, p.repetitions, common.seed)?;
            write_text(&dir.join("permutation.tsv"), &report.to_tsv())
        }
        Method::Shap => {
            let target = bundle.model.n_classes() - 1;
            match (row, &bundle.model) {
                (Some(i), _) => {
                    if i >= data.n_rows() {
                        bail!("row {i} out of range: input has {} rows", data.n_rows());
                    }
                    let background = bundle.background_cohort()?;
                    let x = data.row(i);
                    let e = explain_model(&bundle.model, x, target, background.as_ref())?;
                    let features: Vec<Value> = names
                        .iter()
                        .zip(x)
                        .zip(&e.contributions)
                        .map(|((f, v), phi)| json!({ "feature": f, "value": v, "contribution": phi }))
                        .collect();
                    write_json(
                        &dir.join("explanation.json"),
                        &json!({
                            "row": i,
                            "class": bundle.class_names[target],
                            "base_value": e.base_value,
                            "output": e.output,
                            "features": features,
                        }),
                    )
                }
                (None, Model::Tree(t)) => write_summary(&dir, shap_summary_export(t, &data, target)?),
                (None, Model::Forest(f)) => write_summary(&dir, shap_summary_export(f, &data, target)?),
                (None, Model::Logit(_)) => bail!("logistic SHAP needs --row"),
            }
        }
    }
}

fn write_summary(dir: &Path, s: strokescreen::explain::ShapSummary) -> anyhow::Result<()> {
    write_text(&dir.join("shap_records.tsv"), &s.records_tsv())?;
    write_text(&dir.join("shap_ranking.tsv"), &s.ranking_tsv())
}

pub fn sweep(common: &Common, cfg: &Config, input: &Path, test: &Path, kind: Kind) -> anyhow::Result<()> {
    let dir = out_dir(common)?;
    let (train, _) = read_cohort(input, &cfg.schema())?;
    let (test, _) = read_cohort(test, &cfg.schema())?;
    let mut sweep_cfg = cfg.sweep.clone();
    sweep_cfg.seed = common.seed;
    let result = missing_sweep(&model_spec(cfg, kind, common.seed), &train, &test, &sweep_cfg)?;
    write_text(&dir.join("sweep.tsv"), &result.to_tsv())?;
    write_json(&dir.join("sweep.json"), &result)
}

pub fn rfe(
    common: &Common,
    cfg: &Config,
    input: &Path,
    test: &Path,
    kind: Kind,
    target: usize,
    plateau_tolerance: f64,
) -> anyhow::Result<()> {
    let dir = out_dir(common)?;
    let (train, _) = read_cohort(input, &cfg.schema())?;
    let (test, _) = read_cohort(test, &cfg.schema())?;
    let trace = run_rfe(&model_spec(cfg, kind, common.seed), &train, &test, target)?;
    write_text(&dir.join("rfe.tsv"), &trace.to_tsv())?;
    write_json(
        &dir.join("rfe.json"),
        &json!({
            "plateau_tolerance": plateau_tolerance,
            "plateau_features": trace.plateau_features(plateau_tolerance),
            "removal_order": trace.removal_order(),
            "trace": trace,
        }),
    )
}
