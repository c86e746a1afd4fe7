use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context as _};
use gaitlr_core::association::{covariate_selection, write_coefficients_csv, SelectionReport};
use gaitlr_core::data::{
    impute_missing, load_population, load_repeated, read_dataset, split_composite_features, write_dataset, FeatureSchema,
    PopulationDataset, RepeatedDataset,
};
use gaitlr_core::lr::{LrModel, WithinProvenance, PRESETS};
use gaitlr_core::pca::{write_scree_csv, Projector};
use gaitlr_core::pipeline::{
    comparison_scores, evaluate, fit_models, fixed_within, prepare, read_comparisons, resolve_within, Evaluation, FitOutput, FittedModel,
    PipelineConfig, PreparedData, WithinSource,
};
use gaitlr_core::polychoric::polychoric_matrix;
use gaitlr_core::synth::{generate_population, generate_repeated, Scenario};
use gaitlr_core::validation::{
    default_prior_grid, ece_curve, enumerate_comparisons, misspecification_grid, null_crossings, tippett as tippett_curve,
    write_ece_csv, write_grid_csv, write_histogram_csv, write_rates_csv, write_tippett_csv, EceCurve, GridCell, GridInput,
    LabelledLr, TippettCurve,
};
use serde_json::{json, Value};

use crate::output::{file_sha256, OutputDir};
use crate::svg::{line_plot, Series};
use crate::{Context, Failure, StageExt};

const MODEL_FILE: &str = "model.json";
const SCHEMA_FILE: &str = "schema.json";
const COMPARISONS_FILE: &str = "comparisons.csv";

fn require(paths: &[&Path]) -> Result<(), Failure> {
    for p in paths {
        if !p.exists() {
            return Err(Failure::Config(anyhow!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn pipeline_inputs(cfg: &PipelineConfig) -> Vec<PathBuf> {
    let mut v = vec![cfg.schema.clone(), cfg.population.clone(), cfg.repeated.clone()];
    v.extend(cfg.repeated_alt.clone());
    if let WithinSource::File { file } = &cfg.within_variance {
        v.push(file.clone());
    }
    v
}

fn write_manifest(ctx: &Context, out: &mut OutputDir, file: &str, command: &str, inputs: &[PathBuf], summary: Value) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let inputs: Vec<Value> = inputs
        .iter()
        .filter(|p| p.exists())
        .map(|p| Ok(json!({ "path": p.display().to_string(), "sha256": file_sha256(p)? })))
        .collect::<anyhow::Result<_>>()
        .stage("write")?;
    let seed = cfg.imputation_seed();
    let manifest = json!({
        "tool": "gaitlr",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_sha256": ctx.config_sha256,
        "config": cfg,
        "overrides": ctx.overrides,
        "seeds": {
            "imputation": seed,
            "imputation_replicates": format!("{seed}..{}", seed.wrapping_add(cfg.imputation.n_reps as u64 - 1)),
            "scenario": cfg.seed.unwrap_or(seed),
        },
        "inputs": inputs,
        "outputs": out.outputs(),
        "summary": summary,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    out.write(file, text.as_bytes()).stage("write")
}

fn open_output(cfg: &PipelineConfig) -> Result<OutputDir, Failure> {
    OutputDir::create(&cfg.output_dir).stage("write")
}

fn scree_svg(eigenvalues: &[f64]) -> String {
    let points = eigenvalues.iter().enumerate().map(|(j, &l)| ((j + 1) as f64, l)).collect();
    line_plot("Scree plot", "component", "eigenvalue", &[Series { label: "eigenvalue", color: "black", dashed: false, points }])
}

fn tippett_svg(curve: &TippettCurve) -> String {
    let pts = |v: &[f64]| curve.thresholds.iter().copied().zip(v.iter().copied()).collect();
    line_plot(
        "Tippett plot",
        "log10 LR threshold",
        "proportion of LRs above threshold",
        &[
            Series { label: "same source", color: "#1f77b4", dashed: false, points: pts(&curve.same) },
            Series { label: "different source", color: "#d62728", dashed: false, points: pts(&curve.different) },
        ],
    )
}

fn ece_svg(curve: &EceCurve, extra: &[(&str, &[f64])]) -> String {
    let pts = |v: &[f64]| curve.log10_prior_odds.iter().copied().zip(v.iter().copied()).collect();
    let mut series = vec![
        Series { label: "observed", color: "#d62728", dashed: false, points: pts(&curve.observed) },
        Series { label: "null (LR = 1)", color: "black", dashed: true, points: pts(&curve.null) },
    ];
    if let Some(c) = &curve.calibrated {
        series.push(Series { label: "PAV calibrated", color: "#1f77b4", dashed: true, points: pts(c) });
    }
    let colors = ["#2ca02c", "#9467bd"];
    for ((label, values), color) in extra.iter().zip(colors) {
        series.push(Series { label, color, dashed: false, points: pts(values) });
    }
    line_plot("Empirical cross-entropy", "prior log10 odds", "ECE (bits)", &series)
}

fn write_fit(out: &mut OutputDir, data: &PreparedData, fit: &FitOutput) -> Result<(), Failure> {
    let model = &fit.model;
    let json = serde_json::to_string_pretty(model).expect("model serializes") + "\n";
    out.write(MODEL_FILE, json.as_bytes()).stage("write")?;
    out.write(SCHEMA_FILE, (data.schema.to_json() + "\n").as_bytes()).stage("write")?;
    let eigen = model.projector.eigenvalues();
    out.write_with("scree.csv", |w| write_scree_csv(eigen, w)).stage("write")?;
    out.write("scree.svg", scree_svg(eigen).as_bytes()).stage("write")?;

    let mut text = String::from("component,variance,replicate_sd,source\n");
    let source = provenance_label(&model.lr.within.provenance);
    for (j, v) in model.lr.within.variances.iter().enumerate() {
        let sd = fit.within_summary.as_ref().map_or(String::new(), |s| format!("{:.10}", s.sd[j]));
        text.push_str(&format!("{},{v:.10},{sd},{}\n", j + 1, csv_field(&source)));
    }
    out.write("within_variance.csv", text.as_bytes()).stage("write")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn provenance_label(p: &WithinProvenance) -> String {
    match p {
        WithinProvenance::Estimated { source, individuals, observations } => {
            format!("estimated from {source} ({individuals} individuals, {observations} observations)")
        }
        WithinProvenance::Preset { name } => format!("preset {name}"),
        WithinProvenance::Explicit => "explicit values".into(),
    }
}

fn write_evaluation(out: &mut OutputDir, ev: &Evaluation) -> Result<Value, Failure> {
    out.write_with(COMPARISONS_FILE, |w| ev.collection.write_csv(w)).stage("write")?;
    let rows: Vec<(String, _)> = ev.rates.iter().enumerate().map(|(k, r)| (format!("M{}", k + 1), *r)).collect();
    out.write_with("rates.csv", |w| write_rates_csv(&rows, w)).stage("write")?;
    out.write_with("tippett.csv", |w| write_tippett_csv(&ev.tippett, w)).stage("write")?;
    out.write("tippett.svg", tippett_svg(&ev.tippett).as_bytes()).stage("write")?;
    out.write_with("ece.csv", |w| write_ece_csv(&ev.ece, w)).stage("write")?;
    let s = &ev.sensitivity;
    out.write(
        "ece.svg",
        ece_svg(&ev.ece, &[("outliers removed", &s.outliers_removed.observed), ("variance doubled", &s.variance_doubled.observed)])
            .as_bytes(),
    )
    .stage("write")?;
    let mut text = String::from("log10_prior_odds,null,observed,outliers_removed,variance_doubled\n");
    for k in 0..ev.ece.log10_prior_odds.len() {
        text.push_str(&format!(
            "{:.2},{:.10},{:.10},{:.10},{:.10}\n",
            ev.ece.log10_prior_odds[k], ev.ece.null[k], ev.ece.observed[k], s.outliers_removed.observed[k], s.variance_doubled.observed[k]
        ));
    }
    out.write("ece_sensitivity.csv", text.as_bytes()).stage("write")?;
    out.write_with("histogram.csv", |w| write_histogram_csv(&ev.histogram, w)).stage("write")?;

    let crossings = null_crossings(&ev.ece);
    let removed_crossings = null_crossings(&s.outliers_removed);
    let last = ev.rates.last().expect("at least one component");
    println!(
        "{} comparisons ({} same-source, {} different-source); {} truncated",
        ev.collection.entries.len(),
        last.n_same,
        last.n_different,
        ev.collection.truncated_count()
    );
    for (label, r) in &rows {
        println!("  {label}: misleading SS {:.4}  DS {:.4}", r.same_rate(), r.different_rate());
    }
    if let Some(x) = crossings.upper {
        println!("  observed ECE exceeds the null curve above prior log10 odds {x:.3}");
    }
    Ok(json!({
        "comparisons": ev.collection.entries.len(),
        "truncated": ev.collection.truncated_count(),
        "rates": rows.iter().map(|(l, r)| json!({"M": l, "ss_rate": r.same_rate(), "ds_rate": r.different_rate()})).collect::<Vec<_>>(),
        "ece_null_crossing_upper": crossings.upper,
        "ece_null_crossing_lower": crossings.lower,
        "outliers_removed": s.removed,
        "ece_null_crossing_upper_without_outliers": removed_crossings.upper,
    }))
}

/// Loads a repeated dataset and aligns it to the prepared feature set.
fn aligned_repeated(path: &Path, cfg: &PipelineConfig, schema: &FeatureSchema) -> gaitlr_core::Result<RepeatedDataset> {
    let original = Arc::new(FeatureSchema::load(&cfg.schema)?);
    let rep = load_repeated(path, &original)?.split_composites()?;
    let names: Vec<&str> = schema.features().iter().map(|f| f.name.as_str()).collect();
    RepeatedDataset::new(rep.data().restrict_features(&names)?)
}

fn dataset_label(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

/// Every repeated dataset under both presets and under the variances
/// estimated from each dataset, at M = 1, 2 and the configured M.
fn misspecification(cfg: &PipelineConfig, model: &FittedModel, data: &PreparedData) -> gaitlr_core::Result<Vec<GridCell>> {
    let m = model.n_components;
    let mut sets = vec![(dataset_label(&cfg.repeated), data.repeated.clone())];
    if let Some(alt) = &cfg.repeated_alt {
        sets.push((dataset_label(alt), aligned_repeated(alt, cfg, &data.schema)?));
    }
    let mut components: Vec<usize> = vec![1, 2, m];
    components.retain(|&k| k <= m);
    components.dedup();

    let mut models: Vec<(String, LrModel<f64>)> = Vec::new();
    for (name, values) in PRESETS {
        if values.len() >= m {
            let within = gaitlr_core::lr::WithinModel::preset(name)?;
            models.push((name.to_string(), LrModel::new(model.lr.projector_fingerprint.clone(), model.lr.between.clone(), within)));
        }
    }
    for (label, rep) in &sets {
        let (within, _) = resolve_within(&WithinSource::default(), &model.projector, rep, cfg)?;
        models.push((format!("estimated:{label}"), LrModel::new(model.lr.projector_fingerprint.clone(), model.lr.between.clone(), within)));
    }
    let scores = sets
        .iter()
        .map(|(_, rep)| comparison_scores(cfg, model, rep))
        .collect::<gaitlr_core::Result<Vec<_>>>()?;
    let plans = scores
        .iter()
        .map(|s| enumerate_comparisons(&s.row_ids, cfg.reference_mode))
        .collect::<gaitlr_core::Result<Vec<_>>>()?;
    let inputs: Vec<GridInput<'_, f64>> = sets
        .iter()
        .zip(&scores)
        .zip(&plans)
        .map(|(((label, _), scores), plan)| GridInput { label, scores, plan })
        .collect();
    let model_refs: Vec<(&str, &LrModel<f64>)> = models.iter().map(|(n, m)| (n.as_str(), m)).collect();
    misspecification_grid(&inputs, &model_refs, &components, cfg.truncation())
}

fn write_grid(out: &mut OutputDir, cells: &[GridCell]) -> Result<Value, Failure> {
    out.write_with("misspecification.csv", |w| write_grid_csv(cells, w)).stage("write")?;
    Ok(Value::Array(
        cells
            .iter()
            .map(|c| json!({"data": c.data, "variance": c.variance, "M": c.n_components, "ss_rate": c.rates.same_rate(), "ds_rate": c.rates.different_rate()}))
            .collect(),
    ))
}

fn prepare_inputs(cfg: &PipelineConfig) -> Result<PreparedData, Failure> {
    let inputs = pipeline_inputs(cfg);
    require(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    prepare(cfg).stage("prepare")
}

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let data = prepare_inputs(cfg)?;
    let fit = fit_models(cfg, &data).stage("fit")?;
    let mut out = open_output(cfg)?;
    write_fit(&mut out, &data, &fit)?;
    let scores = comparison_scores(cfg, &fit.model, &data.repeated).stage("score")?;
    let ev = evaluate(cfg, &fit.model, &scores).stage("evaluate")?;
    let mut summary = write_evaluation(&mut out, &ev)?;
    if cfg.repeated_alt.is_some() {
        let cells = misspecification(cfg, &fit.model, &data).stage("misspecification")?;
        summary["misspecification"] = write_grid(&mut out, &cells)?;
    }
    summary["within_variance"] = json!(fit.model.lr.within);
    write_manifest(ctx, &mut out, "manifest.json", "run", &pipeline_inputs(cfg), summary)
}

pub fn fit(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let data = prepare_inputs(cfg)?;
    let fit = fit_models(cfg, &data).stage("fit")?;
    let mut out = open_output(cfg)?;
    write_fit(&mut out, &data, &fit)?;
    println!("within-individual variance: {}", provenance_label(&fit.model.lr.within.provenance));
    let summary = json!({ "within_variance": fit.model.lr.within, "projector": fit.model.projector.fingerprint() });
    write_manifest(ctx, &mut out, "manifest-fit.json", "fit", &pipeline_inputs(cfg), summary)
}

fn load_model(cfg: &PipelineConfig) -> Result<FittedModel, Failure> {
    let path = cfg.output_dir.join(MODEL_FILE);
    if !path.exists() {
        return Err(Failure::Stage("load", anyhow!("{} not found; run `gaitlr fit` first", path.display())));
    }
    let text = std::fs::read_to_string(&path).context("reading model").stage("load")?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).stage("load")
}

/// Replaces the model's within-variance when the configuration or command
/// line names a fixed source. An estimate is redone only when the repeated
/// data is at hand.
fn override_within(ctx: &Context, model: &mut FittedModel, repeated: Option<&RepeatedDataset>) -> Result<(), Failure> {
    let source = &ctx.cfg.within_variance;
    let within = match fixed_within(source).stage("fit")? {
        Some(w) => w,
        None => match repeated {
            Some(rep) if !ctx.overrides["variance_preset"].is_null() => resolve_within(source, &model.projector, rep, &ctx.cfg).stage("fit")?.0,
            _ => return Ok(()),
        },
    };
    if within.len() < model.n_components {
        return Err(Failure::Config(anyhow!("within-variance source has {} values; model uses {}", within.len(), model.n_components)));
    }
    model.lr.within = within;
    Ok(())
}

pub fn validate(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let mut model = load_model(cfg)?;
    let data = prepare_inputs(cfg)?;
    if data.schema.fingerprint() != model.schema_fingerprint {
        return Err(Failure::Stage("prepare", anyhow!("data schema {} differs from the model's {}", data.schema.fingerprint(), model.schema_fingerprint)));
    }
    override_within(ctx, &mut model, Some(&data.repeated))?;
    if let Some(m) = ctx.overrides["pcs"].as_u64() {
        if m as usize > model.n_components {
            return Err(Failure::Config(anyhow!("model has {} components; {m} requested", model.n_components)));
        }
        model.n_components = m as usize;
    }
    let mut out = open_output(cfg)?;
    let scores = comparison_scores(cfg, &model, &data.repeated).stage("score")?;
    let ev = evaluate(cfg, &model, &scores).stage("evaluate")?;
    let mut summary = write_evaluation(&mut out, &ev)?;
    let cells = misspecification(cfg, &model, &data).stage("misspecification")?;
    summary["misspecification"] = write_grid(&mut out, &cells)?;
    let mut inputs = pipeline_inputs(cfg);
    inputs.push(cfg.output_dir.join(MODEL_FILE));
    write_manifest(ctx, &mut out, "manifest-validate.json", "validate", &inputs, summary)
}

fn load_comparisons(ctx: &Context, pcs: Option<usize>) -> Result<(Vec<LabelledLr>, PathBuf), Failure> {
    let path = ctx.cfg.output_dir.join(COMPARISONS_FILE);
    if !path.exists() {
        return Err(Failure::Stage("load", anyhow!("{} not found; run `gaitlr run` or `gaitlr validate` first", path.display())));
    }
    Ok((read_comparisons(&path, pcs).stage("load")?, path))
}

pub fn ece(ctx: &Context, pcs: Option<usize>) -> Result<(), Failure> {
    let (lrs, path) = load_comparisons(ctx, pcs)?;
    let curve = ece_curve(&lrs, true, &default_prior_grid()).stage("ece")?;
    let mut out = open_output(&ctx.cfg)?;
    out.write_with("ece.csv", |w| write_ece_csv(&curve, w)).stage("write")?;
    out.write("ece.svg", ece_svg(&curve, &[]).as_bytes()).stage("write")?;
    let c = null_crossings(&curve);
    let summary = json!({ "null_crossing_upper": c.upper, "null_crossing_lower": c.lower, "max_excess_over_null": curve.max_excess_over_null() });
    write_manifest(ctx, &mut out, "manifest-ece.json", "ece", &[path], summary)
}

pub fn tippett(ctx: &Context, pcs: Option<usize>) -> Result<(), Failure> {
    let (lrs, path) = load_comparisons(ctx, pcs)?;
    let curve = tippett_curve(&lrs, &TippettCurve::default_thresholds(&lrs)).stage("tippett")?;
    let mut out = open_output(&ctx.cfg)?;
    out.write_with("tippett.csv", |w| write_tippett_csv(&curve, w)).stage("write")?;
    out.write("tippett.svg", tippett_svg(&curve).as_bytes()).stage("write")?;
    write_manifest(ctx, &mut out, "manifest-tippett.json", "tippett", &[path], json!({ "comparisons": lrs.len() }))
}

fn load_split_population(cfg: &PipelineConfig) -> Result<PopulationDataset, Failure> {
    require(&[&cfg.schema, &cfg.population])?;
    let schema = Arc::new(FeatureSchema::load(&cfg.schema).stage("load")?);
    load_population(&cfg.population, &schema).and_then(|p| p.split_composites()).stage("load")
}

pub fn polychoric(ctx: &Context) -> Result<(), Failure> {
    let pop = load_split_population(&ctx.cfg)?;
    let m = polychoric_matrix::<f64>(&pop).stage("polychoric")?;
    let mut out = open_output(&ctx.cfg)?;
    out.write_with("polychoric.csv", |w| m.write_csv(w)).stage("write")?;
    out.write_with("polychoric_flags.csv", |w| m.write_flags_csv(w)).stage("write")?;
    let k = m.names.len();
    let upper = |f: &dyn Fn(usize, usize) -> bool| (0..k).map(|i| (i + 1..k).filter(|&j| f(i, j)).count()).sum::<usize>();
    let summary = json!({ "features": m.names.len(), "clamped_pairs": upper(&|i, j| m.clamped[[i, j]]), "degenerate_pairs": upper(&|i, j| m.degenerate[[i, j]]) });
    let inputs = [ctx.cfg.schema.clone(), ctx.cfg.population.clone()];
    write_manifest(ctx, &mut out, "manifest-polychoric.json", "polychoric", &inputs, summary)
}

pub fn assoc(ctx: &Context) -> Result<(), Failure> {
    use rayon::prelude::*;
    let pop = load_split_population(&ctx.cfg)?;
    let names: Vec<String> = pop.schema().features().iter().map(|f| f.name.clone()).collect();
    let reports: Vec<SelectionReport<f64>> = names
        .par_iter()
        .map(|name| {
            covariate_selection::<f64>(&pop, name).unwrap_or_else(|e| SelectionReport {
                feature: name.clone(),
                included_blocks: vec![],
                fit: None,
                error: Some(e.to_string()),
            })
        })
        .collect();
    if reports.iter().all(|r| r.fit.is_none()) {
        let first = reports.first().and_then(|r| r.error.clone()).unwrap_or_default();
        return Err(Failure::Stage("assoc", anyhow!("no feature could be fitted: {first}")));
    }
    let mut out = open_output(&ctx.cfg)?;
    out.write_with("coefficients.csv", |w| write_coefficients_csv(&reports, w)).stage("write")?;
    let mut text = String::from("feature,included_blocks,status\n");
    for r in &reports {
        let status = r.error.as_deref().unwrap_or("fitted");
        text.push_str(&format!("{},{},{}\n", csv_field(&r.feature), r.included_blocks.join(";"), csv_field(status)));
    }
    out.write("selection.csv", text.as_bytes()).stage("write")?;
    let summary = json!({ "features": reports.len(), "fitted": reports.iter().filter(|r| r.fit.is_some()).count() });
    let inputs = [ctx.cfg.schema.clone(), ctx.cfg.population.clone()];
    write_manifest(ctx, &mut out, "manifest-assoc.json", "assoc", &inputs, summary)
}

pub fn simulate(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let seed = cfg.imputation_seed();
    let scenario = match &cfg.scenario {
        Some(path) => {
            require(&[path])?;
            let text = std::fs::read_to_string(path).context("reading scenario").stage("simulate")?;
            let s: Scenario = serde_json::from_str(&text).map_err(|e| Failure::Config(anyhow!("scenario {}: {e}", path.display())))?;
            if cfg.seed.is_some() {
                s.reseeded(seed)
            } else {
                s
            }
        }
        None => Scenario::standard(seed),
    };
    let pop_cfg = scenario.config(&scenario.population);
    let schema = pop_cfg.schema().stage("simulate")?;
    let pop = generate_population(&pop_cfg).stage("simulate")?;
    let low = generate_repeated(&scenario.config(&scenario.repeated_low)).stage("simulate")?;
    let high = generate_repeated(&scenario.config(&scenario.repeated_high)).stage("simulate")?;

    let mut out = open_output(cfg)?;
    out.write(SCHEMA_FILE, (schema.to_json() + "\n").as_bytes()).stage("write")?;
    out.write_with("population.csv", |w| write_dataset(pop.data(), w)).stage("write")?;
    out.write_with("repeated_low.csv", |w| write_dataset(low.data(), w)).stage("write")?;
    out.write_with("repeated_high.csv", |w| write_dataset(high.data(), w)).stage("write")?;
    let scenario_json = serde_json::to_string_pretty(&scenario).expect("scenario serializes") + "\n";
    out.write("scenario.json", scenario_json.as_bytes()).stage("write")?;
    let summary = json!({
        "population": pop.len(),
        "repeated_low": { "individuals": low.n_individuals(), "observations": low.n_observations(), "level_flips": low.level_flip_count() },
        "repeated_high": { "individuals": high.n_individuals(), "observations": high.n_observations(), "level_flips": high.level_flip_count() },
    });
    println!("simulated {} population records, {} + {} repeated observations", pop.len(), low.n_observations(), high.n_observations());
    let inputs: Vec<PathBuf> = cfg.scenario.iter().cloned().collect();
    write_manifest(ctx, &mut out, "manifest-simulate.json", "simulate", &inputs, summary)
}

/// Reads a profile in the original schema and brings it to the model's
/// feature set. Unknown labels are reported as parse errors of that file.
fn load_profile(path: &Path, cfg: &PipelineConfig, schema: &FeatureSchema, seed: u64) -> gaitlr_core::Result<(RepeatedDataset, usize)> {
    let original = Arc::new(FeatureSchema::load(&cfg.schema)?);
    let file = std::fs::File::open(path)?;
    let data = read_dataset(file, &original).map_err(|e| match e {
        gaitlr_core::Error::SchemaViolation(message) => gaitlr_core::Error::Parse { location: path.display().to_string(), message },
        other => other,
    })?;
    let data = split_composite_features(&data)?;
    let names: Vec<&str> = schema.features().iter().map(|f| f.name.as_str()).collect();
    let data = RepeatedDataset::new(data.restrict_features(&names)?)?;
    let missing = data.data().missing_count();
    let data = if missing > 0 { impute_missing(&data, seed)? } else { data };
    Ok((data, missing))
}

pub fn compare(ctx: &Context, query: &Path, reference: &Path) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    require(&[&cfg.schema, query, reference])?;
    let mut model = load_model(cfg)?;
    override_within(ctx, &mut model, None)?;
    let schema_path = cfg.output_dir.join(SCHEMA_FILE);
    let schema = FeatureSchema::load(&schema_path).stage("load")?;
    if schema.fingerprint() != model.schema_fingerprint {
        return Err(Failure::Stage("load", anyhow!("{} does not belong to the fitted model", schema_path.display())));
    }
    let m = match ctx.overrides["pcs"].as_u64() {
        Some(m) if m as usize > model.n_components || m == 0 => {
            return Err(Failure::Config(anyhow!("model has {} components; {m} requested", model.n_components)))
        }
        Some(m) => m as usize,
        None => model.n_components,
    };
    let seed = cfg.imputation_seed();
    let (q, q_missing) = load_profile(query, cfg, &schema, seed).stage("load")?;
    let (r, r_missing) = load_profile(reference, cfg, &schema, seed).stage("load")?;
    let score = |d: &RepeatedDataset| -> gaitlr_core::Result<Vec<f64>> {
        let s = model.projector.score_dataset(d.data(), model.n_components)?;
        let n = s.nrows() as f64;
        Ok((0..s.n_components()).map(|j| s.scores.column(j).sum() / n).collect())
    };
    let yq = score(&q).stage("score")?;
    let yr = score(&r).stage("score")?;
    let result = model
        .lr
        .compare_means(&yq, q.n_observations(), &yr, r.n_observations(), m, cfg.truncation())
        .stage("compare")?;

    println!("WARNING: within-individual variance is {}.", provenance_label(&model.lr.within.provenance));
    println!("The LR assumes the questioned and reference recordings vary as much as that data did;");
    println!("whether this holds for the case material is a matter for expert judgement.");
    println!("query: {} ({} occasions, {} missing values imputed)", query.display(), q.n_observations(), q_missing);
    println!("reference: {} ({} occasions, {} missing values imputed)", reference.display(), r.n_observations(), r_missing);
    println!("M  log10_LR_PC  cumulative_log10_LR  truncated");
    for k in 1..=m {
        let per = result.per_component_ln[k - 1] / std::f64::consts::LN_10;
        println!("{k:<2} {per:>11.4}  {:>19.4}  {}", result.log10_lr_at(k), result.truncated_at(k));
    }
    println!("LR over {m} components: {:e}{}", result.lr_at(m), if result.truncated_at(m) { " (truncated)" } else { "" });
    Ok(())
}
