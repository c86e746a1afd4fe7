//! End-to-end stages shared by the command-line front end: configuration,
//! data preparation, model fitting and evaluation (all in `f64`).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{
    common_features, impute_missing, impute_population, impute_replicates, load_population, load_repeated,
    Dataset, FeatureSchema, PopulationDataset, ReplicateSummary, RepeatedDataset,
};
use crate::error::{Error, Result};
use crate::lr::{within_model_from_scores, BetweenModel, LrModel, WithinModel, WithinProvenance, DEFAULT_TRUNCATION};
use crate::pca::{fit_pca, fit_polychoric_pca, PcaBasis, PcaModel, PolychoricPcaModel, Projector, ScoreMatrix};
use crate::recode::recode_ordinal_to_binary;
use crate::validation::{
    default_prior_grid, ece_curve, enumerate_comparisons, histogram, misleading_rates, remove_outliers,
    run_comparisons, tippett, EceCurve, Histogram, LabelledLr, LrCollection, MisleadingRates, ReferenceMode,
    TippettCurve,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    BinaryPca,
    PolychoricPca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaConfig {
    #[serde(default)]
    pub basis: PcaBasis,
    #[serde(default = "default_pcs")]
    pub pcs: usize,
}

fn default_pcs() -> usize {
    4
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self { basis: PcaBasis::default(), pcs: default_pcs() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputationConfig {
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_reps() -> usize {
    200
}

fn default_seed() -> u64 {
    1
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self { n_reps: default_reps(), seed: default_seed() }
    }
}

/// `"estimate"`, a preset name, explicit variances, or `{"file": path}` to a
/// JSON array of variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WithinSource {
    Name(String),
    Values(Vec<f64>),
    File { file: PathBuf },
}

impl Default for WithinSource {
    fn default() -> Self {
        Self::Name("estimate".into())
    }
}

impl WithinSource {
    /// Parses a command-line override: a preset name or a file path.
    pub fn from_arg(arg: &str) -> Self {
        if arg == "estimate" || crate::lr::PRESETS.iter().any(|(n, _)| *n == arg) {
            Self::Name(arg.into())
        } else {
            Self::File { file: PathBuf::from(arg) }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema: PathBuf,
    pub population: PathBuf,
    pub repeated: PathBuf,
    /// second repeated dataset for the variance mis-specification grid
    #[serde(default)]
    pub repeated_alt: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pca: PcaConfig,
    #[serde(default)]
    pub within_variance: WithinSource,
    #[serde(default = "default_true")]
    pub truncate: bool,
    #[serde(default)]
    pub imputation: ImputationConfig,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub reference_mode: ReferenceMode,
    /// misleading log10 LR magnitude treated as an outlier in the ECE
    /// sensitivity analysis
    #[serde(default = "default_outlier_bound")]
    pub outlier_bound: f64,
    /// scenario JSON for synthetic data; the built-in scenario when absent
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_true() -> bool {
    true
}

fn default_outlier_bound() -> f64 {
    2.0
}

impl PipelineConfig {
    /// Parses the config; relative paths are taken from the config's folder.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.schema);
        fix(&mut cfg.population);
        fix(&mut cfg.repeated);
        fix(&mut cfg.output_dir);
        cfg.repeated_alt.as_mut().map(fix);
        cfg.scenario.as_mut().map(fix);
        if let WithinSource::File { file } = &mut cfg.within_variance {
            fix(file);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pca.pcs == 0 {
            return Err(Error::ConfigInvalid("pca.pcs must be at least 1".into()));
        }
        if self.imputation.n_reps == 0 {
            return Err(Error::ConfigInvalid("imputation.n_reps must be at least 1".into()));
        }
        if let WithinSource::Name(n) = &self.within_variance {
            if n != "estimate" && !crate::lr::PRESETS.iter().any(|(p, _)| p == n) {
                return Err(Error::ConfigInvalid(format!("unknown within_variance '{n}'")));
            }
        }
        Ok(())
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncate.then_some(DEFAULT_TRUNCATION)
    }

    pub fn imputation_seed(&self) -> u64 {
        self.seed.unwrap_or(self.imputation.seed)
    }
}

/// Split, feature-aligned inputs. The population is complete; the repeated
/// dataset keeps its missing values for replicate imputation.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub schema: Arc<FeatureSchema>,
    pub population: PopulationDataset,
    pub repeated: RepeatedDataset,
}

fn restrict(data: &Dataset, names: &[String]) -> Result<Dataset> {
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    data.restrict_features(&refs)
}

/// Loads, splits composites, intersects features and completes the
/// population.
pub fn prepare(cfg: &PipelineConfig) -> Result<PreparedData> {
    let schema = Arc::new(FeatureSchema::load(&cfg.schema)?);
    let population = load_population(&cfg.population, &schema)?.split_composites()?;
    let repeated = load_repeated(&cfg.repeated, &schema)?.split_composites()?;
    align(population, repeated, cfg.imputation_seed())
}

pub fn align(population: PopulationDataset, repeated: RepeatedDataset, seed: u64) -> Result<PreparedData> {
    let common = common_features(population.data(), repeated.data());
    if common.is_empty() {
        return Err(Error::SchemaViolation("population and repeated data share no features".into()));
    }
    if common.len() < population.schema().len() || common.len() < repeated.schema().len() {
        log::warn!("restricting both datasets to {} shared features", common.len());
    }
    let population = PopulationDataset::new(restrict(population.data(), &common)?)?;
    let repeated = RepeatedDataset::new(restrict(repeated.data(), &common)?)?;
    let population = impute_population(&population, seed)?;
    Ok(PreparedData { schema: Arc::clone(population.data().schema_arc()), population, repeated })
}

/// A fitted projection of either variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum ProjectorModel {
    BinaryPca(PcaModel<f64>),
    PolychoricPca(PolychoricPcaModel<f64>),
}

impl Projector<f64> for ProjectorModel {
    fn fingerprint(&self) -> String {
        match self {
            Self::BinaryPca(m) => Projector::fingerprint(m),
            Self::PolychoricPca(m) => Projector::fingerprint(m),
        }
    }

    fn eigenvalues(&self) -> &[f64] {
        match self {
            Self::BinaryPca(m) => &m.eigenvalues,
            Self::PolychoricPca(m) => &m.eigenvalues,
        }
    }

    fn score_dataset(&self, data: &Dataset, n_components: usize) -> Result<ScoreMatrix<f64>> {
        match self {
            Self::BinaryPca(m) => m.score_dataset(data, n_components),
            Self::PolychoricPca(m) => m.score_dataset(data, n_components),
        }
    }
}

pub fn fit_projector(cfg: &PipelineConfig, population: &PopulationDataset) -> Result<ProjectorModel> {
    Ok(match cfg.variant {
        Variant::BinaryPca => ProjectorModel::BinaryPca(fit_pca(&recode_ordinal_to_binary(population.data())?, cfg.pca.basis)?),
        Variant::PolychoricPca => ProjectorModel::PolychoricPca(fit_polychoric_pca(population)?),
    })
}

/// Everything `compare` needs, serialized as `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub schema_fingerprint: String,
    pub n_components: usize,
    pub projector: ProjectorModel,
    pub lr: LrModel<f64>,
}

/// Within-variance model plus, when estimated, its spread over imputation
/// replicates.
/// The within-variance model of a source that needs no data; `None` for
/// `"estimate"`.
pub fn fixed_within(source: &WithinSource) -> Result<Option<WithinModel<f64>>> {
    Ok(match source {
        WithinSource::Name(n) if n == "estimate" => None,
        WithinSource::Name(n) => Some(WithinModel::preset(n)?),
        WithinSource::Values(v) => Some(WithinModel::new(v.clone(), WithinProvenance::Explicit)?),
        WithinSource::File { file } => {
            let text = std::fs::read_to_string(file)?;
            let values: Vec<f64> = serde_json::from_str(&text)
                .map_err(|e| Error::ConfigInvalid(format!("{}: expected a JSON array of variances ({e})", file.display())))?;
            Some(WithinModel::new(values, WithinProvenance::Explicit)?)
        }
    })
}

pub fn resolve_within(
    source: &WithinSource,
    projector: &ProjectorModel,
    repeated: &RepeatedDataset,
    cfg: &PipelineConfig,
) -> Result<(WithinModel<f64>, Option<ReplicateSummary<f64>>)> {
    if let Some(fixed) = fixed_within(source)? {
        return Ok((fixed, None));
    }
    let m = cfg.pca.pcs;
    let summary = impute_replicates(repeated, cfg.imputation.n_reps, cfg.imputation_seed(), |d| {
        let scores = projector.score_dataset(d.data(), m)?;
        Ok(within_model_from_scores(&scores, "")?.variances)
    })?;
    let provenance = WithinProvenance::Estimated {
        source: cfg.repeated.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned()),
        individuals: repeated.n_individuals(),
        observations: repeated.n_observations(),
    };
    Ok((WithinModel::new(summary.mean.clone(), provenance)?, Some(summary)))
}

pub struct FitOutput {
    pub model: FittedModel,
    pub within_summary: Option<ReplicateSummary<f64>>,
}

pub fn fit_models(cfg: &PipelineConfig, data: &PreparedData) -> Result<FitOutput> {
    let projector = fit_projector(cfg, &data.population)?;
    let m = cfg.pca.pcs;
    if m > projector.max_components() {
        return Err(Error::ConfigInvalid(format!("{m} components requested; {} available", projector.max_components())));
    }
    let pop_scores = projector.score_dataset(data.population.data(), m)?;
    let between = BetweenModel::fit(pop_scores.scores.view())?;
    let (within, within_summary) = resolve_within(&cfg.within_variance, &projector, &data.repeated, cfg)?;
    if within.len() < m {
        return Err(Error::ConfigInvalid(format!("within-variance source has {} values; {m} components requested", within.len())));
    }
    let lr = LrModel::new(projector.fingerprint(), between, within);
    Ok(FitOutput {
        model: FittedModel { schema_fingerprint: data.schema.fingerprint(), n_components: m, projector, lr },
        within_summary,
    })
}

/// Scores of the comparison data: the repeated dataset completed with the
/// imputation seed itself.
pub fn comparison_scores(cfg: &PipelineConfig, model: &FittedModel, repeated: &RepeatedDataset) -> Result<ScoreMatrix<f64>> {
    let complete = impute_missing(repeated, cfg.imputation_seed())?;
    model.projector.score_dataset(complete.data(), model.n_components)
}

pub struct EceSensitivity {
    pub outliers_removed: EceCurve,
    pub removed: usize,
    pub variance_doubled: EceCurve,
}

pub struct Evaluation {
    pub collection: LrCollection<f64>,
    /// misleading rates for M = 1..pcs
    pub rates: Vec<MisleadingRates>,
    pub tippett: TippettCurve,
    pub ece: EceCurve,
    pub sensitivity: EceSensitivity,
    /// reported ln LR at the full M
    pub histogram: Histogram,
}

pub fn evaluate(cfg: &PipelineConfig, model: &FittedModel, scores: &ScoreMatrix<f64>) -> Result<Evaluation> {
    let m = model.n_components;
    let plan = enumerate_comparisons(&scores.row_ids, cfg.reference_mode)?;
    let collection = run_comparisons(&plan, scores, &model.lr, m, cfg.truncation())?;
    let rates = (1..=m).map(|k| misleading_rates(&collection.labelled(k))).collect::<Result<Vec<_>>>()?;
    let labelled = collection.labelled(m);
    let grid = default_prior_grid();
    let ece = ece_curve(&labelled, true, &grid)?;
    let (kept, removed) = remove_outliers(&labelled, cfg.outlier_bound);
    let outliers_removed = ece_curve(&kept, false, &grid)?;
    let doubled = LrModel::new(model.lr.projector_fingerprint.clone(), model.lr.between.clone(), model.lr.within.scaled(2.0));
    let doubled_lrs = run_comparisons(&plan, scores, &doubled, m, cfg.truncation())?.labelled(m);
    let variance_doubled = ece_curve(&doubled_lrs, false, &grid)?;
    let ln: Vec<(f64, bool)> = labelled.iter().map(|l| (l.log10_lr * std::f64::consts::LN_10, l.same_source)).collect();
    Ok(Evaluation {
        tippett: tippett(&labelled, &TippettCurve::default_thresholds(&labelled))?,
        rates,
        ece,
        sensitivity: EceSensitivity { outliers_removed, removed: removed.len(), variance_doubled },
        histogram: histogram(&ln, 1.0),
        collection,
    })
}

/// Reads `truth` and `log10_LR_M<m>` back from a comparisons CSV.
pub fn read_comparisons(path: &Path, m: Option<usize>) -> Result<Vec<LabelledLr>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let truth = headers
        .iter()
        .position(|h| h == "truth")
        .ok_or_else(|| Error::Parse { location: path.display().to_string(), message: "no truth column".into() })?;
    let lr_cols: Vec<usize> = headers.iter().enumerate().filter(|(_, h)| h.starts_with("log10_LR_M")).map(|(i, _)| i).collect();
    let col = match m {
        Some(m) => headers.iter().position(|h| h == format!("log10_LR_M{m}")),
        None => lr_cols.last().copied(),
    }
    .ok_or_else(|| Error::Parse { location: path.display().to_string(), message: "missing log10_LR column".into() })?;
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| Error::Parse { location: format!("{}:{}", path.display(), row + 2), message };
        let same_source = match &rec[truth] {
            "SS" => true,
            "DS" => false,
            other => return Err(bad(format!("truth must be SS or DS, got '{other}'"))),
        };
        let v: f64 = rec[col].parse().map_err(|e| bad(format!("{e}")))?;
        out.push(LabelledLr::new(v, same_source));
    }
    Ok(out)
}
