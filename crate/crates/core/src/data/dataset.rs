use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use super::schema::{FeatureSchema, Level};
use crate::error::{Error, Result};

/// Demographic covariates, each an index into the schema's vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DemographicProfile {
    pub sex: usize,
    pub height: usize,
    pub weight: usize,
    pub age_group: usize,
    pub ethnicity: usize,
    pub location: usize,
}

/// One observation occasion of one individual. `values` is aligned with the
/// owning dataset's schema; `None` is a missing observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaitRecord {
    pub individual_id: String,
    pub occasion_id: String,
    pub values: Vec<Option<Level>>,
    pub demographics: Option<DemographicProfile>,
}

impl GaitRecord {
    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }
}

/// Records validated against a schema, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    records: Vec<GaitRecord>,
}

impl Dataset {
    pub fn new(schema: Arc<FeatureSchema>, records: Vec<GaitRecord>) -> Result<Self> {
        let vocab = schema.demographics();
        for (row, rec) in records.iter().enumerate() {
            if rec.values.len() != schema.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} values", schema.len()),
                    found: format!("{} values in row {row}", rec.values.len()),
                });
            }
            for (v, f) in rec.values.iter().zip(schema.features()) {
                if let Some(v) = v {
                    if *v as usize >= f.n_levels() {
                        return Err(Error::SchemaViolation(format!(
                            "row {row}: level index {v} out of range for feature '{}'",
                            f.name
                        )));
                    }
                }
            }
            if let Some(d) = &rec.demographics {
                let checks = [
                    ("sex", d.sex, vocab.sex.len()),
                    ("height", d.height, vocab.height.len()),
                    ("weight", d.weight, vocab.weight.len()),
                    ("age_group", d.age_group, vocab.age_group.len()),
                    ("ethnicity", d.ethnicity, vocab.ethnicity.len()),
                    ("location", d.location, vocab.location.len()),
                ];
                for (name, idx, len) in checks {
                    if idx >= len {
                        return Err(Error::SchemaViolation(format!(
                            "row {row}: {name} index {idx} outside vocabulary"
                        )));
                    }
                }
            }
        }
        Ok(Self { schema, records })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn records(&self) -> &[GaitRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.records.iter().map(|r| r.values.iter().filter(|v| v.is_none()).count()).sum()
    }

    pub fn into_records(self) -> Vec<GaitRecord> {
        self.records
    }

    /// Keeps only the named features (schema order is preserved).
    pub fn restrict_features(&self, names: &[&str]) -> Result<Self> {
        let schema = self.schema.restrict(names)?;
        let keep: Vec<usize> = schema
            .features()
            .iter()
            .map(|f| self.schema.index_of(&f.name).expect("restricted from this schema"))
            .collect();
        let records = self
            .records
            .iter()
            .map(|r| GaitRecord {
                values: keep.iter().map(|&i| r.values[i]).collect(),
                ..r.clone()
            })
            .collect();
        Self::new(Arc::new(schema), records)
    }
}

/// One observation per individual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationDataset(Dataset);

impl PopulationDataset {
    pub fn new(data: Dataset) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in data.records() {
            if !seen.insert(r.individual_id.as_str()) {
                return Err(Error::DuplicateKey {
                    individual: r.individual_id.clone(),
                    occasion: r.occasion_id.clone(),
                });
            }
        }
        Ok(Self(data))
    }

    pub fn data(&self) -> &Dataset {
        &self.0
    }

    pub fn into_data(self) -> Dataset {
        self.0
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.0.schema()
    }

    pub fn records(&self) -> &[GaitRecord] {
        self.0.records()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Occasions of one individual, as row indices into the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndividualGroup {
    pub id: String,
    pub rows: Vec<usize>,
}

/// Repeated observations grouped by individual, in order of first appearance;
/// occasions keep file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepeatedDataset {
    data: Dataset,
    groups: Vec<IndividualGroup>,
}

impl RepeatedDataset {
    pub fn new(data: Dataset) -> Result<Self> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<IndividualGroup> = Vec::new();
        let mut keys = HashSet::new();
        for (row, r) in data.records().iter().enumerate() {
            if !keys.insert((r.individual_id.as_str(), r.occasion_id.as_str())) {
                return Err(Error::DuplicateKey {
                    individual: r.individual_id.clone(),
                    occasion: r.occasion_id.clone(),
                });
            }
            let g = *index.entry(r.individual_id.as_str()).or_insert_with(|| {
                groups.push(IndividualGroup { id: r.individual_id.clone(), rows: Vec::new() });
                groups.len() - 1
            });
            groups[g].rows.push(row);
        }
        Ok(Self { data, groups })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn into_data(self) -> Dataset {
        self.data
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.data.schema()
    }

    pub fn records(&self) -> &[GaitRecord] {
        self.data.records()
    }

    pub fn groups(&self) -> &[IndividualGroup] {
        &self.groups
    }

    /// C_i for each individual.
    pub fn occasion_counts(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.rows.len()).collect()
    }

    pub fn n_individuals(&self) -> usize {
        self.groups.len()
    }

    /// m = Σ C_i.
    pub fn n_observations(&self) -> usize {
        self.data.len()
    }

    /// Individual-feature pairs showing more than one observed level.
    pub fn level_flip_count(&self) -> usize {
        let mut flips = 0;
        for g in &self.groups {
            for j in 0..self.schema().len() {
                let levels: HashSet<Level> =
                    g.rows.iter().filter_map(|&r| self.records()[r].values[j]).collect();
                if levels.len() > 1 {
                    flips += 1;
                }
            }
        }
        flips
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Population,
    Repeated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyDataset {
    Population(PopulationDataset),
    Repeated(RepeatedDataset),
}

impl AnyDataset {
    pub fn data(&self) -> &Dataset {
        match self {
            Self::Population(p) => p.data(),
            Self::Repeated(r) => r.data(),
        }
    }
}
