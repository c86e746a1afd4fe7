use std::sync::Arc;

use super::dataset::{Dataset, GaitRecord, PopulationDataset, RepeatedDataset};
use super::schema::{FeatureDef, FeatureSchema, Level};
use crate::error::Result;

#[derive(Debug, Clone)]
enum ColumnSource {
    Copy(usize),
    /// composite column and the derived level for each composite level
    Derived(usize, Vec<Level>),
}

/// Split schema plus the recipe mapping old columns onto new ones.
fn plan(schema: &FeatureSchema) -> Result<(FeatureSchema, Vec<ColumnSource>)> {
    let mut features = Vec::new();
    let mut sources = Vec::new();
    for (j, f) in schema.features().iter().enumerate() {
        match &f.split_rule {
            None => {
                features.push(f.clone());
                sources.push(ColumnSource::Copy(j));
            }
            Some(rule) => {
                for (part, d) in rule.into.iter().enumerate() {
                    // validated schema: every composite level maps to a known derived level
                    let table = f
                        .levels
                        .iter()
                        .map(|l| {
                            let target = &rule.map[l][part];
                            d.levels.iter().position(|x| x == target).expect("validated") as Level
                        })
                        .collect();
                    features.push(FeatureDef {
                        name: d.name.clone(),
                        levels: d.levels.clone(),
                        side: d.side,
                        ordered: true,
                        split_rule: None,
                    });
                    sources.push(ColumnSource::Derived(j, table));
                }
            }
        }
    }
    Ok((schema.with_features(features)?, sources))
}

/// Schema with every composite feature replaced by its derived ordered features.
pub fn split_schema(schema: &FeatureSchema) -> Result<FeatureSchema> {
    Ok(plan(schema)?.0)
}

/// Replaces composite columns by their derived ordered columns; missing
/// composite values stay missing in every derived column. Datasets without
/// composites are returned unchanged.
pub fn split_composite_features(dataset: &Dataset) -> Result<Dataset> {
    if !dataset.schema().has_composites() {
        return Ok(dataset.clone());
    }
    let (schema, sources) = plan(dataset.schema())?;
    let records = dataset
        .records()
        .iter()
        .map(|r| GaitRecord {
            values: sources
                .iter()
                .map(|s| match s {
                    ColumnSource::Copy(j) => r.values[*j],
                    ColumnSource::Derived(j, table) => r.values[*j].map(|v| table[v as usize]),
                })
                .collect(),
            ..r.clone()
        })
        .collect();
    Dataset::new(Arc::new(schema), records)
}

impl PopulationDataset {
    pub fn split_composites(&self) -> Result<Self> {
        Self::new(split_composite_features(self.data())?)
    }
}

impl RepeatedDataset {
    pub fn split_composites(&self) -> Result<Self> {
        Self::new(split_composite_features(self.data())?)
    }
}
