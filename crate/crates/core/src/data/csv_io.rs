//! Dataset CSV reading and writing.
//!
//! Header: `individual_id,occasion_id,<feature>...` optionally followed by the
//! six demographic columns. Cells hold level labels; an empty cell is missing.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::dataset::{
    AnyDataset, Dataset, DatasetKind, DemographicProfile, GaitRecord, PopulationDataset,
    RepeatedDataset,
};
use super::schema::FeatureSchema;
use crate::error::{Error, Result};

pub const DEMOGRAPHIC_COLUMNS: [&str; 6] =
    ["sex", "height", "weight", "age_group", "ethnicity", "location"];

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { location: location.into(), message: message.into() }
}

/// Reads a dataset. When the header names only a subset of the schema's
/// features, the returned dataset carries the correspondingly restricted schema.
pub fn read_dataset<R: Read>(reader: R, schema: &Arc<FeatureSchema>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "individual_id" || &header[1] != "occasion_id" {
        return Err(parse_err("header", "expected leading columns individual_id,occasion_id"));
    }

    let mut feature_cols: Vec<(usize, &str)> = Vec::new();
    let mut demo_cols: [Option<usize>; 6] = [None; 6];
    for (col, name) in header.iter().enumerate().skip(2) {
        if let Some(d) = DEMOGRAPHIC_COLUMNS.iter().position(|c| *c == name) {
            if demo_cols[d].replace(col).is_some() {
                return Err(parse_err("header", format!("duplicate column '{name}'")));
            }
        } else if schema.index_of(name).is_some() {
            if feature_cols.iter().any(|(_, n)| *n == name) {
                return Err(parse_err("header", format!("duplicate column '{name}'")));
            }
            feature_cols.push((col, name));
        } else {
            return Err(Error::SchemaViolation(format!("header: unknown feature '{name}'")));
        }
    }
    let n_demo = demo_cols.iter().filter(|c| c.is_some()).count();
    if n_demo != 0 && n_demo != 6 {
        return Err(parse_err("header", "demographic columns must be all present or all absent"));
    }

    let names: Vec<&str> = feature_cols.iter().map(|(_, n)| *n).collect();
    let schema = if names.len() == schema.len() {
        Arc::clone(schema)
    } else {
        log::warn!(
            "dataset provides {} of {} schema features; restricting schema",
            names.len(),
            schema.len()
        );
        Arc::new(schema.restrict(&names)?)
    };
    // column index per feature, in schema order
    let columns: Vec<usize> = schema
        .features()
        .iter()
        .map(|f| feature_cols.iter().find(|(_, n)| *n == f.name).expect("present").0)
        .collect();

    let vocab = schema.demographics().clone();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let loc = format!("line {line}");
        let individual_id = row[0].to_string();
        let occasion_id = row[1].to_string();
        if individual_id.is_empty() {
            return Err(parse_err(loc, "empty individual_id"));
        }
        let mut values = Vec::with_capacity(columns.len());
        for (f, &col) in schema.features().iter().zip(&columns) {
            let cell = &row[col];
            if cell.is_empty() {
                values.push(None);
            } else {
                let level = f.level_index(cell).ok_or_else(|| {
                    Error::SchemaViolation(format!(
                        "{loc}: level '{cell}' not defined for feature '{}'",
                        f.name
                    ))
                })?;
                values.push(Some(level));
            }
        }
        let demographics = if n_demo == 6 {
            let lookup = |k: usize, vocab: &[String]| -> Result<usize> {
                let cell = &row[demo_cols[k].expect("all present")];
                vocab.iter().position(|v| v == cell).ok_or_else(|| {
                    Error::SchemaViolation(format!(
                        "{loc}: {} value '{cell}' not in schema vocabulary",
                        DEMOGRAPHIC_COLUMNS[k]
                    ))
                })
            };
            Some(DemographicProfile {
                sex: lookup(0, &vocab.sex)?,
                height: lookup(1, &vocab.height)?,
                weight: lookup(2, &vocab.weight)?,
                age_group: lookup(3, &vocab.age_group)?,
                ethnicity: lookup(4, &vocab.ethnicity)?,
                location: lookup(5, &vocab.location)?,
            })
        } else {
            None
        };
        records.push(GaitRecord { individual_id, occasion_id, values, demographics });
    }
    Dataset::new(schema, records)
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &Arc<FeatureSchema>,
    kind: DatasetKind,
) -> Result<AnyDataset> {
    let data = read_dataset(std::fs::File::open(path)?, schema)?;
    Ok(match kind {
        DatasetKind::Population => AnyDataset::Population(PopulationDataset::new(data)?),
        DatasetKind::Repeated => AnyDataset::Repeated(RepeatedDataset::new(data)?),
    })
}

pub fn load_population(path: impl AsRef<Path>, schema: &Arc<FeatureSchema>) -> Result<PopulationDataset> {
    PopulationDataset::new(read_dataset(std::fs::File::open(path)?, schema)?)
}

pub fn load_repeated(path: impl AsRef<Path>, schema: &Arc<FeatureSchema>) -> Result<RepeatedDataset> {
    RepeatedDataset::new(read_dataset(std::fs::File::open(path)?, schema)?)
}

pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let schema = dataset.schema();
    let with_demo = dataset.records().iter().any(|r| r.demographics.is_some());
    if with_demo && dataset.records().iter().any(|r| r.demographics.is_none()) {
        return Err(Error::SchemaViolation("demographics present for only some records".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["individual_id", "occasion_id"];
    header.extend(schema.features().iter().map(|f| f.name.as_str()));
    if with_demo {
        header.extend(DEMOGRAPHIC_COLUMNS);
    }
    w.write_record(&header)?;
    let vocab = schema.demographics();
    for r in dataset.records() {
        let mut row: Vec<&str> = vec![&r.individual_id, &r.occasion_id];
        for (v, f) in r.values.iter().zip(schema.features()) {
            row.push(v.map(|l| f.levels[l as usize].as_str()).unwrap_or(""));
        }
        if let Some(d) = &r.demographics {
            row.extend([
                vocab.sex[d.sex].as_str(),
                vocab.height[d.height].as_str(),
                vocab.weight[d.weight].as_str(),
                vocab.age_group[d.age_group].as_str(),
                vocab.ethnicity[d.ethnicity].as_str(),
                vocab.location[d.location].as_str(),
            ]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}
