//! Cumulative ("thermometer") coding of ordinal features: an L-level feature
//! becomes L − 1 indicators with `b_k = 1` iff the level exceeds `k`.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;

use crate::data::{Dataset, FeatureSchema, GaitRecord, Level};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryColumn {
    pub feature: String,
    pub threshold: usize,
}

impl BinaryColumn {
    pub fn name(&self) -> String {
        format!("{}__gt{}", self.feature, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    schema: Arc<FeatureSchema>,
    columns: Vec<BinaryColumn>,
    /// (individual_id, occasion_id) per row
    row_ids: Vec<(String, String)>,
    cells: Array2<u8>,
}

fn columns_for(schema: &FeatureSchema) -> Vec<BinaryColumn> {
    schema
        .features()
        .iter()
        .flat_map(|f| {
            (0..f.n_levels() - 1).map(move |k| BinaryColumn { feature: f.name.clone(), threshold: k })
        })
        .collect()
}

impl BinaryMatrix {
    /// Wraps raw 0/1 cells laid out in schema order, ascending threshold.
    pub fn new(schema: Arc<FeatureSchema>, row_ids: Vec<(String, String)>, cells: Array2<u8>) -> Result<Self> {
        let columns = columns_for(&schema);
        if cells.ncols() != columns.len() || cells.nrows() != row_ids.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} x {}", row_ids.len(), columns.len()),
                found: format!("{} x {}", cells.nrows(), cells.ncols()),
            });
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(Error::SchemaViolation("binary cells must be 0 or 1".into()));
        }
        Ok(Self { schema, columns, row_ids, cells })
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn columns(&self) -> &[BinaryColumn] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(BinaryColumn::name).collect()
    }

    pub fn row_ids(&self) -> &[(String, String)] {
        &self.row_ids
    }

    pub fn cells(&self) -> &Array2<u8> {
        &self.cells
    }

    pub fn nrows(&self) -> usize {
        self.cells.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.cells.ncols()
    }

    pub fn to_real<T: Real>(&self) -> Array2<T> {
        self.cells.mapv(|c| if c == 1 { T::one() } else { T::zero() })
    }

    /// Audit export with the generated column names.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["individual_id".to_string(), "occasion_id".to_string()];
        header.extend(self.column_names());
        w.write_record(&header)?;
        for (ids, row) in self.row_ids.iter().zip(self.cells.rows()) {
            let mut rec = vec![ids.0.clone(), ids.1.clone()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn recode_ordinal_to_binary(dataset: &Dataset) -> Result<BinaryMatrix> {
    let schema = dataset.schema();
    let width = schema.binary_width();
    let mut cells = Array2::<u8>::zeros((dataset.len(), width));
    for (i, rec) in dataset.records().iter().enumerate() {
        let mut col = 0;
        for (v, f) in rec.values.iter().zip(schema.features()) {
            let c = v.ok_or_else(|| Error::MissingValue { row: i, feature: f.name.clone() })? as usize;
            for k in 0..f.n_levels() - 1 {
                cells[[i, col + k]] = u8::from(c > k);
            }
            col += f.n_levels() - 1;
        }
    }
    let row_ids = dataset
        .records()
        .iter()
        .map(|r| (r.individual_id.clone(), r.occasion_id.clone()))
        .collect();
    BinaryMatrix::new(Arc::clone(dataset.schema_arc()), row_ids, cells)
}

/// Inverse of [`recode_ordinal_to_binary`]; demographics are not carried by
/// the binary matrix and come back as `None`.
pub fn decode_binary_to_ordinal(matrix: &BinaryMatrix) -> Result<Dataset> {
    let schema = matrix.schema();
    let mut records = Vec::with_capacity(matrix.nrows());
    for (i, row) in matrix.cells.rows().into_iter().enumerate() {
        let mut values = Vec::with_capacity(schema.len());
        let mut col = 0;
        for f in schema.features() {
            let width = f.n_levels() - 1;
            let bits = row.slice(ndarray::s![col..col + width]);
            if bits.windows(2).into_iter().any(|w| w[0] < w[1]) {
                return Err(Error::NonCumulativePattern { row: i, feature: f.name.clone() });
            }
            values.push(Some(bits.iter().map(|&b| b as Level).sum::<Level>()));
            col += width;
        }
        let (individual_id, occasion_id) = matrix.row_ids[i].clone();
        records.push(GaitRecord { individual_id, occasion_id, values, demographics: None });
    }
    Dataset::new(Arc::clone(schema), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureDef;
    use ndarray::array;

    fn one_feature(levels: usize) -> Arc<FeatureSchema> {
        let labels: Vec<String> = (0..levels).map(|l| l.to_string()).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        Arc::new(FeatureSchema::from_features(vec![FeatureDef::ordered("f", &refs)]).unwrap())
    }

    fn row(schema: &Arc<FeatureSchema>, c: Level) -> Dataset {
        let rec = GaitRecord {
            individual_id: "i".into(),
            occasion_id: "o".into(),
            values: vec![Some(c)],
            demographics: None,
        };
        Dataset::new(Arc::clone(schema), vec![rec]).unwrap()
    }

    #[test]
    fn thermometer_examples() {
        let s4 = one_feature(4);
        assert_eq!(recode_ordinal_to_binary(&row(&s4, 2)).unwrap().cells(), &array![[1u8, 1, 0]]);
        let s2 = one_feature(2);
        assert_eq!(recode_ordinal_to_binary(&row(&s2, 0)).unwrap().cells(), &array![[0u8]]);
        assert_eq!(recode_ordinal_to_binary(&row(&s2, 1)).unwrap().cells(), &array![[1u8]]);
        let s5 = one_feature(5);
        assert_eq!(recode_ordinal_to_binary(&row(&s5, 0)).unwrap().cells(), &array![[0u8, 0, 0, 0]]);
        assert_eq!(
            recode_ordinal_to_binary(&row(&s5, 0)).unwrap().column_names(),
            ["f__gt0", "f__gt1", "f__gt2", "f__gt3"]
        );
    }

    #[test]
    fn decode_examples() {
        let s4 = one_feature(4);
        let ids = vec![("i".to_string(), "o".to_string())];
        let m = BinaryMatrix::new(Arc::clone(&s4), ids.clone(), array![[1u8, 1, 0]]).unwrap();
        assert_eq!(decode_binary_to_ordinal(&m).unwrap().records()[0].values, vec![Some(2)]);
        let m = BinaryMatrix::new(Arc::clone(&s4), ids.clone(), array![[0u8, 0, 0]]).unwrap();
        assert_eq!(decode_binary_to_ordinal(&m).unwrap().records()[0].values, vec![Some(0)]);
        let s3 = one_feature(3);
        let m = BinaryMatrix::new(s3, ids, array![[0u8, 1]]).unwrap();
        assert!(matches!(decode_binary_to_ordinal(&m), Err(Error::NonCumulativePattern { .. })));
    }

    #[test]
    fn missing_value_rejected() {
        let s = one_feature(3);
        let rec = GaitRecord {
            individual_id: "i".into(),
            occasion_id: "o".into(),
            values: vec![None],
            demographics: None,
        };
        let d = Dataset::new(s, vec![rec]).unwrap();
        assert!(matches!(recode_ordinal_to_binary(&d), Err(Error::MissingValue { .. })));
    }
}
