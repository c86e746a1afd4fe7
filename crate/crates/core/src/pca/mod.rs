//! Principal component analysis of the binary indicator matrix and the
//! projection of new observations onto the fitted components.

mod polychoric_pca;

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::recode::{recode_ordinal_to_binary, BinaryMatrix};
use crate::scalar::Real;

pub use polychoric_pca::{conditional_level_means, fit_polychoric_pca, PolychoricPcaModel};

/// Eigenvalues this far below zero are treated as round-off.
const NEGATIVE_EIGEN_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaBasis {
    Covariance,
    #[default]
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<T> {
    pub basis: PcaBasis,
    pub column_names: Vec<String>,
    pub column_centers: Vec<T>,
    pub column_scales: Vec<T>,
    /// column `j` holds the loadings of component `j`
    pub loadings: Array2<T>,
    pub eigenvalues: Vec<T>,
    pub sign_convention: String,
    pub schema_fingerprint: String,
    pub n_observations: usize,
}

/// Scores tagged with the fingerprint of the model that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T> {
    pub model_fingerprint: String,
    pub row_ids: Vec<(String, String)>,
    pub scores: Array2<T>,
}

impl<T: Real> ScoreMatrix<T> {
    pub fn n_components(&self) -> usize {
        self.scores.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.scores.nrows()
    }

    pub fn row(&self, i: usize) -> ScoreRow<'_, T> {
        ScoreRow { model_fingerprint: &self.model_fingerprint, values: self.scores.row(i) }
    }

    /// Rows whose individual id matches `id`, in order.
    pub fn rows_of(&self, id: &str) -> Vec<usize> {
        (0..self.row_ids.len()).filter(|&i| self.row_ids[i].0 == id).collect()
    }
}

/// One observation's scores, carrying its model provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow<'a, T> {
    pub model_fingerprint: &'a str,
    pub values: ArrayView1<'a, T>,
}

/// Anything that maps ordinal observations onto ranked components.
pub trait Projector<T: Real> {
    fn fingerprint(&self) -> String;
    fn eigenvalues(&self) -> &[T];
    fn score_dataset(&self, data: &Dataset, n_components: usize) -> Result<ScoreMatrix<T>>;

    fn max_components(&self) -> usize {
        self.eigenvalues().len()
    }
}

pub(crate) fn json_fingerprint<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_vec(value).expect("model serializes");
    Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Eigen-decomposition sorted by eigenvalue (descending, ties by original
/// column index), with each eigenvector's largest-magnitude entry positive
/// and small negative eigenvalues clipped to zero.
pub(crate) fn ranked_eigen<T: Real>(dispersion: &Array2<T>) -> (Vec<T>, Array2<T>) {
    let (values, vectors) = symmetric_eigen(dispersion);
    let r = values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    let scale = values.iter().fold(T::one(), |m, v| m.max(v.abs()));
    let tie = T::of(TIE_TOL) * scale;
    let mut start = 0;
    while start < r {
        let mut end = start + 1;
        while end < r && (values[order[end - 1]] - values[order[end]]).abs() <= tie {
            end += 1;
        }
        order[start..end].sort_unstable();
        start = end;
    }

    let mut eigenvalues = Vec::with_capacity(r);
    let mut sorted = Array2::<T>::zeros((r, r));
    for (dst, &src) in order.iter().enumerate() {
        let mut lambda = values[src];
        if lambda < T::zero() {
            if lambda < -T::of(NEGATIVE_EIGEN_TOL) * scale {
                log::warn!("clipping negative eigenvalue {lambda}");
            }
            lambda = T::zero();
        }
        if lambda < T::of(1e-12) * scale {
            log::warn!("component {} has a near-zero eigenvalue; dispersion is rank deficient", dst + 1);
        }
        eigenvalues.push(lambda);
        let mut v: Array1<T> = vectors.column(src).to_owned();
        let max_abs = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let lead = v.iter().position(|x| x.abs() >= max_abs - T::of(TIE_TOL)).unwrap_or(0);
        if v[lead] < T::zero() {
            v.mapv_inplace(|x| -x);
        }
        sorted.column_mut(dst).assign(&v);
    }
    (eigenvalues, sorted)
}

pub fn fit_pca<T: Real>(zb: &BinaryMatrix, basis: PcaBasis) -> Result<PcaModel<T>> {
    let n = zb.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: n });
    }
    let x: Array2<T> = zb.to_real();
    let centers = x.mean_axis(Axis(0)).expect("non-empty");
    let mut xc = &x - &centers;
    let names = zb.column_names();
    let scales: Array1<T> = match basis {
        PcaBasis::Covariance => Array1::ones(x.ncols()),
        PcaBasis::Correlation => {
            let sd = xc.map_axis(Axis(0), |c| (c.iter().map(|v| *v * *v).sum::<T>() / T::of_usize(n - 1)).sqrt());
            if let Some(j) = sd.iter().position(|s| *s == T::zero()) {
                return Err(Error::ConstantColumn { column: names[j].clone() });
            }
            sd
        }
    };
    xc /= &scales;
    let dispersion = xc.t().dot(&xc) / T::of_usize(n - 1);
    let (eigenvalues, loadings) = ranked_eigen(&dispersion);
    Ok(PcaModel {
        basis,
        column_names: names,
        column_centers: centers.to_vec(),
        column_scales: scales.to_vec(),
        loadings,
        eigenvalues,
        sign_convention: "largest-magnitude loading positive".into(),
        schema_fingerprint: zb.schema().fingerprint(),
        n_observations: n,
    })
}

impl<T: Real> PcaModel<T> {
    pub fn fingerprint(&self) -> String
    where
        T: Serialize,
    {
        json_fingerprint(self)
    }

    pub fn explained_variance(&self) -> Vec<T> {
        let total: T = self.eigenvalues.iter().copied().sum();
        self.eigenvalues.iter().map(|&l| l / total).collect()
    }

    /// `((x − c) / s) · T_M` for rows already in the binary encoding.
    pub fn project_rows(&self, rows: ArrayView2<T>, n_components: usize) -> Result<Array2<T>> {
        if rows.ncols() != self.column_names.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} binary columns", self.column_names.len()),
                found: format!("{}", rows.ncols()),
            });
        }
        if n_components == 0 || n_components > self.eigenvalues.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("1..={} components", self.eigenvalues.len()),
                found: format!("{n_components}"),
            });
        }
        let c = Array1::from(self.column_centers.clone());
        let s = Array1::from(self.column_scales.clone());
        let z = (&rows - &c) / &s;
        Ok(z.dot(&self.loadings.slice(ndarray::s![.., ..n_components])))
    }

    pub fn project(&self, zb: &BinaryMatrix, n_components: usize) -> Result<ScoreMatrix<T>>
    where
        T: Serialize,
    {
        if zb.column_names() != self.column_names {
            return Err(Error::ModelMismatch("binary columns differ from the fitted model".into()));
        }
        let scores = self.project_rows(zb.to_real::<T>().view(), n_components)?;
        Ok(ScoreMatrix { model_fingerprint: self.fingerprint(), row_ids: zb.row_ids().to_vec(), scores })
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        Ok(serde_json::from_str(text)?)
    }
}

impl<T: Real + Serialize> Projector<T> for PcaModel<T> {
    fn fingerprint(&self) -> String {
        PcaModel::fingerprint(self)
    }

    fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    fn score_dataset(&self, data: &Dataset, n_components: usize) -> Result<ScoreMatrix<T>> {
        self.project(&recode_ordinal_to_binary(data)?, n_components)
    }
}

/// Scree table: component, eigenvalue, proportion and cumulative proportion.
pub fn write_scree_csv<T: Real, W: Write>(eigenvalues: &[T], writer: W) -> Result<()> {
    let total: T = eigenvalues.iter().copied().sum();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["component", "eigenvalue", "proportion", "cumulative"])?;
    let mut cum = T::zero();
    for (j, &l) in eigenvalues.iter().enumerate() {
        let p = l / total;
        cum += p;
        w.write_record([(j + 1).to_string(), format!("{l:.10}"), format!("{p:.10}"), format!("{cum:.10}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureDef, FeatureSchema, GaitRecord};
    use std::sync::Arc;

    fn binary_dataset(rows: &[[u16; 2]]) -> Dataset {
        let schema = FeatureSchema::from_features(vec![
            FeatureDef::ordered("a", &["no", "yes"]),
            FeatureDef::ordered("b", &["no", "yes"]),
        ])
        .unwrap();
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, r)| GaitRecord {
                individual_id: format!("p{i}"),
                occasion_id: "1".into(),
                values: r.iter().map(|&v| Some(v)).collect(),
                demographics: None,
            })
            .collect();
        Dataset::new(Arc::new(schema), records).unwrap()
    }

    #[test]
    fn uncorrelated_balanced_columns() {
        let data = binary_dataset(&[[0, 0], [0, 1], [1, 0], [1, 1]]);
        let zb = recode_ordinal_to_binary(&data).unwrap();
        let m: PcaModel<f64> = fit_pca(&zb, PcaBasis::Correlation).unwrap();
        assert!((m.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((m.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert_eq!(m.loadings[[0, 0]], 1.0);
        assert_eq!(m.loadings[[1, 1]], 1.0);
        let scores = m.project(&zb, 2).unwrap();
        // standardized 0/1 column with n−1 scaling: ±0.5 / sqrt(1/3)
        let expected = 0.5 / (1.0_f64 / 3.0).sqrt();
        assert!((scores.scores[[3, 0]] - expected).abs() < 1e-12);
        assert!((scores.scores[[0, 0]] + expected).abs() < 1e-12);
    }

    #[test]
    fn constant_column_rejected_in_correlation_basis() {
        let data = binary_dataset(&[[0, 1], [1, 1], [1, 1]]);
        let zb = recode_ordinal_to_binary(&data).unwrap();
        assert!(matches!(fit_pca::<f64>(&zb, PcaBasis::Correlation), Err(Error::ConstantColumn { .. })));
        assert!(fit_pca::<f64>(&zb, PcaBasis::Covariance).is_ok());
    }

    #[test]
    fn json_round_trip_keeps_fingerprint() {
        let data = binary_dataset(&[[0, 0], [0, 1], [1, 1], [1, 1], [0, 0]]);
        let zb = recode_ordinal_to_binary(&data).unwrap();
        let m: PcaModel<f64> = fit_pca(&zb, PcaBasis::Correlation).unwrap();
        let back = PcaModel::<f64>::from_json(&m.to_json()).unwrap();
        assert_eq!(m.fingerprint(), back.fingerprint());
    }
}
