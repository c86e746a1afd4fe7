//! Components of the polychoric correlation matrix. Observations are scored
//! through the conditional mean of the latent normal given each level.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{json_fingerprint, ranked_eigen, Projector, ScoreMatrix};
use crate::data::{Dataset, PopulationDataset};
use crate::error::{Error, Result};
use crate::polychoric::{estimate_thresholds, polychoric_matrix};
use crate::scalar::Real;
use crate::special::{normal_cdf, normal_pdf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolychoricPcaModel<T> {
    pub feature_names: Vec<String>,
    /// `E[Z | level]` for every level of every feature
    pub level_scores: Vec<Vec<T>>,
    pub centers: Vec<T>,
    pub loadings: Array2<T>,
    pub eigenvalues: Vec<T>,
    pub schema_fingerprint: String,
}

/// `E[Z | t_{l−1} < Z ≤ t_l]` for a standard normal `Z`, with the outer
/// thresholds at ±∞. Empty cells fall back to their finite boundary.
pub fn conditional_level_means<T: Real>(thresholds: &[T]) -> Vec<T> {
    let n_levels = thresholds.len() + 1;
    (0..n_levels)
        .map(|l| {
            let lo = if l == 0 { T::neg_infinity() } else { thresholds[l - 1] };
            let hi = if l + 1 == n_levels { T::infinity() } else { thresholds[l] };
            let mass = normal_cdf(hi) - normal_cdf(lo);
            let dens = |t: T| if t.is_finite() { normal_pdf(t) } else { T::zero() };
            if mass > T::of(1e-300) {
                (dens(lo) - dens(hi)) / mass
            } else if lo.is_finite() && hi.is_finite() {
                (lo + hi) / T::of(2.0)
            } else if hi.is_finite() {
                hi
            } else if lo.is_finite() {
                lo
            } else {
                let mut finite = thresholds.iter().copied().filter(|t| t.is_finite());
                let edge = if hi < T::zero() { finite.next() } else { finite.last() };
                edge.unwrap_or_else(T::zero)
            }
        })
        .collect()
}

pub fn fit_polychoric_pca<T: Real>(population: &PopulationDataset) -> Result<PolychoricPcaModel<T>> {
    let schema = population.schema();
    if population.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: population.len() });
    }
    let matrix = polychoric_matrix::<T>(population)?;
    let (eigenvalues, loadings) = ranked_eigen(&matrix.values);

    let mut level_scores = Vec::with_capacity(schema.len());
    let mut centers = Vec::with_capacity(schema.len());
    for (f, def) in schema.features().iter().enumerate() {
        let mut counts = vec![0u64; def.n_levels()];
        for r in population.records() {
            if let Some(v) = r.values[f] {
                counts[v as usize] += 1;
            }
        }
        let scores = match estimate_thresholds::<T>(&counts) {
            Ok(t) => conditional_level_means(&t),
            Err(Error::DegenerateMargins(_)) => {
                log::warn!("feature '{}' is constant in the population; scored as 0", def.name);
                vec![T::zero(); def.n_levels()]
            }
            Err(e) => return Err(e),
        };
        let total: u64 = counts.iter().sum();
        let center = counts.iter().zip(&scores).map(|(&c, &s)| T::of(c as f64) * s).sum::<T>()
            / T::of(total.max(1) as f64);
        level_scores.push(scores);
        centers.push(center);
    }
    Ok(PolychoricPcaModel {
        feature_names: matrix.names,
        level_scores,
        centers,
        loadings,
        eigenvalues,
        schema_fingerprint: schema.fingerprint(),
    })
}

impl<T: Real + Serialize> Projector<T> for PolychoricPcaModel<T> {
    fn fingerprint(&self) -> String {
        json_fingerprint(self)
    }

    fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    fn score_dataset(&self, data: &Dataset, n_components: usize) -> Result<ScoreMatrix<T>> {
        let schema = data.schema();
        if schema.fingerprint() != self.schema_fingerprint {
            return Err(Error::ModelMismatch("dataset schema differs from the fitted model".into()));
        }
        if n_components == 0 || n_components > self.eigenvalues.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("1..={} components", self.eigenvalues.len()),
                found: format!("{n_components}"),
            });
        }
        let mut x = Array2::<T>::zeros((data.len(), schema.len()));
        for (i, rec) in data.records().iter().enumerate() {
            for (f, v) in rec.values.iter().enumerate() {
                let v = v.ok_or_else(|| Error::MissingValue { row: i, feature: self.feature_names[f].clone() })?;
                x[[i, f]] = self.level_scores[f][v as usize] - self.centers[f];
            }
        }
        let scores = x.dot(&self.loadings.slice(ndarray::s![.., ..n_components]));
        Ok(ScoreMatrix {
            model_fingerprint: self.fingerprint(),
            row_ids: data.records().iter().map(|r| (r.individual_id.clone(), r.occasion_id.clone())).collect(),
            scores,
        })
    }
}

impl<T: Real> PolychoricPcaModel<T> {
    pub fn explained_variance(&self) -> Array1<T> {
        let total: T = self.eigenvalues.iter().copied().sum();
        self.eigenvalues.iter().map(|&l| l / total).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_binary_level_means() {
        let m = conditional_level_means(&[0.0_f64]);
        let expected = 0.797_884_560_802_865_4;
        assert!((m[0] + expected).abs() < 1e-12);
        assert!((m[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn level_means_are_increasing_and_centered() {
        let t = estimate_thresholds::<f64>(&[20, 30, 40, 10]).unwrap();
        let m = conditional_level_means(&t);
        assert!(m.windows(2).all(|w| w[0] < w[1]));
        let mean = [0.2, 0.3, 0.4, 0.1].iter().zip(&m).map(|(p, v)| p * v).sum::<f64>();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn empty_extreme_level_uses_threshold() {
        let t = estimate_thresholds::<f64>(&[0, 50, 50]).unwrap();
        let m = conditional_level_means(&t);
        assert_eq!(m[0], t[1]);
    }
}
