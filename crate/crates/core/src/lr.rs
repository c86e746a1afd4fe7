//! Two-level likelihood ratios on principal component scores.
//!
//! Per component the between-individual density of means is a Gaussian KDE
//! and observations scatter normally around an individual's mean. The LR of
//! two scores then has a closed form: a difference term times a KDE evaluated
//! at the precision-weighted mean, over the product of the two marginals.

use std::collections::HashMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::{ScoreMatrix, ScoreRow};
use crate::quadrature::{integrate, QuadratureOptions};
use crate::scalar::Real;
use crate::special::{ln_normal_pdf, log_sum_exp};

pub const WITHIN_VARIANCE_FLOOR: f64 = 1e-6;
pub const BANDWIDTH_FLOOR: f64 = 1e-3;
pub const DEFAULT_TRUNCATION: f64 = 1e-8;

/// `0.9 · min(sd, IQR/1.34) · n^(−1/5)`.
pub fn silverman_rule<T: Real>(sd: T, iqr: T, n: usize) -> T {
    T::of(0.9) * sd.min(iqr / T::of(1.34)) * T::of_usize(n).powf(T::of(-0.2))
}

/// Linear-interpolation sample quantile of sorted data.
fn sorted_quantile<T: Real>(sorted: &[T], p: f64) -> T {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Silverman bandwidth with sample sd (n−1). A zero IQR falls back to the sd
/// alone; if both are zero the bandwidth is floored.
pub fn silverman_bandwidth<T: Real>(samples: &[T]) -> Result<T> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: n });
    }
    let mean = samples.iter().copied().sum::<T>() / T::of_usize(n);
    let sd = (samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / T::of_usize(n - 1)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let h = if sd > T::zero() && iqr > T::zero() {
        silverman_rule(sd, iqr, n)
    } else if sd > T::zero() {
        T::of(0.9) * sd * T::of_usize(n).powf(T::of(-0.2))
    } else {
        log::warn!("degenerate KDE support (zero spread); bandwidth floored at {BANDWIDTH_FLOOR}");
        T::of(BANDWIDTH_FLOOR)
    };
    Ok(h)
}

/// Gaussian kernel density estimate of one component's individual means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDensity<T> {
    support: Vec<T>,
    bandwidth: T,
}

impl<T: Real> KernelDensity<T> {
    pub fn fit(support: Vec<T>) -> Result<Self> {
        let bandwidth = silverman_bandwidth(&support)?;
        Ok(Self { support, bandwidth })
    }

    pub fn with_bandwidth(support: Vec<T>, bandwidth: T) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, found: 0 });
        }
        if !(bandwidth > T::zero()) {
            return Err(Error::ConfigInvalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { support, bandwidth })
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn density(&self, x: T) -> T {
        self.ln_marginal(x, T::zero()).exp()
    }

    /// `ln (1/n) Σ_i N(y; z_i, var + h²)`: the KDE convolved with a normal.
    pub fn ln_marginal(&self, y: T, var: T) -> T {
        let total = var + self.bandwidth * self.bandwidth;
        let terms: Vec<T> = self.support.iter().map(|&z| ln_normal_pdf(y - z, total)).collect();
        log_sum_exp(&terms) - T::of_usize(self.support.len()).ln()
    }

    fn range(&self) -> (T, T) {
        self.support
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &z| (lo.min(z), hi.max(z)))
    }
}

/// One KDE per component, fitted to population scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetweenModel<T> {
    pub components: Vec<KernelDensity<T>>,
}

impl<T: Real> BetweenModel<T> {
    pub fn fit(scores: ArrayView2<T>) -> Result<Self> {
        let components =
            scores.columns().into_iter().map(|c| KernelDensity::fit(c.to_vec())).collect::<Result<Vec<_>>>()?;
        Ok(Self { components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Where a set of within-individual variances came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WithinProvenance {
    Estimated { source: String, individuals: usize, observations: usize },
    Preset { name: String },
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinModel<T> {
    pub variances: Vec<T>,
    pub provenance: WithinProvenance,
}

/// Named variance presets from two repeated-measurement studies. `dataset-a`
/// has much larger within-individual variation than `dataset-b`.
pub const PRESETS: [(&str, [f64; 4]); 2] =
    [("dataset-a", [0.113, 0.263, 0.022, 0.517]), ("dataset-b", [0.007, 0.010, 0.119, 0.033])];

impl<T: Real> WithinModel<T> {
    /// Variances below the floor are raised to it.
    pub fn new(variances: Vec<T>, provenance: WithinProvenance) -> Result<Self> {
        let floor = T::of(WITHIN_VARIANCE_FLOOR);
        let variances = variances
            .into_iter()
            .enumerate()
            .map(|(j, v)| {
                if !(v >= T::zero()) || !v.is_finite() {
                    return Err(Error::ConfigInvalid(format!("within variance {} is {v}", j + 1)));
                }
                if v < floor {
                    log::warn!("within variance of component {} floored at {WITHIN_VARIANCE_FLOOR}", j + 1);
                }
                Ok(v.max(floor))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { variances, provenance })
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, values) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown variance preset '{name}'")))?;
        Self::new(values.iter().map(|&v| T::of(v)).collect(), WithinProvenance::Preset { name: name.into() })
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { variances: self.variances.iter().map(|&v| v * factor).collect(), provenance: self.provenance.clone() }
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }
}

/// `s_j² = n / (m(m−n)) · Σ_i C_i Σ_k (z_kj − z̄_ij)²` over `n` groups with
/// `C_i` rows each and `m` rows in total.
pub fn estimate_within_variance<T: Real>(scores: ArrayView2<T>, groups: &[Vec<usize>]) -> Result<Vec<T>> {
    let groups: Vec<&Vec<usize>> = groups.iter().filter(|g| !g.is_empty()).collect();
    let n = groups.len();
    let m: usize = groups.iter().map(|g| g.len()).sum();
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    if m == n {
        return Err(Error::NoReplication);
    }
    let factor = T::of_usize(n) / (T::of_usize(m) * T::of_usize(m - n));
    let floor = T::of(WITHIN_VARIANCE_FLOOR);
    Ok((0..scores.ncols())
        .map(|j| {
            let mut acc = T::zero();
            for g in &groups {
                let c = T::of_usize(g.len());
                let mean = g.iter().map(|&k| scores[[k, j]]).sum::<T>() / c;
                let ss = g.iter().map(|&k| (scores[[k, j]] - mean).powi(2)).sum::<T>();
                acc += c * ss;
            }
            (factor * acc).max(floor)
        })
        .collect())
}

/// Row indices grouped by individual id, in order of first appearance.
pub fn groups_by_individual<T>(scores: &ScoreMatrix<T>) -> Vec<Vec<usize>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (row, (id, _)) in scores.row_ids.iter().enumerate() {
        let g = *index.entry(id.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(row);
    }
    groups
}

pub fn within_model_from_scores<T: Real>(scores: &ScoreMatrix<T>, source: &str) -> Result<WithinModel<T>> {
    let groups = groups_by_individual(scores);
    let variances = estimate_within_variance(scores.scores.view(), &groups)?;
    WithinModel::new(
        variances,
        WithinProvenance::Estimated { source: source.into(), individuals: groups.len(), observations: scores.nrows() },
    )
}

/// Closed-form `ln LR` for one component. `v1`, `v2` are the within
/// variances of the two scores (a mean of `k` occasions has variance `s²/k`).
pub fn ln_lr_component<T: Real>(y1: T, v1: T, y2: T, v2: T, kde: &KernelDensity<T>) -> T {
    let two = T::of(2.0);
    let (w, v_post) = if v1 == v2 { ((y1 + y2) / two, v1 / two) } else { ((v2 * y1 + v1 * y2) / (v1 + v2), v1 * v2 / (v1 + v2)) };
    let diff = ln_normal_pdf(y1 - y2, v1 + v2);
    diff + kde.ln_marginal(w, v_post) - (kde.ln_marginal(y1, v1) + kde.ln_marginal(y2, v2))
}

/// Same quantity as [`ln_lr_component`] with the common within variance `s2`.
pub fn ln_lr_per_pc<T: Real>(y1: T, y2: T, kde: &KernelDensity<T>, s2: T) -> T {
    ln_lr_component(y1, s2, y2, s2, kde)
}

/// Reference value for [`ln_lr_component`] obtained by integrating the
/// numerator and both marginals numerically.
pub fn ln_lr_component_quadrature(y1: f64, v1: f64, y2: f64, v2: f64, kde: &KernelDensity<f64>) -> Result<f64> {
    let h = kde.bandwidth();
    let h2 = h * h;
    let (zmin, zmax) = kde.range();
    let reach = 8.0 * (h2 + v1.max(v2)).sqrt();
    let lo = zmin.min(y1).min(y2) - reach;
    let hi = zmax.max(y1).max(y2) + reach;
    // narrow peaks slip between Kronrod nodes, so the domain is cut finer
    // than the narrowest factor of any integrand
    let width = 1.0 / (1.0 / v1 + 1.0 / v2 + 1.0 / h2).sqrt();
    let pieces = (((hi - lo) / width).ceil() as usize).clamp(16, 20_000);
    let breaks: Vec<f64> = (1..pieces).map(|k| lo + (hi - lo) * k as f64 / pieces as f64).collect();
    let opts = QuadratureOptions { max_intervals: pieces + 4000, ..QuadratureOptions::default() };

    let ln_prior = |t: f64| kde.ln_marginal(t, 0.0);
    let ln_integral = |ln_g: &dyn Fn(f64) -> f64| -> Result<f64> {
        let shift = breaks.iter().map(|&t| ln_g(t)).fold(f64::NEG_INFINITY, f64::max);
        let r = integrate(|t: f64| (ln_g(t) - shift).exp(), lo, hi, &breaks, opts)?;
        Ok(r.value.ln() + shift)
    };
    let num = ln_integral(&|t| ln_normal_pdf(y1 - t, v1) + ln_normal_pdf(y2 - t, v2) + ln_prior(t))?;
    let d1 = ln_integral(&|t| ln_normal_pdf(y1 - t, v1) + ln_prior(t))?;
    let d2 = ln_integral(&|t| ln_normal_pdf(y2 - t, v2) + ln_prior(t))?;
    Ok(num - (d1 + d2))
}

/// Per-component and cumulative LRs of one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrResult<T> {
    pub per_component_ln: Vec<T>,
    /// untruncated `ln Π_{j≤m} LR_j` for each `m`
    pub cumulative_ln: Vec<T>,
    pub truncation: Option<T>,
}

impl<T: Real> LrResult<T> {
    pub fn from_components(per_component_ln: Vec<T>, truncation: Option<T>) -> Self {
        let mut acc = T::zero();
        let cumulative_ln = per_component_ln
            .iter()
            .map(|&l| {
                acc += l;
                acc
            })
            .collect();
        Self { per_component_ln, cumulative_ln, truncation }
    }

    pub fn n_components(&self) -> usize {
        self.per_component_ln.len()
    }

    pub fn truncated_at(&self, m: usize) -> bool {
        self.truncation.is_some_and(|f| self.cumulative_ln[m - 1] < f.ln())
    }

    /// Reported LR over the first `m` components; exactly the floor when
    /// truncated.
    pub fn lr_at(&self, m: usize) -> T {
        match self.truncation {
            Some(f) if self.truncated_at(m) => f,
            _ => self.cumulative_ln[m - 1].exp(),
        }
    }

    pub fn ln_lr_at(&self, m: usize) -> T {
        match self.truncation {
            Some(f) if self.truncated_at(m) => f.ln(),
            _ => self.cumulative_ln[m - 1],
        }
    }

    pub fn log10_lr_at(&self, m: usize) -> T {
        match self.truncation {
            Some(f) if self.truncated_at(m) => f.log10(),
            _ => self.cumulative_ln[m - 1] / T::LN_10(),
        }
    }

    pub fn lr(&self) -> T {
        self.lr_at(self.n_components())
    }

    pub fn ln_lr(&self) -> T {
        self.ln_lr_at(self.n_components())
    }

    pub fn log10_lr(&self) -> T {
        self.log10_lr_at(self.n_components())
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated_at(self.n_components())
    }
}

/// Between- and within-individual models tied to the projection that
/// produced their scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel<T> {
    pub projector_fingerprint: String,
    pub between: BetweenModel<T>,
    pub within: WithinModel<T>,
}

impl<T: Real> LrModel<T> {
    pub fn new(projector_fingerprint: String, between: BetweenModel<T>, within: WithinModel<T>) -> Self {
        Self { projector_fingerprint, between, within }
    }

    pub fn max_components(&self) -> usize {
        self.between.len().min(self.within.len())
    }

    fn check_components(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.max_components() {
            return Err(Error::ShapeMismatch {
                expected: format!("1..={} components", self.max_components()),
                found: format!("{m}"),
            });
        }
        Ok(())
    }

    /// Compares two single observations over the first `m` components.
    pub fn compare(&self, y1: &ScoreRow<'_, T>, y2: &ScoreRow<'_, T>, m: usize, truncation: Option<T>) -> Result<LrResult<T>> {
        for row in [y1.model_fingerprint, y2.model_fingerprint] {
            if row != self.projector_fingerprint {
                return Err(Error::ModelMismatch(format!(
                    "scores from model {} but LR model expects {}",
                    row, self.projector_fingerprint
                )));
            }
        }
        self.compare_means(y1.values.as_slice().expect("contiguous row"), 1, y2.values.as_slice().expect("contiguous row"), 1, m, truncation)
    }

    /// Compares the mean scores of `n1` and `n2` occasions.
    pub fn compare_means(&self, y1: &[T], n1: usize, y2: &[T], n2: usize, m: usize, truncation: Option<T>) -> Result<LrResult<T>> {
        self.check_components(m)?;
        if y1.len() < m || y2.len() < m {
            return Err(Error::ShapeMismatch { expected: format!("{m} scores"), found: format!("{} and {}", y1.len(), y2.len()) });
        }
        let per = (0..m)
            .map(|j| {
                let s2 = self.within.variances[j];
                let v1 = s2 / T::of_usize(n1);
                let v2 = s2 / T::of_usize(n2);
                ln_lr_component(y1[j], v1, y2[j], v2, &self.between.components[j])
            })
            .collect();
        Ok(LrResult::from_components(per, truncation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn silverman_oracle() {
        let h = silverman_rule(1.0_f64, 1.349, 100);
        assert!((h - 0.358_296_453_498_147_5).abs() < 1e-12);
    }

    #[test]
    fn bandwidth_floor_for_constant_support() {
        assert_eq!(silverman_bandwidth(&[2.0_f64; 5]).unwrap(), BANDWIDTH_FLOOR);
    }

    #[test]
    fn within_variance_example() {
        let scores = array![[0.0_f64], [2.0], [5.0], [5.0]];
        let v = estimate_within_variance(scores.view(), &[vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(v, vec![1.0]);
        assert!(matches!(estimate_within_variance(scores.view(), &[vec![0], vec![1]]), Err(Error::NoReplication)));
    }

    #[test]
    fn single_point_kde_matches_normal_algebra() {
        // one support point at 0, h = 1, s² = 1, y1 = y2 = 0:
        // num = N(0;0,2) N(0;0,1.5), den = N(0;0,2)², LR = sqrt(4/3)
        let kde = KernelDensity::with_bandwidth(vec![0.0_f64], 1.0).unwrap();
        let lr = ln_lr_per_pc(0.0, 0.0, &kde, 1.0).exp();
        assert!((lr - 1.154_700_538_379_251_5).abs() < 1e-12);
        let q = ln_lr_component_quadrature(0.0, 1.0, 0.0, 1.0, &kde).unwrap().exp();
        assert!((q - 1.154_700_538_379_251_5).abs() < 1e-9);
    }

    #[test]
    fn closed_form_agrees_with_quadrature_unequal_variances() {
        let kde = KernelDensity::with_bandwidth(vec![-1.0, 0.2, 0.5, 2.0], 0.4).unwrap();
        for (y1, v1, y2, v2) in [(0.1, 0.05, 0.3, 0.2), (-2.0, 0.5, 1.0, 0.01), (3.0, 0.02, 3.1, 0.02)] {
            let c = ln_lr_component(y1, v1, y2, v2, &kde);
            let q = ln_lr_component_quadrature(y1, v1, y2, v2, &kde).unwrap();
            assert!((c - q).abs() < 1e-7, "{c} vs {q}");
        }
    }

    #[test]
    fn truncation_reports_floor_exactly() {
        let r = LrResult::from_components(vec![-30.0_f64], Some(DEFAULT_TRUNCATION));
        assert!(r.is_truncated());
        assert_eq!(r.lr(), 1e-8);
        let r = LrResult::from_components(vec![-30.0_f64], None);
        assert!(!r.is_truncated());
        assert_eq!(r.lr(), (-30.0_f64).exp());
    }

    #[test]
    fn presets() {
        let w = WithinModel::<f64>::preset("dataset-b").unwrap();
        assert_eq!(w.variances, vec![0.007, 0.010, 0.119, 0.033]);
        assert!(WithinModel::<f64>::preset("nope").is_err());
    }
}
