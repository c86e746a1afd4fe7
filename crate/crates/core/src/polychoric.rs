//! Polychoric correlation between ordinal features.
//!
//! Two-step estimator: thresholds come from each feature's marginal
//! proportions, then the correlation maximizes the multinomial likelihood of
//! the table under a latent standard bivariate normal.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::PopulationDataset;
use crate::error::{Error, Result};
use crate::optimize::maximize_brent;
use crate::scalar::Real;
use crate::special::{bvn_cdf, normal_quantile};

/// Value assigned to pairs whose likelihood keeps increasing toward ±1.
pub const RHO_CLAMP: f64 = 0.9999;
/// Search interval half-width for the correlation.
pub const RHO_SEARCH_LIMIT: f64 = 0.999;
const GRID_POINTS: usize = 201;
const RHO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Array2<u64>,
}

impl ContingencyTable {
    pub fn new(counts: Array2<u64>) -> Result<Self> {
        if counts.sum() < 2 {
            return Err(Error::InsufficientData("contingency table needs at least two observations".into()));
        }
        Ok(Self { counts })
    }

    /// Cross-tabulates features `a` and `b`, skipping rows missing either.
    pub fn from_features(dataset: &PopulationDataset, a: usize, b: usize) -> Result<Self> {
        let fa = &dataset.schema().features()[a];
        let fb = &dataset.schema().features()[b];
        let mut counts = Array2::<u64>::zeros((fa.n_levels(), fb.n_levels()));
        for r in dataset.records() {
            if let (Some(x), Some(y)) = (r.values[a], r.values[b]) {
                counts[[x as usize, y as usize]] += 1;
            }
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn row_margins(&self) -> Vec<u64> {
        self.counts.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_margins(&self) -> Vec<u64> {
        self.counts.columns().into_iter().map(|c| c.sum()).collect()
    }

    pub fn transposed(&self) -> Self {
        Self { counts: self.counts.t().to_owned() }
    }

    /// Drops empty rows and columns; they carry no likelihood information.
    fn collapsed(&self) -> Array2<u64> {
        let rows: Vec<usize> = (0..self.counts.nrows()).filter(|&i| self.counts.row(i).sum() > 0).collect();
        let cols: Vec<usize> = (0..self.counts.ncols()).filter(|&j| self.counts.column(j).sum() > 0).collect();
        Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| self.counts[[rows[i], cols[j]]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolychoricResult<T> {
    pub rho: T,
    /// thresholds over the non-empty levels of each feature
    pub thresholds_a: Vec<T>,
    pub thresholds_b: Vec<T>,
    pub clamped: bool,
    pub log_likelihood: T,
    pub method: &'static str,
}

/// `t_l = Φ⁻¹(P(level ≤ l))` for `l = 0..L−2`. Empty extreme categories give
/// infinite thresholds; strictly increasing when every category is observed.
pub fn estimate_thresholds<T: Real>(counts: &[u64]) -> Result<Vec<T>> {
    let non_empty = counts.iter().filter(|&&c| c > 0).count();
    if non_empty < 2 {
        return Err(Error::DegenerateMargins(format!(
            "{non_empty} non-empty categories in margins {counts:?}"
        )));
    }
    let total: u64 = counts.iter().sum();
    let mut cum = 0u64;
    Ok(counts[..counts.len() - 1]
        .iter()
        .map(|&c| {
            cum += c;
            normal_quantile(T::of(cum as f64 / total as f64))
        })
        .collect())
}

fn extended<T: Real>(t: &[T]) -> Vec<T> {
    let mut e = Vec::with_capacity(t.len() + 2);
    e.push(T::neg_infinity());
    e.extend_from_slice(t);
    e.push(T::infinity());
    e
}

/// Multinomial log-likelihood of `counts` given thresholds and correlation.
/// Zero cells contribute nothing.
pub fn table_log_likelihood<T: Real>(counts: &Array2<u64>, ta: &[T], tb: &[T], rho: T) -> T {
    let ea = extended(ta);
    let eb = extended(tb);
    let cdf = Array2::from_shape_fn((ea.len(), eb.len()), |(i, j)| bvn_cdf(ea[i], eb[j], rho));
    let tiny = T::min_positive_value();
    let mut ll = T::zero();
    for ((i, j), &n) in counts.indexed_iter() {
        if n == 0 {
            continue;
        }
        let p = cdf[[i + 1, j + 1]] - cdf[[i, j + 1]] - cdf[[i + 1, j]] + cdf[[i, j]];
        ll += T::of(n as f64) * p.max(tiny).ln();
    }
    ll
}

/// Non-zero cells lie on one monotone chain: +1 increasing, −1 decreasing.
fn monotone_chain(counts: &Array2<u64>) -> Option<i8> {
    let cells: Vec<(usize, usize)> =
        counts.indexed_iter().filter(|(_, &n)| n > 0).map(|(ij, _)| ij).collect();
    let all_pairs = |ok: &dyn Fn((usize, usize), (usize, usize)) -> bool| {
        cells.iter().all(|&a| cells.iter().all(|&b| ok(a, b)))
    };
    if all_pairs(&|(i, j), (k, l)| (i <= k && j <= l) || (i >= k && j >= l)) {
        return Some(1);
    }
    if all_pairs(&|(i, j), (k, l)| (i <= k && j >= l) || (i >= k && j <= l)) {
        return Some(-1);
    }
    None
}

pub fn polychoric_rho<T: Real>(table: &ContingencyTable) -> Result<PolychoricResult<T>> {
    let ta: Vec<T> = estimate_thresholds(&table.row_margins())?;
    let tb: Vec<T> = estimate_thresholds(&table.col_margins())?;
    let counts = table.collapsed();
    let ta: Vec<T> = ta.into_iter().filter(|t| t.is_finite()).collect();
    let tb: Vec<T> = tb.into_iter().filter(|t| t.is_finite()).collect();
    // interior empty categories leave duplicated thresholds
    let dedup = |mut v: Vec<T>| {
        v.dedup();
        v
    };
    let (ta, tb) = (dedup(ta), dedup(tb));
    debug_assert_eq!(ta.len() + 1, counts.nrows());
    debug_assert_eq!(tb.len() + 1, counts.ncols());

    let ll = |rho: T| table_log_likelihood(&counts, &ta, &tb, rho);
    let clamp = |sign: T| {
        let rho = sign * T::of(RHO_CLAMP);
        PolychoricResult {
            rho,
            log_likelihood: ll(rho),
            thresholds_a: ta.clone(),
            thresholds_b: tb.clone(),
            clamped: true,
            method: "two-step",
        }
    };

    if let Some(sign) = monotone_chain(&counts) {
        return Ok(clamp(T::of(sign as f64)));
    }

    let limit = T::of(RHO_SEARCH_LIMIT);
    let step = T::of(2.0 * RHO_SEARCH_LIMIT / (GRID_POINTS - 1) as f64);
    let (mut best_rho, mut best_ll) = (T::zero(), T::neg_infinity());
    for g in 0..GRID_POINTS {
        let rho = -limit + step * T::of_usize(g);
        let v = ll(rho);
        if v > best_ll {
            best_ll = v;
            best_rho = rho;
        }
    }
    let lo = (best_rho - step).max(-limit);
    let hi = (best_rho + step).min(limit);
    let (rho, v) = maximize_brent(ll, lo, hi, T::of(RHO_TOL));
    if v >= best_ll {
        best_rho = rho;
        best_ll = v;
    }
    if best_rho.abs() >= limit - T::of(2.0 * RHO_TOL) {
        return Ok(clamp(best_rho.signum()));
    }
    Ok(PolychoricResult {
        rho: best_rho,
        thresholds_a: ta,
        thresholds_b: tb,
        clamped: false,
        log_likelihood: best_ll,
        method: "two-step",
    })
}

/// Correlation matrix over all features with per-pair flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PolychoricMatrix<T> {
    pub names: Vec<String>,
    pub values: Array2<T>,
    pub clamped: Array2<bool>,
    /// pair skipped because a margin had fewer than two non-empty levels
    pub degenerate: Array2<bool>,
}

impl<T: Real> PolychoricMatrix<T> {
    pub fn absolute(&self) -> Array2<T> {
        self.values.mapv(|v| v.abs())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["feature".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.names.iter().zip(self.values.rows()) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Sidecar listing flagged pairs.
    pub fn write_flags_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature_a", "feature_b", "flag"])?;
        let n = self.names.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let flag = if self.degenerate[[i, j]] {
                    "degenerate"
                } else if self.clamped[[i, j]] {
                    "clamped"
                } else {
                    continue;
                };
                w.write_record([self.names[i].as_str(), self.names[j].as_str(), flag])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn polychoric_matrix<T: Real>(dataset: &PopulationDataset) -> Result<PolychoricMatrix<T>> {
    let schema = dataset.schema();
    if schema.has_composites() {
        return Err(Error::SchemaViolation("split composite features before polychoric analysis".into()));
    }
    let n = schema.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let estimates: Vec<Result<PolychoricResult<T>>> = pairs
        .par_iter()
        .map(|&(i, j)| ContingencyTable::from_features(dataset, i, j).and_then(|t| polychoric_rho(&t)))
        .collect();

    let mut values = Array2::<T>::eye(n);
    let mut clamped = Array2::from_elem((n, n), false);
    let mut degenerate = Array2::from_elem((n, n), false);
    for (&(i, j), est) in pairs.iter().zip(estimates) {
        match est {
            Ok(r) => {
                values[[i, j]] = r.rho;
                values[[j, i]] = r.rho;
                clamped[[i, j]] = r.clamped;
                clamped[[j, i]] = r.clamped;
            }
            Err(Error::DegenerateMargins(msg)) | Err(Error::InsufficientData(msg)) => {
                log::warn!(
                    "polychoric({}, {}) set to 0: {msg}",
                    schema.features()[i].name,
                    schema.features()[j].name
                );
                degenerate[[i, j]] = true;
                degenerate[[j, i]] = true;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(PolychoricMatrix {
        names: schema.features().iter().map(|f| f.name.clone()).collect(),
        values,
        clamped,
        degenerate,
    })
}
