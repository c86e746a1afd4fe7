//! Binary and proportional-odds logistic regression of gait features on
//! demographic covariates, with block-wise covariate selection.

use std::io::Write;
use std::ops::Range;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::data::PopulationDataset;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_inverse, cholesky_solve};
use crate::scalar::Real;
use crate::special::normal_cdf;

const SCORE_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-10;
const MAX_ITER: usize = 200;
/// Coefficients beyond this magnitude are taken as divergence.
const SEPARATION_BOUND: f64 = 30.0;
pub const SIGNIFICANCE: f64 = 0.05;

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)`.
fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Covariate columns (the intercept is implicit) grouped into named blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    pub columns: Vec<String>,
    pub values: Array2<T>,
    pub blocks: Vec<(String, Range<usize>)>,
}

impl<T: Real> DesignMatrix<T> {
    pub fn new(columns: Vec<String>, values: Array2<T>) -> Result<Self> {
        if columns.len() != values.ncols() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} columns", columns.len()),
                found: format!("{}", values.ncols()),
            });
        }
        let blocks = vec![("covariates".to_string(), 0..columns.len())];
        Ok(Self { columns, values, blocks })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            values: self.values.select(ndarray::Axis(0), rows),
            blocks: self.blocks.clone(),
        }
    }

    /// Keeps the named blocks, in their original order.
    pub fn with_blocks(&self, names: &[&str]) -> Self {
        let mut cols = Vec::new();
        let mut blocks = Vec::new();
        for (name, range) in &self.blocks {
            if names.contains(&name.as_str()) {
                let start = cols.len();
                cols.extend(range.clone());
                blocks.push((name.clone(), start..cols.len()));
            }
        }
        Self {
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            values: self.values.select(ndarray::Axis(1), &cols),
            blocks,
        }
    }

    fn with_intercept(&self) -> Array2<T> {
        let n = self.nrows();
        let mut x = Array2::<T>::ones((n, self.columns.len() + 1));
        x.slice_mut(ndarray::s![.., 1..]).assign(&self.values);
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit<T> {
    /// intercept (binary) or exceedance intercepts `α_l` for `Y > l`
    pub alphas: Vec<T>,
    pub beta: Vec<T>,
    pub terms: Vec<String>,
    /// standard errors, alphas first then beta
    pub se: Vec<T>,
    pub z: Vec<T>,
    pub p: Vec<T>,
    pub log_likelihood: T,
    pub converged: bool,
    pub iterations: usize,
}

struct Objective<T> {
    ll: T,
    grad: Array1<T>,
    /// negative Hessian
    info: Array2<T>,
}

/// Damped Newton ascent. `eval` returns `None` outside the parameter space.
fn newton<T: Real>(
    start: Array1<T>,
    eval: impl Fn(&Array1<T>) -> Option<Objective<T>>,
) -> Result<(Array1<T>, Objective<T>, usize)> {
    let mut theta = start;
    let mut obj = eval(&theta).ok_or_else(|| Error::ConfigInvalid("invalid starting values".into()))?;
    let max_abs = |a: &Array1<T>| a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    for iter in 1..=MAX_ITER {
        let l = cholesky(&obj.info, T::of(1e-14)).ok_or(if iter == 1 { Error::RankDeficient } else { Error::SeparationDetected })?;
        let step = cholesky_solve(&l, &obj.grad);
        let step_size = max_abs(&step);
        let score = max_abs(&obj.grad);
        let done = step_size < T::of(STEP_TOL) || (score < T::of(SCORE_TOL) && step_size < T::of(1e-4));

        // near the optimum the gain drops below the rounding noise of ll
        let slack = T::of(64.0) * T::epsilon() * (T::one() + obj.ll.abs());
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..50 {
            let cand = &theta + &(&step * t);
            if let Some(o) = eval(&cand) {
                if o.ll >= obj.ll - slack {
                    accepted = Some((cand, o));
                    break;
                }
            }
            t = t / T::of(2.0);
        }
        match accepted {
            Some((cand, o)) => {
                theta = cand;
                obj = o;
            }
            None if done || score < T::of(SCORE_TOL) => return Ok((theta, obj, iter)),
            None => return Err(Error::NoConvergence { iterations: iter }),
        }
        if max_abs(&theta) > T::of(SEPARATION_BOUND) {
            return Err(Error::SeparationDetected);
        }
        if done {
            return Ok((theta, obj, iter));
        }
    }
    Err(Error::NoConvergence { iterations: MAX_ITER })
}

fn check_rank<T: Real>(x: &Array2<T>) -> Result<()> {
    let gram = x.t().dot(x);
    cholesky(&gram, T::of(1e-10)).map(|_| ()).ok_or(Error::RankDeficient)
}

fn wald<T: Real>(theta: &Array1<T>, info: &Array2<T>) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let l = cholesky(info, T::of(1e-14)).ok_or(Error::SeparationDetected)?;
    let cov = cholesky_inverse(&l);
    let se: Vec<T> = (0..theta.len()).map(|i| cov[[i, i]].sqrt()).collect();
    let z: Vec<T> = theta.iter().zip(&se).map(|(&b, &s)| b / s).collect();
    let p = z.iter().map(|&z| T::of(2.0) * normal_cdf(-z.abs())).collect();
    Ok((se, z, p))
}

pub fn fit_binary_logistic<T: Real>(design: &DesignMatrix<T>, y: &[bool]) -> Result<LogisticFit<T>> {
    let n = design.nrows();
    if y.len() != n {
        return Err(Error::ShapeMismatch { expected: format!("{n} responses"), found: format!("{}", y.len()) });
    }
    let ones = y.iter().filter(|&&v| v).count();
    if ones == 0 || ones == n {
        return Err(Error::OneClassOnly);
    }
    let x = design.with_intercept();
    check_rank(&x)?;
    let k = x.ncols();

    let eval = |theta: &Array1<T>| {
        let eta = x.dot(theta);
        let mut ll = T::zero();
        let mut grad = Array1::<T>::zeros(k);
        let mut info = Array2::<T>::zeros((k, k));
        for i in 0..n {
            let e = eta[i];
            // residual y − p written so that relabeling negates it exactly
            let (lli, r) = if y[i] { (-softplus(-e), sigmoid(-e)) } else { (-softplus(e), -sigmoid(e)) };
            ll += lli;
            let w = sigmoid(e) * sigmoid(-e);
            let xi = x.row(i);
            for a in 0..k {
                grad[a] += r * xi[a];
                for b in 0..=a {
                    info[[a, b]] += w * xi[a] * xi[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[[b, a]] = info[[a, b]];
            }
        }
        Some(Objective { ll, grad, info })
    };

    let mut start = Array1::<T>::zeros(k);
    // written as a difference of logs so relabeling negates it exactly
    start[0] = T::of_usize(ones).ln() - T::of_usize(n - ones).ln();
    let (theta, obj, iterations) = newton(start, eval)?;
    let (se, z, p) = wald(&theta, &obj.info)?;
    Ok(LogisticFit {
        alphas: vec![theta[0]],
        beta: theta.iter().skip(1).copied().collect(),
        terms: design.columns.clone(),
        se,
        z,
        p,
        log_likelihood: obj.ll,
        converged: true,
        iterations,
    })
}

/// Proportional odds: `ln P(Y>l)/P(Y≤l) = α_l + β·x` for `l = 0..L−2`.
pub fn fit_ordinal_logistic<T: Real>(design: &DesignMatrix<T>, y: &[usize], n_levels: usize) -> Result<LogisticFit<T>> {
    let n = design.nrows();
    if y.len() != n {
        return Err(Error::ShapeMismatch { expected: format!("{n} responses"), found: format!("{}", y.len()) });
    }
    if n_levels < 2 {
        return Err(Error::OneClassOnly);
    }
    let mut counts = vec![0usize; n_levels];
    for &v in y {
        if v >= n_levels {
            return Err(Error::LevelAbsent { level: v });
        }
        counts[v] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::OneClassOnly);
    }
    if let Some(level) = counts.iter().position(|&c| c == 0) {
        return Err(Error::LevelAbsent { level });
    }
    check_rank(&design.with_intercept())?;
    let na = n_levels - 1;
    let p = design.columns.len();
    let k = na + p;
    let x = &design.values;

    let eval = |theta: &Array1<T>| {
        let alpha = theta.slice(ndarray::s![..na]);
        if alpha.windows(2).into_iter().any(|w| w[1] >= w[0]) {
            return None;
        }
        let beta = theta.slice(ndarray::s![na..]);
        let mut ll = T::zero();
        let mut grad = Array1::<T>::zeros(k);
        let mut hess = Array2::<T>::zeros((k, k));
        let g = |t: T| sigmoid(t) * sigmoid(-t);
        let gprime = |t: T| g(t) * (sigmoid(-t) - sigmoid(t));
        for i in 0..n {
            let xi = x.row(i);
            let eta = xi.dot(&beta);
            let c = y[i];
            let u = (c > 0).then(|| alpha[c - 1] + eta);
            let v = (c < na).then(|| alpha[c] + eta);
            // P(Y = c) = σ(u) − σ(v), evaluated on the side with less cancellation
            let prob = match (u, v) {
                (None, Some(v)) => sigmoid(-v),
                (Some(u), None) => sigmoid(u),
                (Some(u), Some(v)) if u + v > T::zero() => sigmoid(-v) - sigmoid(-u),
                (Some(u), Some(v)) => sigmoid(u) - sigmoid(v),
                (None, None) => unreachable!("at least two levels"),
            };
            if !(prob > T::zero()) {
                return None;
            }
            ll += prob.ln();
            let pu = u.map_or(T::zero(), |u| g(u) / prob);
            let pv = v.map_or(T::zero(), |v| -g(v) / prob);
            let puu = u.map_or(T::zero(), |u| gprime(u) / prob - pu * pu);
            let pvv = v.map_or(T::zero(), |v| -gprime(v) / prob - pv * pv);
            let puv = -pu * pv;
            let (ia, ib) = (c.checked_sub(1), (c < na).then_some(c));
            if let Some(a) = ia {
                grad[a] += pu;
                hess[[a, a]] += puu;
            }
            if let Some(b) = ib {
                grad[b] += pv;
                hess[[b, b]] += pvv;
            }
            if let (Some(a), Some(b)) = (ia, ib) {
                hess[[a, b]] += puv;
                hess[[b, a]] += puv;
            }
            let sb = pu + pv;
            let sbb = puu + T::of(2.0) * puv + pvv;
            for j in 0..p {
                grad[na + j] += sb * xi[j];
                if let Some(a) = ia {
                    let v = (puu + puv) * xi[j];
                    hess[[a, na + j]] += v;
                    hess[[na + j, a]] += v;
                }
                if let Some(b) = ib {
                    let v = (puv + pvv) * xi[j];
                    hess[[b, na + j]] += v;
                    hess[[na + j, b]] += v;
                }
                for l in 0..p {
                    hess[[na + j, na + l]] += sbb * xi[j] * xi[l];
                }
            }
        }
        Some(Objective { ll, grad, info: -hess })
    };

    let mut start = Array1::<T>::zeros(k);
    let mut above = n;
    for l in 0..na {
        above -= counts[l];
        start[l] = (T::of(above as f64) / T::of((n - above) as f64)).ln();
    }
    let (theta, obj, iterations) = newton(start, eval)?;
    let (se, z, pv) = wald(&theta, &obj.info)?;
    Ok(LogisticFit {
        alphas: theta.iter().take(na).copied().collect(),
        beta: theta.iter().skip(na).copied().collect(),
        terms: design.columns.clone(),
        se,
        z,
        p: pv,
        log_likelihood: obj.ll,
        converged: true,
        iterations,
    })
}

impl<T: Real> LogisticFit<T> {
    /// Category probabilities of each level for covariates `x`.
    pub fn category_probabilities(&self, x: &[T]) -> Vec<T> {
        let eta: T = x.iter().zip(&self.beta).map(|(&a, &b)| a * b).sum();
        let exceed: Vec<T> = self.alphas.iter().map(|&a| sigmoid(a + eta)).collect();
        let mut out = Vec::with_capacity(exceed.len() + 1);
        let mut prev = T::one();
        for &e in &exceed {
            out.push(prev - e);
            prev = e;
        }
        out.push(prev);
        out
    }

    /// `(term, estimate, se, p)` rows, intercepts first.
    pub fn coefficient_rows(&self) -> Vec<(String, T, T, T)> {
        let na = self.alphas.len();
        let names = (0..na)
            .map(|l| if na == 1 { "(intercept)".to_string() } else { format!("alpha_gt{l}") })
            .chain(self.terms.iter().cloned());
        names
            .zip(self.alphas.iter().chain(&self.beta))
            .enumerate()
            .map(|(i, (name, &est))| (name, est, self.se[i], self.p[i]))
            .collect()
    }
}

/// Demographic design over the population: the biological block (sex
/// indicators, height, weight and age band indices) plus ethnicity and
/// location indicator blocks, each dropping its first vocabulary level.
/// Indicator columns that are constant zero are dropped. Rows without
/// demographics are skipped; the returned indices map rows back.
pub fn demographic_design<T: Real>(population: &PopulationDataset) -> Result<(DesignMatrix<T>, Vec<usize>)> {
    let vocab = population.schema().demographics();
    let rows: Vec<usize> =
        (0..population.len()).filter(|&i| population.records()[i].demographics.is_some()).collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData("population has no demographic columns".into()));
    }
    let profiles: Vec<_> = rows.iter().map(|&i| population.records()[i].demographics.expect("filtered")).collect();

    let mut columns: Vec<String> = Vec::new();
    let mut data: Vec<Vec<T>> = Vec::new();
    let mut blocks = Vec::new();
    let indicators = |name: &str, labels: &[String], pick: &dyn Fn(usize) -> usize, columns: &mut Vec<String>, data: &mut Vec<Vec<T>>| {
        for (level, label) in labels.iter().enumerate().skip(1) {
            let col: Vec<T> = (0..profiles.len()).map(|r| if pick(r) == level { T::one() } else { T::zero() }).collect();
            if col.iter().all(|v| *v == T::zero()) {
                continue;
            }
            columns.push(format!("{name}[{label}]"));
            data.push(col);
        }
    };
    let start = columns.len();
    indicators("sex", &vocab.sex, &|r| profiles[r].sex, &mut columns, &mut data);
    for (name, pick) in [
        ("height", &(|r: usize| profiles[r].height) as &dyn Fn(usize) -> usize),
        ("weight", &|r: usize| profiles[r].weight),
        ("age", &|r: usize| profiles[r].age_group),
    ] {
        columns.push(name.to_string());
        data.push((0..profiles.len()).map(|r| T::of_usize(pick(r))).collect());
    }
    blocks.push(("biological".to_string(), start..columns.len()));
    let start = columns.len();
    indicators("ethnicity", &vocab.ethnicity, &|r| profiles[r].ethnicity, &mut columns, &mut data);
    blocks.push(("ethnicity".to_string(), start..columns.len()));
    let start = columns.len();
    indicators("location", &vocab.location, &|r| profiles[r].location, &mut columns, &mut data);
    blocks.push(("location".to_string(), start..columns.len()));

    let values = Array2::from_shape_fn((profiles.len(), columns.len()), |(i, j)| data[j][i]);
    Ok((DesignMatrix { columns, values, blocks }, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport<T> {
    pub feature: String,
    pub included_blocks: Vec<String>,
    pub fit: Option<LogisticFit<T>>,
    /// error text when the feature could not be fitted
    pub error: Option<String>,
}

/// Biological covariates always stay; the ethnicity and location blocks
/// enter iff any of their coefficients is significant when added alone.
pub fn covariate_selection<T: Real>(population: &PopulationDataset, feature: &str) -> Result<SelectionReport<T>> {
    let schema = population.schema();
    let f = schema
        .index_of(feature)
        .ok_or_else(|| Error::SchemaViolation(format!("unknown feature '{feature}'")))?;
    if schema.features()[f].split_rule.is_some() {
        return Err(Error::SchemaViolation(format!("composite feature '{feature}' must be split first")));
    }
    let n_levels = schema.features()[f].n_levels();
    let (design, rows) = demographic_design::<T>(population)?;
    let keep: Vec<usize> = (0..rows.len()).filter(|&r| population.records()[rows[r]].values[f].is_some()).collect();
    let design = design.select_rows(&keep);
    let y: Vec<usize> = keep.iter().map(|&r| population.records()[rows[r]].values[f].expect("filtered") as usize).collect();

    let fit = |d: &DesignMatrix<T>| -> Result<LogisticFit<T>> {
        if n_levels == 2 {
            let yb: Vec<bool> = y.iter().map(|&v| v == 1).collect();
            fit_binary_logistic(d, &yb)
        } else {
            fit_ordinal_logistic(d, &y, n_levels)
        }
    };
    let report = |included: Vec<String>, fit: Result<LogisticFit<T>>| SelectionReport {
        feature: feature.to_string(),
        included_blocks: included,
        error: fit.as_ref().err().map(|e| e.to_string()),
        fit: fit.ok(),
    };

    let mut included = vec!["biological".to_string()];
    for block in ["ethnicity", "location"] {
        let candidate = design.with_blocks(&["biological", block]);
        let Some((_, range)) = candidate.blocks.iter().find(|(n, _)| n == block) else { continue };
        if range.is_empty() {
            continue;
        }
        match fit(&candidate) {
            Ok(cf) => {
                let offset = cf.alphas.len();
                if range.clone().any(|j| cf.p[offset + j] < T::of(SIGNIFICANCE)) {
                    included.push(block.to_string());
                }
            }
            Err(e @ (Error::OneClassOnly | Error::LevelAbsent { .. })) => return Ok(report(included, Err(e))),
            Err(e) => log::warn!("feature '{feature}': candidate model with {block} failed: {e}"),
        }
    }
    let names: Vec<&str> = included.iter().map(String::as_str).collect();
    Ok(report(included.clone(), fit(&design.with_blocks(&names))))
}

pub fn write_coefficients_csv<T: Real, W: Write>(reports: &[SelectionReport<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "term", "estimate", "SE", "p"])?;
    for r in reports {
        match &r.fit {
            Some(fit) => {
                for (term, est, se, p) in fit.coefficient_rows() {
                    w.write_record([r.feature.clone(), term, format!("{est:.6}"), format!("{se:.6}"), format!("{p:.6}")])?;
                }
            }
            None => {
                let msg = r.error.clone().unwrap_or_default();
                w.write_record([r.feature.as_str(), "(not fitted)", "", "", msg.as_str()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
