use std::f64::consts::{LN_10, LN_2};
use std::io::Write;

use super::LabelledLr;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EceCurve {
    pub log10_prior_odds: Vec<f64>,
    pub observed: Vec<f64>,
    pub null: Vec<f64>,
    pub calibrated: Option<Vec<f64>>,
}

/// `ln(1 + e^x)` without overflow; exact limits at ±∞.
fn softplus(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        f64::INFINITY
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// `(P(Hp), P(Hd))` for prior odds `10^lo`.
fn priors(lo: f64) -> (f64, f64) {
    let x = lo * LN_10;
    let p = if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { x.exp() / (1.0 + x.exp()) };
    let q = if x >= 0.0 { (-x).exp() / (1.0 + (-x).exp()) } else { 1.0 / (1.0 + x.exp()) };
    (p, q)
}

/// Prior log10-odds `k/20` for `k = −50..=50`.
pub fn default_prior_grid() -> Vec<f64> {
    (-50..=50).map(|k| k as f64 / 20.0).collect()
}

/// Cross entropy in bits of a system that always reports LR = 1.
pub fn null_ece(log10_odds: f64) -> f64 {
    let (p, q) = priors(log10_odds);
    let x = log10_odds * LN_10;
    (p * softplus(-x) + q * softplus(x)) / LN_2
}

pub fn ece_at(lrs: &[LabelledLr], log10_odds: f64) -> f64 {
    let (p, q) = priors(log10_odds);
    let (mut ss, mut ds, mut n_ss, mut n_ds) = (0.0, 0.0, 0usize, 0usize);
    for l in lrs {
        let x = (l.log10_lr + log10_odds) * LN_10;
        if l.same_source {
            ss += softplus(-x);
            n_ss += 1;
        } else {
            ds += softplus(x);
            n_ds += 1;
        }
    }
    (p * ss / n_ss as f64 + q * ds / n_ds as f64) / LN_2
}

/// Pool-adjacent-violators calibration. Returns calibrated log10 LRs in
/// input order; ±∞ where a pooled block is pure.
pub fn pav_calibrate(lrs: &[LabelledLr]) -> Result<Vec<f64>> {
    let n_ss = lrs.iter().filter(|l| l.same_source).count();
    let n_ds = lrs.len() - n_ss;
    if n_ss == 0 {
        return Err(Error::EmptyClass("same-source"));
    }
    if n_ds == 0 {
        return Err(Error::EmptyClass("different-source"));
    }
    let mut order: Vec<usize> = (0..lrs.len()).collect();
    order.sort_by(|&a, &b| lrs[a].log10_lr.total_cmp(&lrs[b].log10_lr));

    // (positives, count, first index into `order`)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let mut pos = 0.0;
        while end < order.len() && lrs[order[end]].log10_lr == lrs[order[start]].log10_lr {
            pos += f64::from(u8::from(lrs[order[end]].same_source));
            end += 1;
        }
        blocks.push((pos, (end - start) as f64, start));
        while blocks.len() > 1 {
            let (p1, c1, _) = blocks[blocks.len() - 1];
            let (p0, c0, s0) = blocks[blocks.len() - 2];
            if p0 / c0 <= p1 / c1 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().expect("two blocks") = (p0 + p1, c0 + c1, s0);
        }
        start = end;
    }

    let prior_log10 = (n_ss as f64 / n_ds as f64).log10();
    let mut out = vec![0.0; lrs.len()];
    for (b, &(pos, count, first)) in blocks.iter().enumerate() {
        let last = blocks.get(b + 1).map_or(order.len(), |next| next.2);
        let value = if pos == 0.0 {
            f64::NEG_INFINITY
        } else if pos == count {
            f64::INFINITY
        } else {
            (pos / (count - pos)).log10() - prior_log10
        };
        for &i in &order[first..last] {
            out[i] = value;
        }
    }
    Ok(out)
}

pub fn ece_curve(lrs: &[LabelledLr], with_pav: bool, grid: &[f64]) -> Result<EceCurve> {
    if !lrs.iter().any(|l| l.same_source) {
        return Err(Error::EmptyClass("same-source"));
    }
    if lrs.iter().all(|l| l.same_source) {
        return Err(Error::EmptyClass("different-source"));
    }
    let calibrated = if with_pav {
        let cal: Vec<LabelledLr> = pav_calibrate(lrs)?
            .into_iter()
            .zip(lrs)
            .map(|(v, l)| LabelledLr::new(v, l.same_source))
            .collect();
        Some(grid.iter().map(|&o| ece_at(&cal, o)).collect())
    } else {
        None
    };
    Ok(EceCurve {
        log10_prior_odds: grid.to_vec(),
        observed: grid.iter().map(|&o| ece_at(lrs, o)).collect(),
        null: grid.iter().map(|&o| null_ece(o)).collect(),
        calibrated,
    })
}

impl EceCurve {
    /// Largest excess of the observed curve over the null curve.
    pub fn max_excess_over_null(&self) -> f64 {
        self.observed.iter().zip(&self.null).map(|(o, n)| o - n).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Prior log10-odds at which the observed curve first rises above the null
/// curve, scanning outward from 0 in each direction. Linear interpolation
/// between grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullCrossings {
    pub upper: Option<f64>,
    pub lower: Option<f64>,
}

pub fn null_crossings(curve: &EceCurve) -> NullCrossings {
    let excess: Vec<f64> = curve.observed.iter().zip(&curve.null).map(|(o, n)| o - n).collect();
    let x = &curve.log10_prior_odds;
    let zero = x.iter().position(|&v| v >= 0.0).unwrap_or(0);
    let scan = |idx: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev: Option<usize> = None;
        for i in idx {
            if excess[i] > 0.0 {
                return Some(match prev {
                    Some(p) => x[p] + (x[i] - x[p]) * (-excess[p]) / (excess[i] - excess[p]),
                    None => x[i],
                });
            }
            prev = Some(i);
        }
        None
    };
    NullCrossings { upper: scan(&mut (zero..x.len())), lower: scan(&mut (0..=zero).rev()) }
}

pub fn write_ece_csv<W: Write>(curve: &EceCurve, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["log10_prior_odds", "observed", "null", "calibrated"])?;
    for (k, &o) in curve.log10_prior_odds.iter().enumerate() {
        let cal = curve.calibrated.as_ref().map_or(String::new(), |c| format!("{:.10}", c[k]));
        w.write_record([format!("{o:.2}"), format!("{:.10}", curve.observed[k]), format!("{:.10}", curve.null[k]), cal])?;
    }
    w.flush()?;
    Ok(())
}
