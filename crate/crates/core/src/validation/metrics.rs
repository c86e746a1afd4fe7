use std::io::Write;

use serde::Serialize;

use super::LabelledLr;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MisleadingRates {
    pub n_same: usize,
    pub n_different: usize,
    /// same-source comparisons with LR < 1
    pub same_misleading: usize,
    /// different-source comparisons with LR > 1
    pub different_misleading: usize,
}

impl MisleadingRates {
    pub fn same_rate(&self) -> f64 {
        self.same_misleading as f64 / self.n_same as f64
    }

    pub fn different_rate(&self) -> f64 {
        self.different_misleading as f64 / self.n_different as f64
    }
}

fn check_classes(lrs: &[LabelledLr]) -> Result<()> {
    if !lrs.iter().any(|l| l.same_source) {
        return Err(Error::EmptyClass("same-source"));
    }
    if lrs.iter().all(|l| l.same_source) {
        return Err(Error::EmptyClass("different-source"));
    }
    Ok(())
}

/// LR = 1 is misleading for neither class.
pub fn misleading_rates(lrs: &[LabelledLr]) -> Result<MisleadingRates> {
    check_classes(lrs)?;
    let mut r = MisleadingRates { n_same: 0, n_different: 0, same_misleading: 0, different_misleading: 0 };
    for l in lrs {
        if l.same_source {
            r.n_same += 1;
            r.same_misleading += usize::from(l.log10_lr < 0.0);
        } else {
            r.n_different += 1;
            r.different_misleading += usize::from(l.log10_lr > 0.0);
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TippettCurve {
    pub thresholds: Vec<f64>,
    /// proportion of same-source log10 LRs ≥ t
    pub same: Vec<f64>,
    /// proportion of different-source log10 LRs > t
    pub different: Vec<f64>,
}

/// The same-source curve counts `≥ t` and the different-source curve `> t`,
/// so at `t = 0` they equal one minus the same-source misleading rate and the
/// different-source misleading rate.
pub fn tippett(lrs: &[LabelledLr], thresholds: &[f64]) -> Result<TippettCurve> {
    check_classes(lrs)?;
    let mut ss: Vec<f64> = lrs.iter().filter(|l| l.same_source).map(|l| l.log10_lr).collect();
    let mut ds: Vec<f64> = lrs.iter().filter(|l| !l.same_source).map(|l| l.log10_lr).collect();
    ss.sort_by(f64::total_cmp);
    ds.sort_by(f64::total_cmp);
    let same = thresholds
        .iter()
        .map(|&t| (ss.len() - ss.partition_point(|&v| v < t)) as f64 / ss.len() as f64)
        .collect();
    let different = thresholds
        .iter()
        .map(|&t| (ds.len() - ds.partition_point(|&v| v <= t)) as f64 / ds.len() as f64)
        .collect();
    Ok(TippettCurve { thresholds: thresholds.to_vec(), same, different })
}

impl TippettCurve {
    /// Thresholds `k/100` spanning the observed log10 LRs with a margin.
    pub fn default_thresholds(lrs: &[LabelledLr]) -> Vec<f64> {
        let lo = lrs.iter().map(|l| l.log10_lr).fold(0.0, f64::min).floor() as i64 - 1;
        let hi = lrs.iter().map(|l| l.log10_lr).fold(0.0, f64::max).ceil() as i64 + 1;
        (lo * 100..=hi * 100).map(|k| k as f64 / 100.0).collect()
    }
}

/// Comparisons whose misleading log10 LR exceeds `bound` in magnitude:
/// same-source below `−bound` or different-source above `bound`.
pub fn remove_outliers(lrs: &[LabelledLr], bound: f64) -> (Vec<LabelledLr>, Vec<usize>) {
    let mut kept = Vec::with_capacity(lrs.len());
    let mut removed = Vec::new();
    for (i, l) in lrs.iter().enumerate() {
        let outlier = if l.same_source { l.log10_lr < -bound } else { l.log10_lr > bound };
        if outlier {
            removed.push(i);
        } else {
            kept.push(*l);
        }
    }
    (kept, removed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub same: Vec<usize>,
    pub different: Vec<usize>,
}

/// Per-class counts of `values` in bins of `width` aligned to multiples of
/// the width.
pub fn histogram(values: &[(f64, bool)], width: f64) -> Histogram {
    let finite = values.iter().map(|v| v.0).filter(|v| v.is_finite());
    let lo = (finite.clone().fold(f64::INFINITY, f64::min) / width).floor();
    let hi = (finite.fold(f64::NEG_INFINITY, f64::max) / width).floor() + 1.0;
    if !lo.is_finite() {
        return Histogram { edges: vec![], same: vec![], different: vec![] };
    }
    let n = (hi - lo) as usize;
    let edges = (0..=n).map(|k| (lo + k as f64) * width).collect();
    let mut same = vec![0; n];
    let mut different = vec![0; n];
    for &(v, ss) in values {
        if !v.is_finite() {
            continue;
        }
        let b = (((v / width).floor() - lo) as usize).min(n - 1);
        if ss {
            same[b] += 1;
        } else {
            different[b] += 1;
        }
    }
    Histogram { edges, same, different }
}

pub fn write_rates_csv<W: Write>(rows: &[(String, MisleadingRates)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["label", "n_ss", "n_ds", "ss_misleading", "ds_misleading", "ss_rate", "ds_rate"])?;
    for (label, r) in rows {
        w.write_record([
            label.clone(),
            r.n_same.to_string(),
            r.n_different.to_string(),
            r.same_misleading.to_string(),
            r.different_misleading.to_string(),
            format!("{:.6}", r.same_rate()),
            format!("{:.6}", r.different_rate()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tippett_csv<W: Write>(curve: &TippettCurve, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["log10_threshold", "ss_proportion", "ds_proportion"])?;
    for ((t, s), d) in curve.thresholds.iter().zip(&curve.same).zip(&curve.different) {
        w.write_record([format!("{t:.2}"), format!("{s:.6}"), format!("{d:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(h: &Histogram, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_low", "bin_high", "ss_count", "ds_count"])?;
    for k in 0..h.same.len() {
        w.write_record([
            format!("{:.4}", h.edges[k]),
            format!("{:.4}", h.edges[k + 1]),
            h.same[k].to_string(),
            h.different[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
