use std::io::Write;

use super::{histogram, misleading_rates, run_comparisons, ComparisonPlan, Histogram, MisleadingRates};
use crate::error::Result;
use crate::lr::LrModel;
use crate::pca::ScoreMatrix;
use crate::scalar::Real;

pub struct GridInput<'a, T> {
    pub label: &'a str,
    pub scores: &'a ScoreMatrix<T>,
    pub plan: &'a ComparisonPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub data: String,
    pub variance: String,
    pub n_components: usize,
    pub rates: MisleadingRates,
    /// reported ln LR in unit-width bins
    pub histogram: Histogram,
}

/// Evaluates every dataset under every within-variance model for each
/// component count in `components`.
pub fn misspecification_grid<T: Real>(
    data: &[GridInput<'_, T>],
    models: &[(&str, &LrModel<T>)],
    components: &[usize],
    truncation: Option<T>,
) -> Result<Vec<GridCell>> {
    let max_m = components.iter().copied().max().unwrap_or(1);
    let mut cells = Vec::new();
    for input in data {
        for (variance, model) in models {
            let collection = run_comparisons(input.plan, input.scores, model, max_m, truncation)?;
            for &m in components {
                let labelled = collection.labelled(m);
                let ln: Vec<(f64, bool)> =
                    labelled.iter().map(|l| (l.log10_lr * std::f64::consts::LN_10, l.same_source)).collect();
                cells.push(GridCell {
                    data: input.label.to_string(),
                    variance: variance.to_string(),
                    n_components: m,
                    rates: misleading_rates(&labelled)?,
                    histogram: histogram(&ln, 1.0),
                });
            }
        }
    }
    Ok(cells)
}

pub fn write_grid_csv<W: Write>(cells: &[GridCell], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["data", "variance", "M", "n_ss", "n_ds", "ss_rate", "ds_rate"])?;
    for c in cells {
        w.write_record([
            c.data.clone(),
            c.variance.clone(),
            c.n_components.to_string(),
            c.rates.n_same.to_string(),
            c.rates.n_different.to_string(),
            format!("{:.6}", c.rates.same_rate()),
            format!("{:.6}", c.rates.different_rate()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
