//! Comparison enumeration and evaluation of LR collections.

mod ece;
mod grid;
mod metrics;

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lr::{LrModel, LrResult, WithinProvenance};
use crate::pca::ScoreMatrix;
use crate::scalar::Real;

pub use ece::{default_prior_grid, ece_at, ece_curve, null_crossings, null_ece, pav_calibrate, write_ece_csv, EceCurve, NullCrossings};
pub use grid::{misspecification_grid, write_grid_csv, GridCell, GridInput};
pub use metrics::{
    histogram, misleading_rates, remove_outliers, tippett, write_histogram_csv, write_rates_csv, write_tippett_csv,
    Histogram, MisleadingRates, TippettCurve,
};

/// How a query is compared with the other occasions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// every unordered pair of occasions
    #[default]
    Pairwise,
    /// each occasion against the mean of each individual's remaining occasions
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedComparison {
    pub query: usize,
    pub references: Vec<usize>,
    pub same_source: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonPlan {
    pub mode: ReferenceMode,
    pub entries: Vec<PlannedComparison>,
}

impl ComparisonPlan {
    pub fn n_same(&self) -> usize {
        self.entries.iter().filter(|e| e.same_source).count()
    }

    pub fn n_different(&self) -> usize {
        self.entries.len() - self.n_same()
    }
}

fn rows_by_individual(row_ids: &[(String, String)]) -> Vec<Vec<usize>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (row, (id, _)) in row_ids.iter().enumerate() {
        let g = *index.entry(id.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(row);
    }
    groups
}

/// Same-source and different-source comparisons over rows identified by
/// `(individual_id, occasion_id)`.
pub fn enumerate_comparisons(row_ids: &[(String, String)], mode: ReferenceMode) -> Result<ComparisonPlan> {
    let groups = rows_by_individual(row_ids);
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!("{} individuals; need at least 2", groups.len())));
    }
    if groups.iter().all(|g| g.len() < 2) {
        return Err(Error::InsufficientData("no individual has repeated occasions".into()));
    }
    let entries = match mode {
        ReferenceMode::Pairwise => (0..row_ids.len())
            .flat_map(|i| ((i + 1)..row_ids.len()).map(move |j| (i, j)))
            .map(|(i, j)| PlannedComparison {
                query: i,
                references: vec![j],
                same_source: row_ids[i].0 == row_ids[j].0,
            })
            .collect(),
        ReferenceMode::Pooled => {
            let mut entries = Vec::new();
            for q in 0..row_ids.len() {
                for g in &groups {
                    let refs: Vec<usize> = g.iter().copied().filter(|&r| r != q).collect();
                    if refs.is_empty() {
                        continue;
                    }
                    let same_source = row_ids[refs[0]].0 == row_ids[q].0;
                    entries.push(PlannedComparison { query: q, references: refs, same_source });
                }
            }
            entries
        }
    };
    Ok(ComparisonPlan { mode, entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison<T> {
    pub query_id: String,
    pub query_occasion: String,
    pub ref_id: String,
    /// reference occasions joined by `+` in pooled mode
    pub ref_occasion: String,
    pub same_source: bool,
    pub result: LrResult<T>,
}

/// A log10 LR with its ground truth; the unit the evaluation metrics use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelledLr {
    pub log10_lr: f64,
    pub same_source: bool,
}

impl LabelledLr {
    pub fn new(log10_lr: f64, same_source: bool) -> Self {
        Self { log10_lr, same_source }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrCollection<T> {
    pub entries: Vec<Comparison<T>>,
    pub n_components: usize,
    pub within: WithinProvenance,
    pub mode: ReferenceMode,
}

impl<T: Real> LrCollection<T> {
    /// Reported (possibly truncated) LRs over the first `m` components.
    pub fn labelled(&self, m: usize) -> Vec<LabelledLr> {
        self.entries.iter().map(|c| LabelledLr::new(c.result.log10_lr_at(m).as_f64(), c.same_source)).collect()
    }

    pub fn truncated_count(&self) -> usize {
        self.entries.iter().filter(|c| c.result.is_truncated()).count()
    }

    /// `query_id,query_occasion,ref_id,ref_occasion,truth,log10_LR_M1..,truncated,ln_LR_PC1..`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let m = self.n_components;
        let mut header: Vec<String> =
            ["query_id", "query_occasion", "ref_id", "ref_occasion", "truth"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=m).map(|k| format!("log10_LR_M{k}")));
        header.push("truncated".into());
        header.extend((1..=m).map(|k| format!("ln_LR_PC{k}")));
        w.write_record(&header)?;
        for c in &self.entries {
            let mut rec = vec![
                c.query_id.clone(),
                c.query_occasion.clone(),
                c.ref_id.clone(),
                c.ref_occasion.clone(),
                if c.same_source { "SS" } else { "DS" }.to_string(),
            ];
            rec.extend((1..=m).map(|k| c.result.log10_lr_at(k).as_f64().to_string()));
            rec.push(c.result.is_truncated().to_string());
            rec.extend(c.result.per_component_ln.iter().map(|v| v.as_f64().to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates every planned comparison over the first `m` components.
pub fn run_comparisons<T: Real>(
    plan: &ComparisonPlan,
    scores: &ScoreMatrix<T>,
    model: &LrModel<T>,
    m: usize,
    truncation: Option<T>,
) -> Result<LrCollection<T>> {
    if scores.model_fingerprint != model.projector_fingerprint {
        return Err(Error::ModelMismatch(format!(
            "scores from model {} but LR model expects {}",
            scores.model_fingerprint, model.projector_fingerprint
        )));
    }
    let k = scores.n_components();
    let mean_of = |rows: &[usize]| -> Vec<T> {
        let n = T::of_usize(rows.len());
        (0..k).map(|j| rows.iter().map(|&r| scores.scores[[r, j]]).sum::<T>() / n).collect()
    };
    let entries = plan
        .entries
        .par_iter()
        .map(|e| {
            let q = mean_of(&[e.query]);
            let r = mean_of(&e.references);
            let result = model.compare_means(&q, 1, &r, e.references.len(), m, truncation)?;
            let ids = &scores.row_ids;
            Ok(Comparison {
                query_id: ids[e.query].0.clone(),
                query_occasion: ids[e.query].1.clone(),
                ref_id: ids[e.references[0]].0.clone(),
                ref_occasion: e.references.iter().map(|&r| ids[r].1.as_str()).collect::<Vec<_>>().join("+"),
                same_source: e.same_source,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LrCollection { entries, n_components: m, within: model.within.provenance.clone(), mode: plan.mode })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n_ind: usize, n_occ: usize) -> Vec<(String, String)> {
        (0..n_ind).flat_map(|i| (0..n_occ).map(move |o| (format!("p{i}"), format!("{o}")))).collect()
    }

    #[test]
    fn pairwise_counts() {
        let plan = enumerate_comparisons(&ids(2, 2), ReferenceMode::Pairwise).unwrap();
        assert_eq!((plan.n_same(), plan.n_different()), (2, 4));
        let plan = enumerate_comparisons(&ids(18, 3), ReferenceMode::Pairwise).unwrap();
        assert_eq!((plan.n_same(), plan.n_different()), (54, 1377));
    }

    #[test]
    fn pooled_counts() {
        let plan = enumerate_comparisons(&ids(18, 3), ReferenceMode::Pooled).unwrap();
        assert_eq!(plan.n_same(), 54);
        assert!(plan.entries.iter().filter(|e| e.same_source).all(|e| e.references.len() == 2));
        assert!(plan.entries.iter().all(|e| !e.references.contains(&e.query)));
    }

    #[test]
    fn singleton_contributes_only_ds() {
        let mut rows = ids(2, 2);
        rows.push(("solo".into(), "1".into()));
        let plan = enumerate_comparisons(&rows, ReferenceMode::Pairwise).unwrap();
        assert!(plan.entries.iter().filter(|e| e.query == 4 || e.references[0] == 4).all(|e| !e.same_source));
        assert!(matches!(enumerate_comparisons(&ids(3, 1), ReferenceMode::Pairwise), Err(Error::InsufficientData(_))));
    }
}
