//! Missing-value imputation by resampling observed values.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dataset::{Dataset, GaitRecord, PopulationDataset, RepeatedDataset};
use super::schema::Level;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fills each missing cell with a uniform draw from the same group's observed
/// values for that feature, or, when the group never observed it, from the
/// observed values of all other groups.
fn impute_groups(data: &Dataset, groups: &[Vec<usize>], seed: u64) -> Result<Dataset> {
    if data.missing_count() == 0 {
        return Ok(data.clone());
    }
    let schema = data.schema();
    let records = data.records();
    let n_features = schema.len();

    // observed values per (group, feature)
    let observed: Vec<Vec<Vec<Level>>> = groups
        .iter()
        .map(|rows| {
            (0..n_features)
                .map(|j| rows.iter().filter_map(|&r| records[r].values[j]).collect())
                .collect()
        })
        .collect();

    for (j, f) in schema.features().iter().enumerate() {
        let any_missing = records.iter().any(|r| r.values[j].is_none());
        let any_observed = observed.iter().any(|g| !g[j].is_empty());
        if any_missing && !any_observed {
            return Err(Error::ImputationImpossible { feature: f.name.clone() });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<GaitRecord> = records.to_vec();
    for (g, rows) in groups.iter().enumerate() {
        for &row in rows {
            for j in 0..n_features {
                if out[row].values[j].is_some() {
                    continue;
                }
                let own = &observed[g][j];
                let value = if !own.is_empty() {
                    own[rng.random_range(0..own.len())]
                } else {
                    let pool_len: usize =
                        observed.iter().enumerate().filter(|(h, _)| *h != g).map(|(_, o)| o[j].len()).sum();
                    let mut pick = rng.random_range(0..pool_len);
                    let mut chosen = None;
                    for (h, o) in observed.iter().enumerate() {
                        if h == g {
                            continue;
                        }
                        if pick < o[j].len() {
                            chosen = Some(o[j][pick]);
                            break;
                        }
                        pick -= o[j].len();
                    }
                    chosen.expect("pick within pool")
                };
                out[row].values[j] = Some(value);
            }
        }
    }
    Dataset::new(Arc::clone(data.schema_arc()), out)
}

/// Completes a repeated dataset; a pure function of `(dataset, seed)`.
pub fn impute_missing(dataset: &RepeatedDataset, seed: u64) -> Result<RepeatedDataset> {
    let groups: Vec<Vec<usize>> = dataset.groups().iter().map(|g| g.rows.clone()).collect();
    RepeatedDataset::new(impute_groups(dataset.data(), &groups, seed)?)
}

/// Completes a population dataset; with one record per individual every fill
/// comes from the other individuals.
pub fn impute_population(dataset: &PopulationDataset, seed: u64) -> Result<PopulationDataset> {
    let groups: Vec<Vec<usize>> = (0..dataset.len()).map(|i| vec![i]).collect();
    PopulationDataset::new(impute_groups(dataset.data(), &groups, seed)?)
}

/// Per-component mean and standard deviation of a statistic across replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSummary<T> {
    pub mean: Vec<T>,
    /// Sample standard deviation (n − 1); zero for a single replicate.
    pub sd: Vec<T>,
    pub n_reps: usize,
}

/// Runs `stat` on `n_reps` independently completed copies of `dataset`.
/// Replicate `r` is imputed with seed `base_seed + r`; replicates run in
/// parallel but the summary does not depend on the schedule.
pub fn impute_replicates<T, F>(
    dataset: &RepeatedDataset,
    n_reps: usize,
    base_seed: u64,
    stat: F,
) -> Result<ReplicateSummary<T>>
where
    T: Real,
    F: Fn(&RepeatedDataset) -> Result<Vec<T>> + Sync,
{
    if n_reps == 0 {
        return Err(Error::ConfigInvalid("n_reps must be at least 1".into()));
    }
    let values: Vec<Vec<T>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| impute_missing(dataset, base_seed.wrapping_add(r)).and_then(|d| stat(&d)))
        .collect::<Result<_>>()?;
    let k = values[0].len();
    if values.iter().any(|v| v.len() != k) {
        return Err(Error::ShapeMismatch {
            expected: format!("{k} components"),
            found: "varying statistic length".into(),
        });
    }
    let n = T::of_usize(n_reps);
    let mut mean = vec![T::zero(); k];
    for v in &values {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += *x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sd = vec![T::zero(); k];
    if n_reps > 1 {
        for v in &values {
            for ((s, x), m) in sd.iter_mut().zip(v).zip(&mean) {
                *s += (*x - *m) * (*x - *m);
            }
        }
        sd.iter_mut().for_each(|s| *s = (*s / (n - T::one())).sqrt());
    }
    Ok(ReplicateSummary { mean, sd, n_reps })
}
