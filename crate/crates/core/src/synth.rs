//! Synthetic gait data from a latent Gaussian threshold model.
//!
//! Each individual carries a latent vector `μ = Λf + diag(√(1−‖Λ_j‖²))ε`
//! plus optional demographic shifts; every occasion adds `N(0, within_sd²)`
//! and the ordinal level is the number of thresholds below the latent value.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    Dataset, DemographicProfile, DemographicVocab, FeatureDef, FeatureSchema, GaitRecord, Level, PopulationDataset,
    RepeatedDataset, Side,
};
use crate::error::{Error, Result};
use crate::special::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicFactor {
    Sex,
    Height,
    Weight,
    AgeGroup,
    Ethnicity,
    Location,
}

impl DemographicFactor {
    fn of(self, p: &DemographicProfile) -> usize {
        match self {
            Self::Sex => p.sex,
            Self::Height => p.height,
            Self::Weight => p.weight,
            Self::AgeGroup => p.age_group,
            Self::Ethnicity => p.ethnicity,
            Self::Location => p.location,
        }
    }
}

/// Latent shift applied to individuals whose `factor` equals `level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicEffect {
    pub factor: DemographicFactor,
    pub level: usize,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFeature {
    pub name: String,
    pub levels: Vec<String>,
    #[serde(default)]
    pub side: Side,
    /// strictly increasing, one fewer than the levels
    pub thresholds: Vec<f64>,
    pub loadings: Vec<f64>,
    #[serde(default)]
    pub effects: Vec<DemographicEffect>,
}

impl LatentFeature {
    /// Thresholds placed so that level `l` has prevalence `prevalence[l]`.
    pub fn with_prevalences(name: &str, levels: &[&str], prevalence: &[f64], loadings: &[f64]) -> Self {
        let mut cum = 0.0;
        let thresholds = prevalence[..prevalence.len() - 1]
            .iter()
            .map(|p| {
                cum += p;
                normal_quantile(cum)
            })
            .collect();
        Self {
            name: name.into(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
            side: Side::None,
            thresholds,
            loadings: loadings.to_vec(),
            effects: Vec::new(),
        }
    }

    fn sided(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    fn unique_sd(&self) -> f64 {
        (1.0 - self.loadings.iter().map(|l| l * l).sum::<f64>()).max(0.0).sqrt()
    }
}

/// Occasions per individual, drawn uniformly from `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occasions {
    pub min: usize,
    pub max: usize,
}

impl Occasions {
    pub fn fixed(n: usize) -> Self {
        Self { min: n, max: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub n_individuals: usize,
    pub occasions: Occasions,
    pub within_sd: f64,
    #[serde(default)]
    pub missing_rate: f64,
    pub seed: u64,
    pub id_prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub features: Vec<LatentFeature>,
    /// empty to generate without demographic columns
    #[serde(default)]
    pub demographics: DemographicVocab,
    pub sample: SampleSpec,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::ConfigInvalid(m));
        let Some(first) = self.features.first() else { return invalid("no features".into()) };
        let n_factors = first.loadings.len();
        for f in &self.features {
            if f.thresholds.len() + 1 != f.levels.len() {
                return invalid(format!("feature '{}': {} thresholds for {} levels", f.name, f.thresholds.len(), f.levels.len()));
            }
            if f.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
                return invalid(format!("feature '{}': thresholds must increase strictly", f.name));
            }
            if f.loadings.len() != n_factors {
                return invalid(format!("feature '{}': expected {n_factors} loadings", f.name));
            }
            if f.loadings.iter().map(|l| l * l).sum::<f64>() > 1.0 + 1e-12 {
                return invalid(format!("feature '{}': loadings exceed unit variance", f.name));
            }
            for e in &f.effects {
                if self.demographics.is_empty() {
                    return invalid(format!("feature '{}': demographic effect without demographics", f.name));
                }
                if e.level >= vocab_len(&self.demographics, e.factor) {
                    return invalid(format!("feature '{}': effect level {} out of range", f.name, e.level));
                }
            }
        }
        let s = &self.sample;
        if !(s.within_sd >= 0.0) {
            return invalid("within_sd must be non-negative".into());
        }
        if !(0.0..1.0).contains(&s.missing_rate) {
            return invalid("missing_rate must lie in [0, 1)".into());
        }
        if s.occasions.min == 0 || s.occasions.min > s.occasions.max {
            return invalid("occasions need 1 ≤ min ≤ max".into());
        }
        if s.n_individuals == 0 {
            return invalid("n_individuals must be positive".into());
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        let defs = self
            .features
            .iter()
            .map(|f| {
                let levels: Vec<&str> = f.levels.iter().map(String::as_str).collect();
                FeatureDef::ordered(f.name.clone(), &levels).with_side(f.side)
            })
            .collect();
        FeatureSchema::new("1", defs, self.demographics.clone())
    }
}

fn vocab_len(v: &DemographicVocab, f: DemographicFactor) -> usize {
    match f {
        DemographicFactor::Sex => v.sex.len(),
        DemographicFactor::Height => v.height.len(),
        DemographicFactor::Weight => v.weight.len(),
        DemographicFactor::AgeGroup => v.age_group.len(),
        DemographicFactor::Ethnicity => v.ethnicity.len(),
        DemographicFactor::Location => v.location.len(),
    }
}

fn draw_profile(v: &DemographicVocab, rng: &mut ChaCha8Rng) -> DemographicProfile {
    let sex = rng.random_range(0..v.sex.len());
    // height and weight bands lean with sex and with each other
    let band = |rng: &mut ChaCha8Rng, n: usize, centre: f64| -> usize {
        let x: f64 = rng.sample(StandardNormal);
        (centre + 0.9 * x).round().clamp(0.0, (n - 1) as f64) as usize
    };
    let mid_h = (v.height.len() as f64 - 1.0) / 2.0;
    let height = band(rng, v.height.len(), mid_h + if sex == 1 { 0.5 } else { -0.5 });
    let mid_w = (v.weight.len() as f64 - 1.0) / 2.0;
    let weight = band(rng, v.weight.len(), mid_w + 0.4 * (height as f64 - mid_h));
    DemographicProfile {
        sex,
        height,
        weight,
        age_group: rng.random_range(0..v.age_group.len()),
        ethnicity: rng.random_range(0..v.ethnicity.len()),
        location: rng.random_range(0..v.location.len()),
    }
}

fn generate_records(config: &GeneratorConfig) -> Result<Vec<GaitRecord>> {
    config.validate()?;
    let s = &config.sample;
    let n_factors = config.features[0].loadings.len();
    let with_demo = !config.demographics.is_empty();
    let per_individual: Vec<Vec<GaitRecord>> = (0..s.n_individuals)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(i as u64);
            let factors: Vec<f64> = (0..n_factors).map(|_| rng.sample(StandardNormal)).collect();
            let profile = with_demo.then(|| draw_profile(&config.demographics, &mut rng));
            let means: Vec<f64> = config
                .features
                .iter()
                .map(|f| {
                    let common: f64 = f.loadings.iter().zip(&factors).map(|(l, z)| l * z).sum();
                    let unique: f64 = rng.sample(StandardNormal);
                    let shift: f64 = profile.map_or(0.0, |p| {
                        f.effects.iter().filter(|e| e.factor.of(&p) == e.level).map(|e| e.shift).sum()
                    });
                    common + f.unique_sd() * unique + shift
                })
                .collect();
            let n_occ = rng.random_range(s.occasions.min..=s.occasions.max);
            (0..n_occ)
                .map(|o| {
                    let values = config
                        .features
                        .iter()
                        .zip(&means)
                        .map(|(f, &mu)| {
                            let noise: f64 = rng.sample(StandardNormal);
                            let latent = mu + s.within_sd * noise;
                            let level = f.thresholds.iter().filter(|&&t| t < latent).count() as Level;
                            let missing = s.missing_rate > 0.0 && rng.random::<f64>() < s.missing_rate;
                            (!missing).then_some(level)
                        })
                        .collect();
                    GaitRecord {
                        individual_id: format!("{}{:04}", s.id_prefix, i + 1),
                        occasion_id: (o + 1).to_string(),
                        values,
                        demographics: profile,
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_individual.into_iter().flatten().collect())
}

pub fn generate_population(config: &GeneratorConfig) -> Result<PopulationDataset> {
    if config.sample.occasions != Occasions::fixed(1) {
        return Err(Error::ConfigInvalid("a population sample has exactly one occasion per individual".into()));
    }
    let schema = Arc::new(config.schema()?);
    PopulationDataset::new(Dataset::new(schema, generate_records(config)?)?)
}

pub fn generate_repeated(config: &GeneratorConfig) -> Result<RepeatedDataset> {
    if config.sample.occasions.min < 2 {
        return Err(Error::ConfigInvalid("repeated samples need at least two occasions".into()));
    }
    let schema = Arc::new(config.schema()?);
    RepeatedDataset::new(Dataset::new(schema, generate_records(config)?)?)
}

/// Shared latent model with a population sample and two repeated samples of
/// contrasting within-individual variability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub features: Vec<LatentFeature>,
    #[serde(default)]
    pub demographics: DemographicVocab,
    pub population: SampleSpec,
    pub repeated_low: SampleSpec,
    pub repeated_high: SampleSpec,
}

impl Scenario {
    pub fn config(&self, sample: &SampleSpec) -> GeneratorConfig {
        GeneratorConfig { features: self.features.clone(), demographics: self.demographics.clone(), sample: sample.clone() }
    }

    /// Every seed offset from `seed` so a single value reproduces the scenario.
    pub fn reseeded(mut self, seed: u64) -> Self {
        self.population.seed = seed;
        self.repeated_low.seed = seed.wrapping_add(1);
        self.repeated_high.seed = seed.wrapping_add(2);
        self
    }

    /// 1007 × 16 population, 18 individuals × 3 low-variability occasions,
    /// 6 individuals × 6–11 high-variability occasions.
    pub fn standard(seed: u64) -> Self {
        let three = |name: &str, levels: [&str; 3], prev: [f64; 3], load: [f64; 3]| {
            LatentFeature::with_prevalences(name, &levels, &prev, &load)
        };
        let two = |name: &str, prev: f64, load: [f64; 3]| LatentFeature::with_prevalences(name, &["no", "yes"], &[prev, 1.0 - prev], &load);
        let mut features = vec![
            three("base_of_gait", ["narrow", "normal", "wide"], [0.25, 0.5, 0.25], [0.5, 0.2, 0.0]),
            three("step_length", ["short", "normal", "long"], [0.25, 0.5, 0.25], [0.4, 0.0, 0.3]),
            two("head_roll", 0.55, [0.0, 0.5, 0.0]),
            two("trunk_flexion", 0.65, [0.3, 0.0, 0.4]),
        ];
        let pairs: [(&str, LatentFeature); 6] = [
            ("arm_swing", three("arm_swing", ["reduced", "normal", "increased"], [0.3, 0.45, 0.25], [0.2, 0.6, 0.0])),
            ("knee_direction", three("knee_direction", ["inward", "neutral", "outward"], [0.25, 0.5, 0.25], [0.6, 0.0, 0.2])),
            ("foot_direction", three("foot_direction", ["inward", "neutral", "outward"], [0.2, 0.45, 0.35], [0.55, 0.1, 0.3])),
            ("early_heel_lift", two("early_heel_lift", 0.5, [0.0, 0.3, 0.6])),
            ("hip_movement", two("hip_movement", 0.55, [0.1, 0.45, 0.45])),
            ("forefoot_slap", two("forefoot_slap", 0.7, [0.2, 0.0, 0.6])),
        ];
        for (base, f) in pairs {
            for (side, suffix) in [(Side::Left, "left"), (Side::Right, "right")] {
                let mut g = f.clone().sided(side);
                g.name = format!("{base}_{suffix}");
                features.push(g);
            }
        }
        let effect = |factor, level, shift| DemographicEffect { factor, level, shift };
        features[0].effects.push(effect(DemographicFactor::Sex, 1, 0.5));
        features[1].effects.push(effect(DemographicFactor::Height, 3, 0.4));
        features[1].effects.push(effect(DemographicFactor::Height, 4, 0.6));
        features[2].effects.push(effect(DemographicFactor::Location, 2, 0.8));

        let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let demographics = DemographicVocab {
            sex: strings(&["female", "male"]),
            height: strings(&["<160", "160-170", "170-180", "180-190", ">190"]),
            weight: strings(&["<60", "60-75", "75-90", ">90"]),
            age_group: strings(&["18-30", "31-45", "46-60", ">60"]),
            ethnicity: strings(&["white", "black", "asian", "mixed", "other"]),
            location: strings(&["site_a", "site_b", "site_c", "site_d", "site_e", "site_f", "site_g"]),
        };
        let spec = |n, occasions, within_sd, prefix: &str| SampleSpec {
            n_individuals: n,
            occasions,
            within_sd,
            missing_rate: 0.0,
            seed,
            id_prefix: prefix.into(),
        };
        Self {
            features,
            demographics,
            population: spec(1007, Occasions::fixed(1), LOW_WITHIN_SD, "pop"),
            repeated_low: spec(18, Occasions::fixed(3), LOW_WITHIN_SD, "b"),
            repeated_high: spec(6, Occasions { min: 6, max: 11 }, HIGH_WITHIN_SD, "a"),
        }
        .reseeded(seed)
    }
}

/// Latent within-individual sd of the low-variability sample.
pub const LOW_WITHIN_SD: f64 = 0.03;
/// Latent within-individual sd of the high-variability sample.
pub const HIGH_WITHIN_SD: f64 = 0.3;

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_config(n: usize, prev: f64, within_sd: f64) -> GeneratorConfig {
        GeneratorConfig {
            features: vec![LatentFeature::with_prevalences("x", &["no", "yes"], &[prev, 1.0 - prev], &[0.5])],
            demographics: DemographicVocab::default(),
            sample: SampleSpec {
                n_individuals: n,
                occasions: Occasions::fixed(1),
                within_sd,
                missing_rate: 0.0,
                seed: 11,
                id_prefix: "p".into(),
            },
        }
    }

    #[test]
    fn prevalence_matches_threshold() {
        let pop = generate_population(&binary_config(10_000, 0.8, 0.0)).unwrap();
        let ones = pop.records().iter().filter(|r| r.values[0] == Some(1)).count() as f64 / 10_000.0;
        assert!((ones - 0.2).abs() < 0.01, "{ones}");
    }

    #[test]
    fn deterministic_given_seed() {
        let c = binary_config(50, 0.5, 0.1);
        assert_eq!(generate_population(&c).unwrap(), generate_population(&c).unwrap());
    }

    #[test]
    fn zero_within_sd_repeats_levels() {
        let mut c = binary_config(20, 0.5, 0.0);
        c.sample.occasions = Occasions::fixed(3);
        assert_eq!(generate_repeated(&c).unwrap().level_flip_count(), 0);
    }

    #[test]
    fn standard_scenario_shapes() {
        let s = Scenario::standard(7);
        let pop = generate_population(&s.config(&s.population)).unwrap();
        assert_eq!((pop.len(), pop.schema().len()), (1007, 16));
        let high = generate_repeated(&s.config(&s.repeated_high)).unwrap();
        assert_eq!(high.n_individuals(), 6);
        assert!(high.occasion_counts().iter().all(|&c| (6..=11).contains(&c)));
    }

    #[test]
    fn invalid_configs() {
        let mut c = binary_config(5, 0.5, 0.0);
        c.sample.within_sd = -1.0;
        assert!(matches!(generate_population(&c), Err(Error::ConfigInvalid(_))));
        let mut c = binary_config(5, 0.5, 0.0);
        c.features[0].loadings = vec![1.5];
        assert!(c.validate().is_err());
    }
}
