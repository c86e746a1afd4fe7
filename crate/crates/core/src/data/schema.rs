use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Index of a level within a feature's ordered level list.
pub type Level = u16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    None,
    Left,
    Right,
}

/// One derived column produced by splitting a composite feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedFeature {
    pub name: String,
    pub levels: Vec<String>,
    #[serde(default)]
    pub side: Side,
}

/// Maps every level of an unordered composite feature onto one level of each
/// derived ordered feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRule {
    pub into: Vec<DerivedFeature>,
    /// composite level label → one derived level label per entry of `into`
    pub map: BTreeMap<String, Vec<String>>,
}

impl SplitRule {
    /// Head tilt {none, forward, backward, left, right} → frontal
    /// {left, none, right} and sagittal {backward, none, forward}.
    pub fn head_tilt(base: &str) -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let map = [
            ("none", ["none", "none"]),
            ("forward", ["none", "forward"]),
            ("backward", ["none", "backward"]),
            ("left", ["left", "none"]),
            ("right", ["right", "none"]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), s(&v)))
        .collect();
        Self {
            into: vec![
                DerivedFeature {
                    name: format!("{base}_frontal"),
                    levels: s(&["left", "none", "right"]),
                    side: Side::None,
                },
                DerivedFeature {
                    name: format!("{base}_sagittal"),
                    levels: s(&["backward", "none", "forward"]),
                    side: Side::None,
                },
            ],
            map,
        }
    }

    /// Roll {left, right, none, both} → roll-left {no, yes} and roll-right {no, yes}.
    pub fn roll(base: &str) -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let map = [
            ("left", ["yes", "no"]),
            ("right", ["no", "yes"]),
            ("none", ["no", "no"]),
            ("both", ["yes", "yes"]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), s(&v)))
        .collect();
        Self {
            into: vec![
                DerivedFeature { name: format!("{base}_left"), levels: s(&["no", "yes"]), side: Side::Left },
                DerivedFeature { name: format!("{base}_right"), levels: s(&["no", "yes"]), side: Side::Right },
            ],
            map,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub levels: Vec<String>,
    #[serde(default)]
    pub side: Side,
    #[serde(default = "default_true")]
    pub ordered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_rule: Option<SplitRule>,
}

impl FeatureDef {
    pub fn ordered(name: impl Into<String>, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            levels: levels.iter().map(|l| l.to_string()).collect(),
            side: Side::None,
            ordered: true,
            split_rule: None,
        }
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    pub fn composite(name: impl Into<String>, levels: &[&str], rule: SplitRule) -> Self {
        Self {
            name: name.into(),
            levels: levels.iter().map(|l| l.to_string()).collect(),
            side: Side::None,
            ordered: false,
            split_rule: Some(rule),
        }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_index(&self, label: &str) -> Option<Level> {
        self.levels.iter().position(|l| l == label).map(|i| i as Level)
    }
}

/// Vocabularies for the demographic covariates. Ordered vocabularies
/// (height, weight, age group) are listed from lowest to highest; the first
/// entry of each categorical vocabulary is the reference level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicVocab {
    #[serde(default)]
    pub sex: Vec<String>,
    #[serde(default)]
    pub height: Vec<String>,
    #[serde(default)]
    pub weight: Vec<String>,
    #[serde(default)]
    pub age_group: Vec<String>,
    #[serde(default)]
    pub ethnicity: Vec<String>,
    #[serde(default)]
    pub location: Vec<String>,
}

impl DemographicVocab {
    pub fn is_empty(&self) -> bool {
        self.sex.is_empty()
            && self.height.is_empty()
            && self.weight.is_empty()
            && self.age_group.is_empty()
            && self.ethnicity.is_empty()
            && self.location.is_empty()
    }
}

pub(crate) const DEFAULT_VERSION: &str = "1";

/// Ordered level definitions for every feature of gait.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    version: String,
    features: Vec<FeatureDef>,
    demographics: DemographicVocab,
}

#[derive(Serialize, Deserialize)]
struct SchemaDocument {
    #[serde(default = "default_version")]
    version: String,
    features: Vec<FeatureDef>,
    #[serde(default, skip_serializing_if = "DemographicVocab::is_empty")]
    demographics: DemographicVocab,
}

fn default_version() -> String {
    DEFAULT_VERSION.to_string()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SchemaJson {
    Bare(Vec<FeatureDef>),
    Document(SchemaDocument),
}

impl FeatureSchema {
    pub fn new(
        version: impl Into<String>,
        features: Vec<FeatureDef>,
        demographics: DemographicVocab,
    ) -> Result<Self> {
        let schema = Self { version: version.into(), features, demographics };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_features(features: Vec<FeatureDef>) -> Result<Self> {
        Self::new(DEFAULT_VERSION, features, DemographicVocab::default())
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::SchemaViolation(format!("duplicate feature name '{}'", f.name)));
            }
            check_levels(&f.name, &f.levels)?;
            if !f.ordered && f.split_rule.is_none() {
                return Err(Error::SchemaViolation(format!(
                    "feature '{}' is unordered but declares no split rule",
                    f.name
                )));
            }
        }
        for f in &self.features {
            let Some(rule) = &f.split_rule else { continue };
            for d in &rule.into {
                check_levels(&d.name, &d.levels)?;
                if d.name != f.name && seen.contains(d.name.as_str()) {
                    return Err(Error::SchemaViolation(format!(
                        "split of '{}' produces '{}', which already exists",
                        f.name, d.name
                    )));
                }
            }
            for level in &f.levels {
                let targets = rule.map.get(level).ok_or_else(|| {
                    Error::SchemaViolation(format!(
                        "split rule of '{}' maps level '{}' nowhere",
                        f.name, level
                    ))
                })?;
                if targets.len() != rule.into.len() {
                    return Err(Error::SchemaViolation(format!(
                        "split rule of '{}' maps level '{}' to {} values, expected {}",
                        f.name,
                        level,
                        targets.len(),
                        rule.into.len()
                    )));
                }
                for (t, d) in targets.iter().zip(&rule.into) {
                    if !d.levels.contains(t) {
                        return Err(Error::SchemaViolation(format!(
                            "split rule of '{}' maps '{}' to unknown level '{}' of '{}'",
                            f.name, level, t, d.name
                        )));
                    }
                }
            }
            if let Some(extra) = rule.map.keys().find(|k| !f.levels.contains(k)) {
                return Err(Error::SchemaViolation(format!(
                    "split rule of '{}' references unknown level '{}'",
                    f.name, extra
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str::<SchemaJson>(text)? {
            SchemaJson::Bare(features) => Self::from_features(features),
            SchemaJson::Document(doc) => Self::new(doc.version, doc.features, doc.demographics),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Bare array form when only features are present, document form otherwise.
    pub fn to_json(&self) -> String {
        let out = if self.version == DEFAULT_VERSION && self.demographics.is_empty() {
            serde_json::to_string_pretty(&self.features)
        } else {
            serde_json::to_string_pretty(&SchemaDocument {
                version: self.version.clone(),
                features: self.features.clone(),
                demographics: self.demographics.clone(),
            })
        };
        out.expect("schema serializes")
    }

    /// Short stable digest of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn demographics(&self) -> &DemographicVocab {
        &self.demographics
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureDef> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn has_composites(&self) -> bool {
        self.features.iter().any(|f| f.split_rule.is_some())
    }

    /// Σ (L_j − 1): number of cumulative binary columns.
    pub fn binary_width(&self) -> usize {
        self.features.iter().map(|f| f.n_levels() - 1).sum()
    }

    /// Sub-schema keeping only the named features, in this schema's order.
    pub fn restrict(&self, names: &[&str]) -> Result<Self> {
        for n in names {
            if self.index_of(n).is_none() {
                return Err(Error::SchemaViolation(format!("unknown feature '{n}'")));
            }
        }
        let features = self
            .features
            .iter()
            .filter(|f| names.contains(&f.name.as_str()))
            .cloned()
            .collect();
        Self::new(self.version.clone(), features, self.demographics.clone())
    }

    pub(crate) fn with_features(&self, features: Vec<FeatureDef>) -> Result<Self> {
        Self::new(self.version.clone(), features, self.demographics.clone())
    }
}

fn check_levels(name: &str, levels: &[String]) -> Result<()> {
    if levels.len() < 2 {
        return Err(Error::SchemaViolation(format!("feature '{name}' needs at least two levels")));
    }
    if levels.len() > Level::MAX as usize {
        return Err(Error::SchemaViolation(format!("feature '{name}' has too many levels")));
    }
    let unique: HashSet<_> = levels.iter().collect();
    if unique.len() != levels.len() {
        return Err(Error::SchemaViolation(format!("feature '{name}' has duplicate level labels")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names_and_short_levels() {
        let a = FeatureDef::ordered("a", &["0", "1"]);
        assert!(FeatureSchema::from_features(vec![a.clone(), a]).is_err());
        assert!(FeatureSchema::from_features(vec![FeatureDef::ordered("b", &["0"])]).is_err());
        assert!(FeatureSchema::from_features(vec![FeatureDef::ordered("b", &["x", "x"])]).is_err());
    }

    #[test]
    fn unordered_requires_split_rule() {
        let mut f = FeatureDef::ordered("c", &["p", "q"]);
        f.ordered = false;
        assert!(matches!(FeatureSchema::from_features(vec![f]), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn split_rule_must_cover_every_level() {
        let mut rule = SplitRule::roll("roll");
        rule.map.remove("both");
        let f = FeatureDef::composite("roll", &["left", "right", "none", "both"], rule);
        let err = FeatureSchema::from_features(vec![f]).unwrap_err();
        assert!(err.to_string().contains("nowhere"), "{err}");
    }

    #[test]
    fn json_accepts_bare_array_and_document() {
        let bare = r#"[{"name":"a","levels":["lo","hi"]}]"#;
        let s = FeatureSchema::from_json(bare).unwrap();
        assert_eq!(s.features()[0].side, Side::None);
        assert!(s.features()[0].ordered);
        assert_eq!(FeatureSchema::from_json(&s.to_json()).unwrap(), s);

        let doc = r#"{"version":"2","features":[{"name":"a","levels":["lo","hi"],"side":"left"}],
                      "demographics":{"sex":["female","male"]}}"#;
        let s = FeatureSchema::from_json(doc).unwrap();
        assert_eq!(s.version(), "2");
        assert_eq!(s.demographics().sex.len(), 2);
        assert_eq!(FeatureSchema::from_json(&s.to_json()).unwrap(), s);
    }
}
