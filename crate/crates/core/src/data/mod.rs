//! Feature schema, dataset containers, file I/O, composite splitting and
//! imputation.

mod csv_io;
mod dataset;
mod impute;
mod schema;
mod split;

pub use csv_io::{
    load_dataset, load_population, load_repeated, read_dataset, save_dataset, write_dataset,
    DEMOGRAPHIC_COLUMNS,
};
pub use dataset::{
    AnyDataset, Dataset, DatasetKind, DemographicProfile, GaitRecord, IndividualGroup,
    PopulationDataset, RepeatedDataset,
};
pub use impute::{impute_missing, impute_population, impute_replicates, ReplicateSummary};
pub use schema::{DemographicVocab, DerivedFeature, FeatureDef, FeatureSchema, Level, Side, SplitRule};
pub use split::{split_composite_features, split_schema};

/// Restricts two datasets to their common features (first dataset's order).
pub fn common_features(a: &Dataset, b: &Dataset) -> Vec<String> {
    a.schema()
        .features()
        .iter()
        .filter(|f| b.schema().index_of(&f.name).is_some())
        .map(|f| f.name.clone())
        .collect()
}
