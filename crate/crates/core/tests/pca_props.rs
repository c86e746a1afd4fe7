use std::sync::Arc;

use gaitlr_core::data::{FeatureDef, FeatureSchema};
use gaitlr_core::pca::{fit_pca, fit_polychoric_pca, PcaBasis, PcaModel, Projector};
use gaitlr_core::recode::BinaryMatrix;
use gaitlr_core::synth::{generate_population, Scenario};
use ndarray::{Array2, Axis};
use proptest::prelude::*;

fn matrix(cells: Array2<u8>) -> BinaryMatrix {
    let features = (0..cells.ncols()).map(|j| FeatureDef::ordered(format!("f{j}"), &["no", "yes"])).collect();
    let schema = Arc::new(FeatureSchema::from_features(features).unwrap());
    let ids = (0..cells.nrows()).map(|i| (format!("p{i}"), "1".to_string())).collect();
    BinaryMatrix::new(schema, ids, cells).unwrap()
}

fn cells_strategy() -> impl Strategy<Value = Array2<u8>> {
    (2usize..7, 8usize..40).prop_flat_map(|(r, n)| {
        prop::collection::vec(0u8..2, n * r).prop_map(move |v| Array2::from_shape_vec((n, r), v).unwrap())
    })
}

fn non_constant(c: &Array2<u8>) -> bool {
    c.columns().into_iter().all(|col| col.iter().any(|&v| v != col[0]))
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn loadings_orthonormal_and_trace_preserved(c in cells_strategy(), corr in any::<bool>()) {
        prop_assume!(non_constant(&c));
        let basis = if corr { PcaBasis::Correlation } else { PcaBasis::Covariance };
        let m: PcaModel<f64> = fit_pca(&matrix(c.clone()), basis).unwrap();
        let r = m.loadings.ncols();
        let gram = m.loadings.t().dot(&m.loadings) - Array2::<f64>::eye(r);
        prop_assert!(max_abs(&gram) < 1e-10);
        let x = c.mapv(f64::from);
        let var = x.var_axis(Axis(0), 1.0);
        let trace = if corr { r as f64 } else { var.sum() };
        prop_assert!((m.eigenvalues.iter().sum::<f64>() - trace).abs() < 1e-8);
        // ties within round-off are ordered by column, not value
        prop_assert!(m.eigenvalues.windows(2).all(|w| w[0] >= w[1] - 1e-12 * m.eigenvalues[0].max(1.0)));
    }

    #[test]
    fn refit_is_bit_equal_and_rows_permute(c in cells_strategy(), shift in 1usize..7) {
        prop_assume!(non_constant(&c));
        let zb = matrix(c.clone());
        let a: PcaModel<f64> = fit_pca(&zb, PcaBasis::Correlation).unwrap();
        let b: PcaModel<f64> = fit_pca(&zb, PcaBasis::Correlation).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.fingerprint(), b.fingerprint());

        let k = a.eigenvalues.len();
        let scores = a.project_rows(zb.to_real::<f64>().view(), k).unwrap();
        let n = c.nrows();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let permuted = c.select(Axis(0), &perm).mapv(f64::from);
        let pscores = a.project_rows(permuted.view(), k).unwrap();
        prop_assert_eq!(pscores, scores.select(Axis(0), &perm));
    }
}

#[test]
fn polychoric_variant_projects_population() {
    let s = Scenario::standard(3);
    let mut spec = s.population.clone();
    spec.n_individuals = 400;
    let pop = generate_population(&s.config(&spec)).unwrap();
    let m = fit_polychoric_pca::<f64>(&pop).unwrap();
    let r = m.loadings.ncols();
    let gram = m.loadings.t().dot(&m.loadings) - Array2::<f64>::eye(r);
    assert!(max_abs(&gram) < 1e-10);
    assert!((m.eigenvalues.iter().sum::<f64>() - r as f64).abs() < 1e-8);
    let scores = m.score_dataset(pop.data(), 4).unwrap();
    assert_eq!(scores.scores.dim(), (400, 4));
    assert!(scores.scores.iter().all(|v| v.is_finite()));
}
