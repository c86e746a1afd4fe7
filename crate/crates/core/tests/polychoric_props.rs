use gaitlr_core::polychoric::{estimate_thresholds, polychoric_rho, table_log_likelihood, ContingencyTable, RHO_CLAMP};
use ndarray::{s, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn table_strategy() -> impl Strategy<Value = Array2<u64>> {
    (2usize..5, 2usize..5).prop_flat_map(|(r, c)| {
        prop::collection::vec(0u64..40, r * c).prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

fn usable(t: &Array2<u64>) -> bool {
    let rows = t.rows().into_iter().filter(|r| r.sum() > 0).count();
    let cols = t.columns().into_iter().filter(|c| c.sum() > 0).count();
    rows >= 2 && cols >= 2
}

fn rho(t: &Array2<u64>) -> f64 {
    polychoric_rho::<f64>(&ContingencyTable::new(t.clone()).unwrap()).unwrap().rho
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetries(t in table_strategy()) {
        prop_assume!(usable(&t));
        let r = rho(&t);
        prop_assert!(r.abs() <= RHO_CLAMP);
        prop_assert!((rho(&t.t().to_owned()) - r).abs() < 1e-6);
        let both = t.slice(s![..;-1, ..;-1]).to_owned();
        prop_assert!((rho(&both) - r).abs() < 1e-6);
        let one = t.slice(s![..;-1, ..]).to_owned();
        prop_assert!((rho(&one) + r).abs() < 1e-6);
    }

    #[test]
    fn beats_every_grid_point(t in table_strategy()) {
        prop_assume!(usable(&t));
        let res = polychoric_rho::<f64>(&ContingencyTable::new(t.clone()).unwrap()).unwrap();
        if res.clamped {
            return Ok(());
        }
        let ta = estimate_thresholds::<f64>(&t.rows().into_iter().map(|r| r.sum()).collect::<Vec<_>>()).unwrap();
        let tb = estimate_thresholds::<f64>(&t.columns().into_iter().map(|c| c.sum()).collect::<Vec<_>>()).unwrap();
        let best = table_log_likelihood(&t, &ta, &tb, res.rho);
        for k in 0..=200 {
            let g = -0.999 + 0.00999 * k as f64;
            prop_assert!(best >= table_log_likelihood(&t, &ta, &tb, g) - 1e-9);
        }
    }
}

fn latent_table(rho: f64, ta: &[f64], tb: &[f64], n: usize, seed: u64) -> Array2<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Array2::<u64>::zeros((ta.len() + 1, tb.len() + 1));
    let level = |x: f64, th: &[f64]| th.iter().filter(|&&c| x > c).count();
    for _ in 0..n {
        let u: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let v = rho * u + (1.0 - rho * rho).sqrt() * e;
        t[[level(u, ta), level(v, tb)]] += 1;
    }
    t
}

#[test]
fn recovers_latent_correlation() {
    for (i, &r) in [0.0, 0.4, 0.7].iter().enumerate() {
        let t = latent_table(r, &[-0.5, 0.6], &[0.2], 5000, 40 + i as u64);
        let est = rho(&t);
        assert!((est - r).abs() < 0.05, "rho {r}: estimated {est}");
    }
}

#[test]
fn perfect_agreement_clamps() {
    let t = ndarray::array![[30u64, 0], [0, 70]];
    let res = polychoric_rho::<f64>(&ContingencyTable::new(t).unwrap()).unwrap();
    assert_eq!(res.rho, RHO_CLAMP);
    assert!(res.clamped);
}
