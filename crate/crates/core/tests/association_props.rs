use gaitlr_core::association::{covariate_selection, fit_binary_logistic, fit_ordinal_logistic, DesignMatrix};
use gaitlr_core::synth::{generate_population, Scenario};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn design(x: &[Vec<f64>]) -> DesignMatrix<f64> {
    let k = x.first().map_or(0, Vec::len);
    let values = Array2::from_shape_fn((x.len(), k), |(i, j)| x[i][j]);
    DesignMatrix::new((0..k).map(|j| format!("x{j}")).collect(), values).unwrap()
}

/// Covariates and an ordinal response from a proportional-odds model.
fn simulate(n: usize, alphas: &[f64], beta: &[f64], seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = beta.iter().map(|_| rng.random_range(-1.5..1.5)).collect();
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let u: f64 = rng.random();
        // Y > l with probability σ(α_l + η)
        let level = alphas.iter().filter(|&&a| u < 1.0 / (1.0 + (-(a + eta)).exp())).count();
        x.push(row);
        y.push(level);
    }
    (x, y)
}

fn well_posed(y: &[usize], levels: usize) -> bool {
    (0..levels).all(|l| y.iter().filter(|&&v| v == l).count() >= 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn relabeling_negates_binary_fit(seed in 0u64..10_000, b in -1.5..1.5f64) {
        let (x, y) = simulate(80, &[0.2], &[b, -0.5], seed);
        prop_assume!(well_posed(&y, 2));
        let d = design(&x);
        let yb: Vec<bool> = y.iter().map(|&v| v == 1).collect();
        let flipped: Vec<bool> = yb.iter().map(|v| !v).collect();
        let (Ok(f), Ok(g)) = (fit_binary_logistic(&d, &yb), fit_binary_logistic(&d, &flipped)) else {
            return Ok(());
        };
        prop_assert_eq!(g.alphas[0], -f.alphas[0]);
        for (a, c) in f.beta.iter().zip(&g.beta) {
            prop_assert_eq!(*c, -*a);
        }
    }

    #[test]
    fn reversing_levels_flips_signs(seed in 0u64..10_000) {
        let (x, y) = simulate(150, &[0.8, -0.7], &[0.9], seed);
        prop_assume!(well_posed(&y, 3));
        let d = design(&x);
        let f = fit_ordinal_logistic(&d, &y, 3).unwrap();
        let rev: Vec<usize> = y.iter().map(|&v| 2 - v).collect();
        let g = fit_ordinal_logistic(&d, &rev, 3).unwrap();
        prop_assert!((g.alphas[0] + f.alphas[1]).abs() < 1e-8);
        prop_assert!((g.alphas[1] + f.alphas[0]).abs() < 1e-8);
        prop_assert!((g.beta[0] + f.beta[0]).abs() < 1e-8);
    }

    #[test]
    fn two_level_ordinal_is_binary(seed in 0u64..10_000) {
        let (x, y) = simulate(100, &[-0.3], &[0.7, 0.4], seed);
        prop_assume!(well_posed(&y, 2));
        let d = design(&x);
        let o = fit_ordinal_logistic(&d, &y, 2).unwrap();
        let b = fit_binary_logistic(&d, &y.iter().map(|&v| v == 1).collect::<Vec<_>>()).unwrap();
        prop_assert!((o.alphas[0] - b.alphas[0]).abs() < 1e-10);
        for (p, q) in o.beta.iter().zip(&b.beta) {
            prop_assert!((p - q).abs() < 1e-10);
        }
        prop_assert!((o.log_likelihood - b.log_likelihood).abs() < 1e-10);
    }

    #[test]
    fn exceedance_intercepts_decrease(seed in 0u64..10_000) {
        let (x, y) = simulate(200, &[1.0, 0.0, -1.0], &[0.5], seed);
        prop_assume!(well_posed(&y, 4));
        let f = fit_ordinal_logistic(&design(&x), &y, 4).unwrap();
        prop_assert!(f.alphas.windows(2).all(|w| w[0] > w[1]));
        for v in [-1.0, 0.0, 1.0] {
            let p = f.category_probabilities(&[v]);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&q| q > 0.0 && q < 1.0));
        }
    }
}

#[test]
fn intercept_only_closed_forms() {
    let empty = design(&vec![Vec::new(); 100]);
    let yb: Vec<bool> = (0..100).map(|i| i < 25).collect();
    let f = fit_binary_logistic(&empty, &yb).unwrap();
    assert!((f.alphas[0] - (-1.0986122886681098)).abs() < 1e-6);
    let y: Vec<usize> = (0..100).map(|i| if i < 50 { 0 } else if i < 80 { 1 } else { 2 }).collect();
    let o = fit_ordinal_logistic(&empty, &y, 3).unwrap();
    assert!(o.alphas[0].abs() < 1e-6);
    assert!((o.alphas[1] - (-1.3862943611198906)).abs() < 1e-6);
}

fn binary_ll(x: &[Vec<f64>], y: &[usize], a: f64, b: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(r, &v)| {
            let eta = a + b * r[0];
            let p = 1.0 / (1.0 + (-eta).exp());
            if v == 1 { p.ln() } else { (1.0 - p).ln() }
        })
        .sum()
}

#[test]
fn matches_brute_force_grid() {
    for seed in 0..3 {
        let (x, y) = simulate(120, &[0.4], &[1.1], 100 + seed);
        let f = fit_binary_logistic(&design(&x), &y.iter().map(|&v| v == 1).collect::<Vec<_>>()).unwrap();
        // coarse grid, then a fine grid around the coarse optimum
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let mut centre = (0.0, 0.0);
        for (width, steps) in [(4.0, 200), (0.05, 200), (0.0006, 120)] {
            for i in 0..=steps {
                for j in 0..=steps {
                    let a = centre.0 - width + 2.0 * width * i as f64 / steps as f64;
                    let b = centre.1 - width + 2.0 * width * j as f64 / steps as f64;
                    let ll = binary_ll(&x, &y, a, b);
                    if ll > best.0 {
                        best = (ll, a, b);
                    }
                }
            }
            centre = (best.1, best.2);
        }
        assert!((f.alphas[0] - best.1).abs() < 1e-4, "{} vs {}", f.alphas[0], best.1);
        assert!((f.beta[0] - best.2).abs() < 1e-4, "{} vs {}", f.beta[0], best.2);
        assert!(f.log_likelihood >= best.0 - 1e-9);
    }
}

#[test]
fn recovers_proportional_odds_parameters() {
    let (alphas, beta) = ([1.0, -0.5], [0.8, -0.6]);
    let (x, y) = simulate(4000, &alphas, &beta, 77);
    let f = fit_ordinal_logistic(&design(&x), &y, 3).unwrap();
    let truth: Vec<f64> = alphas.iter().chain(&beta).copied().collect();
    let est: Vec<f64> = f.alphas.iter().chain(&f.beta).copied().collect();
    for ((t, e), se) in truth.iter().zip(&est).zip(&f.se) {
        assert!((t - e).abs() < 3.0 * se, "{e} vs {t} (se {se})");
    }
}

#[test]
fn selection_keeps_biology_and_finds_location_effect() {
    let s = Scenario::standard(4);
    let pop = generate_population(&s.config(&s.population)).unwrap();
    // head_roll carries a location shift in the standard scenario
    let r = covariate_selection::<f64>(&pop, "head_roll").unwrap();
    assert_eq!(r.included_blocks[0], "biological");
    assert!(r.included_blocks.iter().any(|b| b == "location"), "{:?}", r.included_blocks);
    assert!(r.fit.is_some());
    // step_length has no ethnicity or location effect; at most a chance inclusion
    let r = covariate_selection::<f64>(&pop, "step_length").unwrap();
    assert!(r.fit.unwrap().converged);
}
