use gaitlr_core::lr::{
    ln_lr_component, ln_lr_component_quadrature, ln_lr_per_pc, silverman_bandwidth, KernelDensity, LrResult,
};
use gaitlr_core::quadrature::{integrate, QuadratureOptions};
use proptest::prelude::*;

fn kde_strategy() -> impl Strategy<Value = KernelDensity<f64>> {
    (prop::collection::vec(-4.0..4.0f64, 2..40), 0.05..1.5f64)
        .prop_map(|(z, h)| KernelDensity::with_bandwidth(z, h).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn symmetric_in_the_two_scores(kde in kde_strategy(), y1 in -5.0..5.0f64, y2 in -5.0..5.0f64, s2 in 1e-4..2.0f64) {
        prop_assert_eq!(ln_lr_per_pc(y1, y2, &kde, s2), ln_lr_per_pc(y2, y1, &kde, s2));
    }

    #[test]
    fn closed_form_matches_quadrature(kde in kde_strategy(), y1 in -5.0..5.0f64, y2 in -5.0..5.0f64, v1 in 1e-3..2.0f64, v2 in 1e-3..2.0f64) {
        let closed = ln_lr_component(y1, v1, y2, v2, &kde);
        let quad = ln_lr_component_quadrature(y1, v1, y2, v2, &kde).unwrap();
        let rel = (closed.exp() - quad.exp()).abs() / quad.exp();
        prop_assert!(rel < 1e-6, "closed {closed} quad {quad}");
    }

    #[test]
    fn huge_within_variance_dilutes_to_one(kde in kde_strategy(), y1 in -3.0..3.0f64, d in 0.1..3.0f64) {
        let y2 = y1 + d;
        let s = 1e3 * kde.bandwidth().max(d);
        let lr = ln_lr_per_pc(y1, y2, &kde, s * s).exp();
        prop_assert!((lr - 1.0).abs() < 1e-3, "{lr}");
    }

    #[test]
    fn cumulative_is_sum_of_components(per in prop::collection::vec(-30.0..30.0f64, 1..8)) {
        let r = LrResult::from_components(per.clone(), None);
        for m in 2..=per.len() {
            let step = r.ln_lr_at(m) - r.ln_lr_at(m - 1);
            // one rounding of the running sum separates the two sides
            prop_assert!((step - per[m - 1]).abs() <= 4.0 * f64::EPSILON * r.ln_lr_at(m - 1).abs().max(r.ln_lr_at(m).abs()));
        }
    }

    #[test]
    fn silverman_is_scale_equivariant(z in prop::collection::vec(-10.0..10.0f64, 5..50), c in 0.1..10.0f64) {
        prop_assume!(z.iter().any(|&v| (v - z[0]).abs() > 1e-3));
        let h = silverman_bandwidth(&z).unwrap();
        let scaled: Vec<f64> = z.iter().map(|v| v * c).collect();
        let hc = silverman_bandwidth(&scaled).unwrap();
        prop_assert!((hc - c * h).abs() <= 1e-9 * c * h, "{hc} vs {}", c * h);
    }
}

#[test]
fn kde_integrates_to_one() {
    for (support, h) in [(vec![0.0], 0.3), (vec![-2.0, 0.5, 0.6, 3.0], 0.05), ((0..50).map(|i| (i as f64).sin() * 3.0).collect(), 0.4)] {
        let kde = KernelDensity::with_bandwidth(support.clone(), h).unwrap();
        let lo = support.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * h;
        let hi = support.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * h;
        let r = integrate(|x| kde.density(x), lo, hi, &support, QuadratureOptions::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "{}", r.value);
    }
}

#[test]
fn analytic_anchor() {
    // one support point at 0, h = 1, s² = 1, y1 = y2 = 0:
    // N(0;0,2)·N(0;0,3/2) / N(0;0,2)² = √(4/3)
    let kde = KernelDensity::with_bandwidth(vec![0.0], 1.0).unwrap();
    let lr = ln_lr_per_pc(0.0f64, 0.0, &kde, 1.0).exp();
    assert!((lr - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn f32_agrees_with_f64() {
    let z: Vec<f64> = (0..30).map(|i| ((i * 37) % 17) as f64 / 4.0 - 2.0).collect();
    let k64 = KernelDensity::fit(z.clone()).unwrap();
    let k32 = KernelDensity::fit(z.iter().map(|&v| v as f32).collect()).unwrap();
    for (y1, y2) in [(0.0, 0.1), (-1.5, 1.5), (2.0, 2.0)] {
        let a = ln_lr_per_pc(y1, y2, &k64, 0.02);
        let b = ln_lr_per_pc(y1 as f32, y2 as f32, &k32, 0.02) as f64;
        assert!((a - b).abs() < 1e-3 * a.abs().max(1.0), "{a} {b}");
    }
}

#[test]
fn truncation_floor_is_exact() {
    let r = LrResult::from_components(vec![-30.0, -5.0], Some(1e-8));
    assert_eq!(r.lr_at(2), 1e-8);
    assert!(r.truncated_at(2));
    assert!(!r.truncated_at(1) || r.lr_at(1) == 1e-8);
    let r = LrResult::from_components(vec![-30.0, -5.0], None);
    assert!(r.lr_at(2) < 1e-8);
}
