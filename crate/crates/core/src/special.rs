//! Normal-distribution special functions and log-domain helpers.
//!
//! The complementary error function comes from `libm`; the bivariate normal
//! CDF is Genz's refinement of the Drezner–Wesolowsky method, accurate to
//! roughly double precision for all correlations.

use std::sync::OnceLock;

use crate::scalar::Real;

/// Standard normal density.
pub fn normal_pdf<T: Real>(x: T) -> T {
    let two_pi = T::of(2.0) * T::PI();
    (-(x * x) / T::of(2.0)).exp() / two_pi.sqrt()
}

/// Natural log of the N(0, var) density evaluated at `x`.
pub fn ln_normal_pdf<T: Real>(x: T, var: T) -> T {
    let two_pi = T::of(2.0) * T::PI();
    -T::of(0.5) * (two_pi * var).ln() - x * x / (T::of(2.0) * var)
}

/// Standard normal CDF.
pub fn normal_cdf<T: Real>(x: T) -> T {
    if x == T::infinity() {
        return T::one();
    }
    if x == T::neg_infinity() {
        return T::zero();
    }
    T::of(phi(x.as_f64()))
}

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile. Returns ±∞ at p = 0 or 1.
///
/// Acklam's rational approximation refined by one Halley step against the
/// `erfc`-based CDF.
pub fn normal_quantile<T: Real>(p: T) -> T {
    let p = p.as_f64();
    if p <= 0.0 {
        return T::neg_infinity();
    }
    if p >= 1.0 {
        return T::infinity();
    }
    T::of(quantile_f64(p))
}

fn quantile_f64(p: f64) -> f64 {
    if p > 0.5 {
        return -quantile_f64(1.0 - p);
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = phi(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// `ln Σ exp(x_i)` without overflow. Empty input gives `-∞`.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || max == T::infinity() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    // Positive-half nodes of the n-point rule (n even), by Newton iteration.
    let mut out = Vec::with_capacity(n / 2);
    for i in 1..=n / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn bvn_rules() -> &'static [Vec<(f64, f64)>; 3] {
    static RULES: OnceLock<[Vec<(f64, f64)>; 3]> = OnceLock::new();
    RULES.get_or_init(|| [gauss_legendre(6), gauss_legendre(12), gauss_legendre(20)])
}

/// Upper orthant probability P(X > dh, Y > dk) for a standard bivariate
/// normal with correlation `r`.
fn bvn_upper<T: Real>(dh: T, dk: T, r: T) -> T {
    let zero = T::zero();
    let one = T::one();
    if dh == T::infinity() || dk == T::infinity() {
        return zero;
    }
    if dh == T::neg_infinity() {
        return if dk == T::neg_infinity() { one } else { normal_cdf(-dk) };
    }
    if dk == T::neg_infinity() {
        return normal_cdf(-dh);
    }
    if r == zero {
        return normal_cdf(-dh) * normal_cdf(-dk);
    }

    let two = T::of(2.0);
    let two_pi = two * T::PI();
    let abs_r = r.abs();
    let rule = &bvn_rules()[if abs_r < T::of(0.3) {
        0
    } else if abs_r < T::of(0.75) {
        1
    } else {
        2
    }];

    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = zero;

    if abs_r < T::of(0.925) {
        let hs = (h * h + k * k) / two;
        let asr = r.asin();
        for &(x, w) in rule {
            let (x, w) = (T::of(x), T::of(w));
            for s in [-one, one] {
                let sn = (asr * (s * x + one) / two).sin();
                bvn += w * ((sn * hk - hs) / (one - sn * sn)).exp();
            }
        }
        return bvn * asr / (two * two_pi) + normal_cdf(-h) * normal_cdf(-k);
    }

    if r < zero {
        k = -k;
        hk = -hk;
    }
    if abs_r < one {
        let a2 = (one - r) * (one + r);
        let mut a = a2.sqrt();
        let bs = (h - k) * (h - k);
        let c = (T::of(4.0) - hk) / T::of(8.0);
        let d = (T::of(12.0) - hk) / T::of(16.0);
        let five = T::of(5.0);
        let three = T::of(3.0);
        bvn = a
            * (-(bs / a2 + hk) / two).exp()
            * (one - c * (bs - a2) * (one - d * bs / five) / three + c * d * a2 * a2 / five);
        if hk > T::of(-160.0) {
            let b = bs.sqrt();
            bvn -= (-hk / two).exp()
                * two_pi.sqrt()
                * normal_cdf(-b / a)
                * b
                * (one - c * bs * (one - d * bs / five) / three);
        }
        a = a / two;
        for &(x, w) in rule {
            let (x, w) = (T::of(x), T::of(w));
            for s in [-one, one] {
                let xs = (a * (s * x + one)).powi(2);
                let rs = (one - xs).sqrt();
                let asr = -(bs / xs + hk) / two;
                if asr > T::of(-100.0) {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * xs / (two * (one + rs).powi(2))).exp() / rs
                            - (one + c * xs * (one + d * xs)));
                }
            }
        }
        bvn = -bvn / two_pi;
    }
    if r > zero {
        bvn + normal_cdf(-h.max(k))
    } else {
        -bvn + (normal_cdf(-h) - normal_cdf(-k)).max(zero)
    }
}

/// Bivariate standard normal CDF P(X ≤ h, Y ≤ k) with correlation `rho`.
/// Infinite limits are allowed.
pub fn bvn_cdf<T: Real>(h: T, k: T, rho: T) -> T {
    let p = bvn_upper(-h, -k, rho);
    p.max(T::zero()).min(T::one())
}
