//! Globally adaptive Gauss–Kronrod (7/15) integration on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 0.0, max_intervals: 4000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

fn kronrod<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Segment<T> {
    let half = (b - a) / T::of(2.0);
    let center = (a + b) / T::of(2.0);
    let fc = f(center);
    let mut kron = fc * T::of(WGK[7]);
    let mut gauss = fc * T::of(WG[3]);
    for i in 0..7 {
        let dx = half * T::of(XGK[i]);
        let pair = f(center - dx) + f(center + dx);
        kron += T::of(WGK[i]) * pair;
        if i % 2 == 1 {
            gauss += T::of(WG[i / 2]) * pair;
        }
    }
    Segment {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]`, starting from the subdivision given by the
/// sorted interior `breakpoints` (points outside `(a, b)` are ignored).
pub fn integrate<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    breakpoints: &[T],
    opts: QuadratureOptions,
) -> Result<Integral<T>> {
    let mut edges = vec![a];
    let mut interior: Vec<T> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    interior.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    interior.dedup();
    edges.extend(interior);
    edges.push(b);

    let mut heap: BinaryHeap<Segment<T>> = edges
        .windows(2)
        .map(|w| kronrod(&f, w[0], w[1]))
        .collect();
    let rel = T::of(opts.rel_tol);
    let abs = T::of(opts.abs_tol);

    loop {
        let total: T = heap.iter().map(|s| s.value).sum();
        let err: T = heap.iter().map(|s| s.error).sum();
        if err <= abs.max(rel * total.abs()) {
            return Ok(Integral { value: total, error: err, intervals: heap.len() });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::QuadratureNonconvergence { intervals: heap.len(), error: err.as_f64() });
        }
        let worst = heap.pop().expect("at least one segment");
        let mid = (worst.a + worst.b) / T::of(2.0);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in this precision.
            return Err(Error::QuadratureNonconvergence { intervals: heap.len() + 1, error: err.as_f64() });
        }
        heap.push(kronrod(&f, worst.a, mid));
        heap.push(kronrod(&f, mid, worst.b));
    }
}
