//! Derivative-free scalar maximization.

use crate::scalar::Real;

/// Brent's method (golden section with parabolic steps) maximizing `f` on
/// `[a, b]`. Returns the arg max and the function value there.
pub fn maximize_brent<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> (T, T) {
    let golden = T::of(0.381_966_011_250_105_1);
    let neg = |x: T| -f(x);
    let (mut a, mut b) = (a, b);
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = neg(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d = T::zero();
    let mut e = T::zero();
    let two = T::of(2.0);
    for _ in 0..200 {
        let m = (a + b) / two;
        let tol1 = tol + T::of(1e-12) * x.abs();
        let tol2 = two * tol1;
        if (x - m).abs() <= tol2 - (b - a) / two {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (q * e_prev / two).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= m { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > T::zero() { x + tol1 } else { x - tol1 };
        let fu = neg(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}
