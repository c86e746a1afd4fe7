//! Small dense linear-algebra kernels: symmetric eigendecomposition by
//! cyclic Jacobi rotations and Cholesky-based solves.

use ndarray::{Array1, Array2};

use crate::scalar::Real;

/// Eigenvalues (unsorted, in diagonal order) and eigenvectors (columns) of a
/// symmetric matrix.
pub fn symmetric_eigen<T: Real>(matrix: &Array2<T>) -> (Array1<T>, Array2<T>) {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "symmetric_eigen needs a square matrix");
    let mut a = matrix.clone();
    let mut v = Array2::<T>::eye(n);
    let scale = a.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let tol = T::epsilon() * T::of(0.5) * scale.max(T::min_positive_value());

    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = Array1::from_iter((0..n).map(|i| a[[i, i]]));
    (values, v)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`
/// if a pivot falls below `tol` times the largest diagonal entry.
pub fn cholesky<T: Real>(a: &Array2<T>, tol: T) -> Option<Array2<T>> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[[i, i]].abs()).fold(T::zero(), T::max);
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > tol * max_diag) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Real>(l: &Array2<T>, b: &Array1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

pub fn cholesky_inverse<T: Real>(l: &Array2<T>) -> Array2<T> {
    let n = l.nrows();
    let mut inv = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<T>::zeros(n);
        e[j] = T::one();
        inv.column_mut(j).assign(&cholesky_solve(l, &e));
    }
    inv
}
