//! Small dense linear algebra: just enough for GPR kernels and ridge solves.

use crate::num::Real;

/// Row-major symmetric matrix Cholesky factorization, in place.
/// Returns the lower-triangular factor, or `None` if not positive definite.
pub fn cholesky<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves L Lᵀ x = b given the lower Cholesky factor.
pub fn cholesky_solve<T: Real>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Gaussian elimination with partial pivoting; returns `None` when singular.
pub fn solve_linear<T: Real>(a: &[T], n: usize, b: &[T]) -> Option<Vec<T>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r * n + col].abs() > m[piv * n + col].abs() {
                piv = r;
            }
        }
        if m[piv * n + col].abs() < T::of(1e-12) {
            return None;
        }
        if piv != col {
            for c in 0..n {
                m.swap(col * n + c, piv * n + c);
            }
            x.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let v = m[col * n + c] * f;
                m[r * n + c] -= v;
            }
            x[r] = x[r] - x[col] * f;
        }
    }
    for i in 0..n {
        x[i] /= m[i * n + i];
    }
    Some(x)
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
