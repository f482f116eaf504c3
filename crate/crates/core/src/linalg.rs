//! Small dense kernels for per-node metric algebra (sizes up to ~8).

use crate::scalar::Scalar;

/// Cholesky factor `L` (row-major, lower) of an SPD matrix, or `None` when a
/// pivot is not strictly positive.
pub fn cholesky<T: Scalar>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
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

/// Inverse and determinant of an SPD matrix.
pub fn spd_inverse<T: Scalar>(a: &[T], n: usize) -> Option<(Vec<T>, T)> {
    let l = cholesky(a, n)?;
    let mut det = T::one();
    for i in 0..n {
        det *= l[i * n + i];
    }
    det = det * det;
    // Solve L L^T X = I column by column.
    let mut inv = vec![T::zero(); n * n];
    let mut y = vec![T::zero(); n];
    for col in 0..n {
        for i in 0..n {
            let mut s = if i == col { T::one() } else { T::zero() };
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * inv[k * n + col];
            }
            inv[i * n + col] = s / l[i * n + i];
        }
    }
    Some((inv, det))
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi sweeps.
pub fn min_eigenvalue<T: Scalar>(a: &[T], n: usize) -> T {
    let mut m = a.to_vec();
    for _ in 0..50 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off < T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (T::cst(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).fold(T::infinity(), T::min)
}
