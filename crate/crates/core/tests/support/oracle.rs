//! Dense reference decompositions written independently of the library's
//! linear-algebra backend: cyclic Jacobi for symmetric eigenproblems and
//! one-sided Jacobi for the SVD. Slow, simple, and accurate to a few ulps.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Eigenvalues (descending) and eigenvectors (columns) of a symmetric matrix.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let total: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Thin SVD `m = U diag(s) Vᵀ` with singular values descending.
pub fn jacobi_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let transpose = m.nrows() < m.ncols();
    let a0 = if transpose { m.transpose() } else { m.clone() };
    let (rows, cols) = a0.shape();
    let mut a = a0;
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha: f64 = a.column(p).norm_squared();
                let beta: f64 = a.column(q).norm_squared();
                let gamma: f64 = a.column(p).dot(&a.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..cols {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|c| a.column(c).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let s: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let u = DMatrix::from_fn(rows, cols, |r, c| {
        let i = order[c];
        if norms[i] > 0.0 {
            a[(r, i)] / norms[i]
        } else {
            0.0
        }
    });
    let vv = DMatrix::from_fn(cols, cols, |r, c| v[(r, order[c])]);
    if transpose {
        (s, vv, u)
    } else {
        (s, u, vv)
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    // the Gram matrix on the short side is enough for the top singular value
    let gram = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    jacobi_eigen(&gram).0[0].max(0.0).sqrt()
}

pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    let (values, _) = jacobi_eigen(m);
    values.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn psd_truncate(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let (values, vectors) = jacobi_eigen(m);
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &l) in values.iter().enumerate() {
        if l > eps {
            let u = vectors.column(i);
            out += (l - eps) * u * u.transpose();
        }
    }
    out
}

pub fn clip_singular(m: &DMatrix<f64>, bound: f64) -> DMatrix<f64> {
    let (s, u, v) = jacobi_svd(m);
    let clipped = DVector::from_iterator(s.len(), s.iter().map(|x| x.min(bound)));
    &u * DMatrix::from_diagonal(&clipped) * v.transpose()
}
