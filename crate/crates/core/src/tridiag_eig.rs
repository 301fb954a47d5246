//! Eigenvalues of the final tridiagonal matrix, plus a dense reference.
//!
//! [`eig_qr`] runs implicit QL sweeps with a Wilkinson shift and splits the
//! problem whenever a subdiagonal entry becomes negligible. [`jacobi_oracle`]
//! is cyclic Jacobi on the dense matrix: slow, but simple enough to trust.

use crate::matrix::{SymmetricMatrix, TridiagonalMatrix};

/// Default deflation tolerance for [`eig_qr`].
pub const DEFAULT_TOL: f64 = 4.0 * f64::EPSILON;

/// Eigenvalues in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct EigResult {
    pub values: Vec<f64>,
    /// QL sweeps for [`eig_qr`], full Jacobi sweeps for [`jacobi_oracle`].
    pub iterations: usize,
    pub converged: bool,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// All eigenvalues of `t`. `e[k]` is treated as zero once
/// `|e[k]| <= tol * (|d[k]| + |d[k+1]|)`. After `30 n` sweeps the iteration
/// stops and reports `converged = false`.
pub fn eig_qr(t: &TridiagonalMatrix, tol: f64) -> EigResult {
    let n = t.n();
    let mut d = t.diagonal().to_vec();
    let mut e = t.subdiagonal().to_vec();
    e.push(0.0);
    let cap = 30 * n;
    let mut iterations = 0;
    let mut converged = true;

    'outer: for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= tol * dd || e[m].abs() < f64::MIN_POSITIVE {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            if iterations >= cap {
                converged = false;
                break 'outer;
            }
            iterations += 1;
            // Wilkinson shift from the leading 2x2 block of the unreduced part.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    EigResult { values: sorted(d), iterations, converged }
}

/// Cyclic Jacobi until the off-diagonal Frobenius mass is at most
/// `tol * ||A||_F` (or 100 sweeps pass). Meant for `n <= 512`.
pub fn jacobi_oracle(a: &SymmetricMatrix, tol: f64) -> EigResult {
    const MAX_SWEEPS: usize = 100;
    let n = a.n();
    let mut m = a.to_mat();
    let norm = a.frobenius_norm();
    let off = |m: &crate::dense::Mat| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for i in j + 1..n {
                s += 2.0 * m.get(i, j).powi(2);
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    let mut converged = off(&m) <= tol * norm;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m.get(p, p), m.get(q, q));
                let theta = (aqq - app) / (2.0 * apq);
                let t =
                    if theta.abs() > 1e150 { 0.5 / theta } else { theta.signum() / (theta.abs() + theta.hypot(1.0)) };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                {
                    let data = m.data_mut();
                    let (cp, cq) = (p * n, q * n);
                    for k in 0..n {
                        let (akp, akq) = (data[cp + k], data[cq + k]);
                        data[cp + k] = c * akp - s * akq;
                        data[cq + k] = s * akp + c * akq;
                    }
                }
                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    if k != p && k != q {
                        let (x, y) = (m.get(k, p), m.get(k, q));
                        m.set(p, k, x);
                        m.set(q, k, y);
                    }
                }
            }
        }
        converged = off(&m) <= tol * norm;
    }
    let values = sorted((0..n).map(|i| m.get(i, i)).collect());
    EigResult { values, iterations: sweeps, converged }
}

/// Largest `|x_k - y_k|` between two ascending spectra of equal length.
pub fn max_eigenvalue_deviation(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spectra differ in length");
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
