//! Householder reflectors and the compact WY panel factorization.
//!
//! A reflector is `H = I - beta * v * v^T` with `v[0] = 1`. A panel QR of `p`
//! columns yields `Q = H_0 H_1 ... H_{p-1} = I - W Y^T`, where `Y` holds the
//! reflector vectors (unit lower trapezoidal) and `W = Y T` for the upper
//! triangular `T` of the forward, columnwise accumulation. Given `W` and `Y`,
//! the two-sided update of a symmetric `A` collapses to a rank-2p correction
//!
//! ```text
//! Q^T A Q = A - Z Y^T - Y Z^T,   Z = A W - 1/2 Y (W^T (A W))
//! ```
//!
//! which is what lets band reduction defer its trailing update into one SYR2K.

use crate::dense::{self, gemm, norm2, Mat, MatRef, Op};
use crate::error::{shape_err, Error, Result};

/// `H = I - beta * v * v^T`, stored with the leading `v[0] = 1` explicit.
#[derive(Clone, Debug, PartialEq)]
pub struct HouseholderReflector {
    pub v: Vec<f64>,
    pub beta: f64,
    /// Leading entry of `H x` for the generating vector `x`.
    pub alpha: f64,
}

impl HouseholderReflector {
    pub fn identity(m: usize) -> Self {
        let mut v = vec![0.0; m];
        if m > 0 {
            v[0] = 1.0;
        }
        HouseholderReflector { v, beta: 0.0, alpha: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// `x <- H x`.
    pub fn apply(&self, x: &mut [f64]) {
        apply_reflector(&self.v, self.beta, x);
    }

    pub fn to_dense(&self) -> Mat {
        let m = self.v.len();
        Mat::from_fn(m, m, |i, j| f64::from(u8::from(i == j)) - self.beta * self.v[i] * self.v[j])
    }
}

#[inline]
pub(crate) fn apply_reflector(v: &[f64], beta: f64, x: &mut [f64]) {
    if beta == 0.0 {
        return;
    }
    let s = beta * dense::dot(v, x);
    dense::axpy(-s, v, x);
}

/// Fills `v` (same length as `x`, `v[0] = 1`) and returns `(beta, alpha)`.
///
/// `alpha = -sign(x[0]) * ||x||` with `sign(0) = +1`. When the tail `x[1..]` is
/// already zero the reflector is the identity (`beta = 0`, `alpha = x[0]`), so
/// columns that need no elimination are left untouched.
pub(crate) fn house_into(x: &[f64], v: &mut [f64]) -> (f64, f64) {
    debug_assert_eq!(x.len(), v.len());
    let m = x.len();
    v.fill(0.0);
    if m == 0 {
        return (0.0, 0.0);
    }
    v[0] = 1.0;
    let x0 = x[0];
    let tail = norm2(&x[1..]);
    if tail == 0.0 {
        return (0.0, x0);
    }
    let norm = x0.hypot(tail);
    let alpha = if x0 >= 0.0 { -norm } else { norm };
    let pivot = x0 - alpha;
    for i in 1..m {
        v[i] = x[i] / pivot;
    }
    ((alpha - x0) / alpha, alpha)
}

/// Householder reflector mapping `x` onto `alpha * e_1`.
pub fn house(x: &[f64]) -> Result<HouseholderReflector> {
    if x.is_empty() {
        return Err(Error::InvalidLength("reflector source must have at least one entry".into()));
    }
    let mut v = vec![0.0; x.len()];
    let (beta, alpha) = house_into(x, &mut v);
    Ok(HouseholderReflector { v, beta, alpha })
}

/// Compact WY factors of one panel.
#[derive(Clone, Debug)]
pub struct PanelFactors {
    /// `m x p`, with `I - W Y^T` equal to the product of the panel's reflectors.
    pub w: Mat,
    /// `m x p`, unit lower trapezoidal reflector vectors.
    pub y: Mat,
    /// `m x p` two-sided update factor, filled by [`compute_z`] when needed.
    pub z: Option<Mat>,
    /// `p x p` upper triangular factor.
    pub r: Mat,
    /// Reflector scalars, one per column.
    pub betas: Vec<f64>,
}

/// Unblocked Householder QR of an `m x p` panel (`m >= p >= 1`).
///
/// Postcondition: `(I - W Y^T)^T * panel = [R; 0]`.
pub fn panel_qr(panel: MatRef<'_>) -> Result<PanelFactors> {
    let (m, p) = (panel.rows(), panel.cols());
    if p == 0 || m < p {
        return shape_err(format!("panel QR needs m >= p >= 1, got {m}x{p}"));
    }
    let mut a = panel.to_mat();
    let mut y = Mat::zeros(m, p);
    let mut betas = vec![0.0; p];
    let mut scratch = vec![0.0; m];
    for c in 0..p {
        let len = m - c;
        let (beta, alpha) = house_into(&a.col(c)[c..], &mut scratch[..len]);
        y.col_mut(c)[c..].copy_from_slice(&scratch[..len]);
        betas[c] = beta;
        let col = a.col_mut(c);
        col[c] = alpha;
        col[c + 1..].fill(0.0);
        if beta != 0.0 {
            for cc in c + 1..p {
                apply_reflector(&scratch[..len], beta, &mut a.col_mut(cc)[c..]);
            }
        }
    }
    let t = wy_triangle(y.as_ref(), &betas);
    let mut w = Mat::zeros(m, p);
    gemm(1.0, y.as_ref(), Op::N, t.as_ref(), Op::N, 0.0, w.as_mut());
    let r = Mat::from_fn(p, p, |i, j| if i <= j { a.get(i, j) } else { 0.0 });
    Ok(PanelFactors { w, y, z: None, r, betas })
}

/// Upper triangular `T` with `H_0 ... H_{p-1} = I - Y T Y^T` (forward, columnwise).
pub(crate) fn wy_triangle(y: MatRef<'_>, betas: &[f64]) -> Mat {
    let p = betas.len();
    let mut t = Mat::zeros(p, p);
    for i in 0..p {
        t.set(i, i, betas[i]);
        if i == 0 || betas[i] == 0.0 {
            continue;
        }
        // t[0..i, i] = -beta_i * T[0..i, 0..i] * (Y[:, 0..i]^T y_i)
        let yi = y.col(i);
        let g: Vec<f64> = (0..i).map(|j| dense::dot(y.col(j), yi)).collect();
        for r in 0..i {
            let mut s = 0.0;
            for c in r..i {
                s += t.get(r, c) * g[c];
            }
            t.set(r, i, -betas[i] * s);
        }
    }
    t
}

/// `Z = A W - 1/2 Y (W^T (A W))`, evaluating `A W` exactly once through `apply_a`.
pub fn compute_z(apply_a: impl FnOnce(MatRef<'_>) -> Mat, w: MatRef<'_>, y: MatRef<'_>) -> Result<Mat> {
    if (w.rows(), w.cols()) != (y.rows(), y.cols()) {
        return shape_err(format!("W is {}x{} but Y is {}x{}", w.rows(), w.cols(), y.rows(), y.cols()));
    }
    let aw = apply_a(w);
    if (aw.rows(), aw.cols()) != (w.rows(), w.cols()) {
        return shape_err(format!("A*W returned {}x{}, expected {}x{}", aw.rows(), aw.cols(), w.rows(), w.cols()));
    }
    Ok(z_from_aw(aw, w, y))
}

pub(crate) fn z_from_aw(mut aw: Mat, w: MatRef<'_>, y: MatRef<'_>) -> Mat {
    let p = w.cols();
    let mut g = Mat::zeros(p, p);
    gemm(1.0, w, Op::T, aw.as_ref(), Op::N, 0.0, g.as_mut());
    gemm(-0.5, y, Op::N, g.as_ref(), Op::N, 1.0, aw.as_mut());
    aw
}
