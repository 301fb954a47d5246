//! Column-major dense matrices, borrowed views, and the GEMM kernel used by the
//! blocked stages.
//!
//! Views carry an explicit leading dimension so that sub-blocks of a larger
//! matrix (a trailing block, a panel, a band window) can be handed to the same
//! kernels without copying. The GEMM itself is `matrixmultiply::dgemm`, tiled
//! over the output and run on the rayon pool. Tiling depends only on the problem
//! shape, so results do not depend on the number of worker threads.

use rayon::prelude::*;

/// Owned column-major matrix with leading dimension equal to its row count.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i + i * n] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Wraps column-major data. Panics if `data.len() != rows * cols`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "column-major buffer has the wrong length");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.rows]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.rows] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef { data: &self.data, rows: self.rows, cols: self.cols, ld: self.rows.max(1) }
    }

    pub fn as_mut(&mut self) -> MatMut<'_> {
        let ld = self.rows.max(1);
        MatMut { data: &mut self.data, rows: self.rows, cols: self.cols, ld }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(self.as_ref())
    }

    /// `self * rhs`, allocating the result.
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows, rhs.cols);
        gemm(1.0, self.as_ref(), Op::N, rhs.as_ref(), Op::N, 0.0, out.as_mut());
        out
    }

    /// `self - rhs`. Panics on shape mismatch.
    pub fn sub(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Borrowed column-major view: element `(i, j)` lives at `data[i + j * ld]`.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    ld: usize,
}

/// Mutable counterpart of [`MatRef`].
#[derive(Debug)]
pub struct MatMut<'a> {
    data: &'a mut [f64],
    rows: usize,
    cols: usize,
    ld: usize,
}

fn view_len(rows: usize, cols: usize, ld: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (cols - 1) * ld + rows
    }
}

impl<'a> MatRef<'a> {
    /// Panics if the view does not fit in `data` or `ld < rows`.
    pub fn new(data: &'a [f64], rows: usize, cols: usize, ld: usize) -> Self {
        assert!(ld >= rows.max(1), "leading dimension {ld} smaller than rows {rows}");
        let len = view_len(rows, cols, ld);
        assert!(len <= data.len(), "view {rows}x{cols} (ld {ld}) exceeds buffer of {}", data.len());
        MatRef { data: &data[..len], rows, cols, ld }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ld(&self) -> usize {
        self.ld
    }

    pub fn data(&self) -> &'a [f64] {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld]
    }

    pub fn col(&self, j: usize) -> &'a [f64] {
        &self.data[j * self.ld..j * self.ld + self.rows]
    }

    pub fn sub(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> MatRef<'a> {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "sub-view out of range");
        if rows == 0 || cols == 0 {
            return MatRef { data: &[], rows, cols, ld: self.ld };
        }
        let off = r0 + c0 * self.ld;
        MatRef { data: &self.data[off..off + view_len(rows, cols, self.ld)], rows, cols, ld: self.ld }
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }
}

impl<'a> MatMut<'a> {
    pub fn new(data: &'a mut [f64], rows: usize, cols: usize, ld: usize) -> Self {
        assert!(ld >= rows.max(1), "leading dimension {ld} smaller than rows {rows}");
        let len = view_len(rows, cols, ld);
        assert!(len <= data.len(), "view {rows}x{cols} (ld {ld}) exceeds buffer of {}", data.len());
        MatMut { data: &mut data[..len], rows, cols, ld }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ld(&self) -> usize {
        self.ld
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld] = v;
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.ld]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let ld = self.ld;
        &mut self.data[j * ld..j * ld + self.rows]
    }

    /// Backing slice starting at element `(0, 0)`.
    pub fn data_mut(&mut self) -> &mut [f64] {
        self.data
    }

    pub fn rb(&self) -> MatRef<'_> {
        MatRef { data: self.data, rows: self.rows, cols: self.cols, ld: self.ld }
    }

    pub fn rb_mut(&mut self) -> MatMut<'_> {
        MatMut { data: self.data, rows: self.rows, cols: self.cols, ld: self.ld }
    }

    pub fn sub_mut(&mut self, r0: usize, c0: usize, rows: usize, cols: usize) -> MatMut<'_> {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "sub-view out of range");
        if rows == 0 || cols == 0 {
            return MatMut { data: &mut [], rows, cols, ld: self.ld };
        }
        let off = r0 + c0 * self.ld;
        let len = view_len(rows, cols, self.ld);
        MatMut { data: &mut self.data[off..off + len], rows, cols, ld: self.ld }
    }

    /// Consuming variant of [`MatMut::sub_mut`] that keeps the original lifetime.
    pub fn into_sub(self, r0: usize, c0: usize, rows: usize, cols: usize) -> MatMut<'a> {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "sub-view out of range");
        if rows == 0 || cols == 0 {
            return MatMut { data: &mut [], rows, cols, ld: self.ld };
        }
        let off = r0 + c0 * self.ld;
        let len = view_len(rows, cols, self.ld);
        MatMut { data: &mut self.data[off..off + len], rows, cols, ld: self.ld }
    }

    pub fn fill(&mut self, v: f64) {
        for j in 0..self.cols {
            self.col_mut(j).fill(v);
        }
    }

    pub fn copy_from(&mut self, src: MatRef<'_>) {
        assert_eq!((self.rows, self.cols), (src.rows(), src.cols()));
        for j in 0..self.cols {
            self.col_mut(j).copy_from_slice(src.col(j));
        }
    }
}

/// Transposition flag for [`gemm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

impl Op {
    fn dims(self, m: MatRef<'_>) -> (usize, usize) {
        match self {
            Op::N => (m.rows, m.cols),
            Op::T => (m.cols, m.rows),
        }
    }

    fn strides(self, m: MatRef<'_>) -> (isize, isize) {
        match self {
            Op::N => (1, m.ld as isize),
            Op::T => (m.ld as isize, 1),
        }
    }
}

const TILE: usize = 256;
const PAR_WORK: usize = 1 << 18;

#[derive(Clone, Copy)]
struct SendPtr(*mut f64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

/// `C <- alpha * op(A) * op(B) + beta * C`.
///
/// Panics on inconsistent shapes. When `beta == 0` the prior content of `C` is
/// ignored (NaNs included).
pub fn gemm(alpha: f64, a: MatRef<'_>, ta: Op, b: MatRef<'_>, tb: Op, beta: f64, c: MatMut<'_>) {
    let (m, k) = ta.dims(a);
    let (kb, n) = tb.dims(b);
    assert_eq!(k, kb, "gemm inner dimensions differ");
    assert_eq!((m, n), (c.rows, c.cols), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = ta.strides(a);
    let (rsb, csb) = tb.strides(b);
    let ldc = c.ld;
    let cptr = SendPtr(c.data.as_mut_ptr());
    let aptr = a.data.as_ptr() as usize;
    let bptr = b.data.as_ptr() as usize;

    // One tile is (r0, c0, rows, cols) of C. Row tiles of op(A) start at
    // r0 * rsa, column tiles of op(B) at c0 * csb.
    let run = move |r0: usize, c0: usize, rows: usize, cols: usize| {
        let cp = cptr;
        // SAFETY: tiles handed to `run` are disjoint sub-blocks of `c`, and the
        // A/B pointers stay within the views validated above.
        unsafe {
            let ap = (aptr as *const f64).offset(r0 as isize * rsa);
            let bp = (bptr as *const f64).offset(c0 as isize * csb);
            let cpt = cp.0.add(r0 + c0 * ldc);
            if k == 0 {
                for j in 0..cols {
                    for i in 0..rows {
                        let x = cpt.add(i + j * ldc);
                        *x = if beta == 0.0 { 0.0 } else { beta * *x };
                    }
                }
                return;
            }
            matrixmultiply::dgemm(rows, k, cols, alpha, ap, rsa, csa, bp, rsb, csb, beta, cpt, 1, ldc as isize);
        }
    };

    if m * n * k.max(1) < PAR_WORK || (m <= TILE && n <= TILE) {
        run(0, 0, m, n);
        return;
    }
    let mut tiles = Vec::new();
    if n >= m {
        let step = TILE.max(n.div_ceil(64));
        let mut c0 = 0;
        while c0 < n {
            let w = step.min(n - c0);
            tiles.push((0, c0, m, w));
            c0 += w;
        }
    } else {
        let step = TILE.max(m.div_ceil(64));
        let mut r0 = 0;
        while r0 < m {
            let h = step.min(m - r0);
            tiles.push((r0, 0, h, n));
            r0 += h;
        }
    }
    tiles.into_par_iter().for_each(|(r0, c0, rows, cols)| run(r0, c0, rows, cols));
}

/// Frobenius norm with scaling against overflow.
pub fn frobenius(a: MatRef<'_>) -> f64 {
    let mut scale = 0.0f64;
    let mut ssq = 1.0f64;
    for j in 0..a.cols {
        for &x in a.col(j) {
            if x != 0.0 {
                let ax = x.abs();
                if scale < ax {
                    ssq = 1.0 + ssq * (scale / ax).powi(2);
                    scale = ax;
                } else {
                    ssq += (ax / scale).powi(2);
                }
            }
        }
    }
    scale * ssq.sqrt()
}

/// Euclidean norm of a vector with the same scaling as [`frobenius`].
pub fn norm2(x: &[f64]) -> f64 {
    frobenius(MatRef::new(x, x.len(), 1, x.len().max(1)))
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Copies the strict lower triangle of the square view into its upper triangle.
pub fn mirror_lower(mut a: MatMut<'_>) {
    let n = a.rows;
    assert_eq!(n, a.cols);
    const B: usize = 64;
    let mut jb = 0;
    while jb < n {
        let je = (jb + B).min(n);
        let mut ib = jb;
        while ib < n {
            let ie = (ib + B).min(n);
            for j in jb..je {
                for i in ib.max(j + 1)..ie {
                    let v = a.get(i, j);
                    a.set(j, i, v);
                }
            }
            ib = ie;
        }
        jb = je;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat, ta: Op, b: &Mat, tb: Op) -> Mat {
        let ga = |i, l| {
            if ta == Op::N {
                a.get(i, l)
            } else {
                a.get(l, i)
            }
        };
        let gb = |l, j| {
            if tb == Op::N {
                b.get(l, j)
            } else {
                b.get(j, l)
            }
        };
        let (m, k) = if ta == Op::N { (a.rows(), a.cols()) } else { (a.cols(), a.rows()) };
        let n = if tb == Op::N { b.cols() } else { b.rows() };
        Mat::from_fn(m, n, |i, j| (0..k).map(|l| ga(i, l) * gb(l, j)).sum())
    }

    fn pseudo(rows: usize, cols: usize, salt: u64) -> Mat {
        Mat::from_fn(rows, cols, |i, j| {
            let h = (i as u64 * 7919 + j as u64 * 104_729 + salt * 13).wrapping_mul(2_654_435_761) % 1000;
            h as f64 / 500.0 - 1.0
        })
    }

    #[test]
    fn gemm_matches_triple_loop_for_all_transpositions() {
        for (ta, tb) in [(Op::N, Op::N), (Op::N, Op::T), (Op::T, Op::N), (Op::T, Op::T)] {
            let a = if ta == Op::N { pseudo(7, 5, 1) } else { pseudo(5, 7, 1) };
            let b = if tb == Op::N { pseudo(5, 3, 2) } else { pseudo(3, 5, 2) };
            let mut c = pseudo(7, 3, 3);
            let expect = {
                let p = naive(&a, ta, &b, tb);
                Mat::from_fn(7, 3, |i, j| 2.0 * p.get(i, j) + 0.5 * c.get(i, j))
            };
            gemm(2.0, a.as_ref(), ta, b.as_ref(), tb, 0.5, c.as_mut());
            assert!(c.sub(&expect).max_abs() < 1e-13);
        }
    }

    #[test]
    fn tiled_gemm_matches_naive() {
        let a = pseudo(300, 70, 4);
        let b = pseudo(70, 600, 5);
        let mut c = Mat::zeros(300, 600);
        gemm(1.0, a.as_ref(), Op::N, b.as_ref(), Op::N, 0.0, c.as_mut());
        assert!(c.sub(&naive(&a, Op::N, &b, Op::N)).max_abs() < 1e-12);
    }

    #[test]
    fn gemm_on_strided_subviews() {
        let big = pseudo(10, 10, 6);
        let mut out = Mat::zeros(10, 10);
        let a = big.as_ref().sub(2, 1, 4, 3);
        let b = big.as_ref().sub(5, 5, 3, 2);
        {
            let mut o = out.as_mut();
            let c = o.sub_mut(3, 4, 4, 2);
            gemm(1.0, a, Op::N, b, Op::N, 0.0, c);
        }
        let expect = naive(&a.to_mat(), Op::N, &b.to_mat(), Op::N);
        for i in 0..4 {
            for j in 0..2 {
                assert!((out.get(3 + i, 4 + j) - expect.get(i, j)).abs() < 1e-14);
            }
        }
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn zero_inner_dimension_scales_output() {
        let a = Mat::zeros(3, 0);
        let b = Mat::zeros(0, 2);
        let mut c = Mat::from_fn(3, 2, |_, _| 4.0);
        gemm(1.0, a.as_ref(), Op::N, b.as_ref(), Op::N, 0.5, c.as_mut());
        assert!(c.data().iter().all(|&x| x == 2.0));
    }

    #[test]
    fn mirror_lower_symmetrizes() {
        let mut m = pseudo(130, 130, 7);
        mirror_lower(m.as_mut());
        for i in 0..130 {
            for j in 0..130 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }

    #[test]
    fn frobenius_is_scaled() {
        let big = Mat::from_fn(2, 2, |_, _| 1e200);
        assert!((big.frobenius_norm() - 2e200).abs() / 2e200 < 1e-15);
        assert_eq!(Mat::zeros(3, 3).frobenius_norm(), 0.0);
    }
}
