//! Storage formats shared by every stage: dense symmetric input, packed band,
//! tridiagonal output, and the accumulated orthogonal factor.
//!
//! Random inputs come from [`make_symmetric`], which draws from ChaCha8
//! (`rand_chacha::ChaCha8Rng`) seeded with `seed_from_u64(seed)`. Independent
//! streams of the same seed are selected with `set_stream`; stream 0 is reserved
//! for matrix entries. The generator, its seeding, and the fill order (lower
//! triangle, column by column) are part of the output contract: the same
//! `(n, seed, dist)` always produces the same bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dense::{self, gemm, Mat, MatRef, Op};
use crate::error::{shape_err, Error, Result};

/// Entry distribution for generated test matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Distribution {
    /// Independent entries uniform on `[-1, 1)`.
    Uniform,
    /// Independent standard normal entries.
    Gaussian,
    /// The Wilkinson matrix `W_n^+` (`|i - (n-1)/2|` on the diagonal, ones beside it)
    /// stored densely.
    Wilkinson,
}

impl std::str::FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "gaussian" => Ok(Distribution::Gaussian),
            "wilkinson" => Ok(Distribution::Wilkinson),
            other => Err(Error::InvalidConfig(format!("unknown distribution `{other}`"))),
        }
    }
}

/// ChaCha8 generator for `seed`, positioned on `stream`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dense `n x n` symmetric matrix, column-major, both triangles stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension(n));
        }
        Ok(SymmetricMatrix { n, data: vec![0.0; n * n] })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut a = Self::zeros(n)?;
        for i in 0..n {
            a.data[i + i * n] = 1.0;
        }
        Ok(a)
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        let mut a = Self::zeros(d.len())?;
        let n = d.len();
        for (i, &x) in d.iter().enumerate() {
            a.data[i + i * n] = x;
        }
        Ok(a)
    }

    /// Builds the matrix from `f(i, j)` evaluated on the lower triangle (`i >= j`).
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut a = Self::zeros(n)?;
        for j in 0..n {
            for i in j..n {
                a.data[i + j * n] = f(i, j);
            }
        }
        a.symmetrize();
        Ok(a)
    }

    /// Wraps column-major data, keeping the lower triangle and mirroring it upward.
    pub fn from_col_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension(n));
        }
        if data.len() != n * n {
            return Err(Error::InvalidLength(format!("expected {} entries, got {}", n * n, data.len())));
        }
        let mut a = SymmetricMatrix { n, data };
        a.symmetrize();
        Ok(a)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.n]
    }

    /// Sets `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.data[i + j * n] = v;
        self.data[j + i * n] = v;
    }

    /// Copies the lower triangle over the upper one.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        dense::mirror_lower(dense::MatMut::new(&mut self.data, n, n, n));
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut m = 0.0f64;
        for j in 0..n {
            for i in j + 1..n {
                m = m.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        dense::frobenius(self.as_mat())
    }

    pub fn as_mat(&self) -> MatRef<'_> {
        MatRef::new(&self.data, self.n, self.n, self.n)
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_col_major(self.n, self.n, self.data.clone())
    }

    /// Largest `|i - j|` with a nonzero entry.
    pub fn true_bandwidth(&self) -> usize {
        let n = self.n;
        let mut bw = 0;
        for j in 0..n {
            for i in j + bw + 1..n {
                if self.get(i, j) != 0.0 {
                    bw = i - j;
                }
            }
        }
        bw
    }
}

/// Generates a deterministic symmetric test matrix.
pub fn make_symmetric(n: usize, seed: u64, dist: Distribution) -> Result<SymmetricMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension(n));
    }
    let mut rng = seeded_rng(seed, 0);
    match dist {
        Distribution::Uniform => SymmetricMatrix::from_lower_fn(n, |_, _| rng.random_range(-1.0..1.0)),
        Distribution::Gaussian => SymmetricMatrix::from_lower_fn(n, |_, _| rng.sample(StandardNormal)),
        Distribution::Wilkinson => Ok(wilkinson(n).to_symmetric()),
    }
}

/// Wilkinson's `W_n^+` as a tridiagonal matrix.
pub fn wilkinson(n: usize) -> TridiagonalMatrix {
    let mid = (n as f64 - 1.0) / 2.0;
    let d = (0..n).map(|i| (i as f64 - mid).abs()).collect();
    TridiagonalMatrix { d, e: vec![1.0; n.saturating_sub(1)] }
}

/// Random symmetric band matrix with exactly `b` stored subdiagonals.
pub fn make_band(n: usize, b: usize, seed: u64, dist: Distribution) -> Result<BandMatrix> {
    let mut band = BandMatrix::zeros(n, b)?;
    let mut rng = seeded_rng(seed, 0);
    let b = band.b;
    let w = wilkinson(n);
    for j in 0..n {
        for off in 0..=b.min(n - 1 - j) {
            let v = match dist {
                Distribution::Uniform => rng.random_range(-1.0..1.0),
                Distribution::Gaussian => rng.sample(StandardNormal),
                Distribution::Wilkinson => match off {
                    0 => w.d[j],
                    1 => w.e[j],
                    _ => 0.0,
                },
            };
            band.bands[off + j * (b + 1)] = v;
        }
    }
    Ok(band)
}

/// Symmetric band matrix in LAPACK lower packed layout: `(i, j)` with
/// `0 <= i - j <= b` lives at `bands[(i - j) + j * (b + 1)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    n: usize,
    b: usize,
    bands: Vec<f64>,
}

fn check_bandwidth(n: usize, b: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidDimension(n));
    }
    // n = 1 has no subdiagonal at all; it is admitted with b = 1 so that every
    // stage can pass a 1x1 problem through unchanged.
    if b == 0 || (b >= n && !(n == 1 && b == 1)) {
        return Err(Error::InvalidBandwidth { b, n });
    }
    Ok(())
}

impl BandMatrix {
    pub fn zeros(n: usize, b: usize) -> Result<Self> {
        check_bandwidth(n, b)?;
        Ok(BandMatrix { n, b, bands: vec![0.0; (b + 1) * n] })
    }

    /// Wraps packed data of length `(b + 1) * n`. Slots that fall outside the
    /// matrix (below row `n - 1`) are forced to zero.
    pub fn from_packed(n: usize, b: usize, mut bands: Vec<f64>) -> Result<Self> {
        check_bandwidth(n, b)?;
        if bands.len() != (b + 1) * n {
            return Err(Error::InvalidLength(format!(
                "packed band needs {} entries, got {}",
                (b + 1) * n,
                bands.len()
            )));
        }
        for j in 0..n {
            for off in (n - j).min(b + 1)..=b {
                bands[off + j * (b + 1)] = 0.0;
            }
        }
        Ok(BandMatrix { n, b, bands })
    }

    /// Keeps the entries of `a` within `b` of the diagonal and drops the rest.
    pub fn from_symmetric(a: &SymmetricMatrix, b: usize) -> Result<Self> {
        let mut band = Self::zeros(a.n, b)?;
        let n = a.n;
        for j in 0..n {
            for off in 0..=b.min(n - 1 - j) {
                band.bands[off + j * (b + 1)] = a.get(j + off, j);
            }
        }
        Ok(band)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    pub fn bands(&self) -> &[f64] {
        &self.bands
    }

    /// Symmetric access; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.b {
            0.0
        } else {
            self.bands[(i - j) + j * (self.b + 1)]
        }
    }

    /// Sets `(i, j)` (and by symmetry `(j, i)`). Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.b && i < self.n, "({i}, {j}) is outside the band");
        self.bands[(i - j) + j * (self.b + 1)] = v;
    }

    pub fn to_symmetric(&self) -> SymmetricMatrix {
        let n = self.n;
        let mut a = SymmetricMatrix { n, data: vec![0.0; n * n] };
        for j in 0..n {
            for off in 0..=self.b.min(n - 1 - j) {
                a.set(j + off, j, self.bands[off + j * (self.b + 1)]);
            }
        }
        a
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.n {
            for off in 0..=self.b.min(self.n - 1 - j) {
                let x = self.bands[off + j * (self.b + 1)];
                s += if off == 0 { x * x } else { 2.0 * x * x };
            }
        }
        s.sqrt()
    }

    /// Diagonal and first subdiagonal. Exact when `b == 1`.
    pub fn tridiagonal_part(&self) -> TridiagonalMatrix {
        let n = self.n;
        let d = (0..n).map(|j| self.bands[j * (self.b + 1)]).collect();
        let e = (0..n.saturating_sub(1)).map(|j| self.bands[1 + j * (self.b + 1)]).collect();
        TridiagonalMatrix { d, e }
    }

    /// Largest offset with a nonzero stored entry.
    pub fn true_bandwidth(&self) -> usize {
        let mut bw = 0;
        for j in 0..self.n {
            for off in (bw + 1)..=self.b.min(self.n - 1 - j) {
                if self.bands[off + j * (self.b + 1)] != 0.0 {
                    bw = off;
                }
            }
        }
        bw
    }
}

/// Symmetric tridiagonal matrix: diagonal `d` and subdiagonal `e`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalMatrix {
    pub(crate) d: Vec<f64>,
    pub(crate) e: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if e.len() + 1 != d.len() {
            return Err(Error::InvalidLength(format!("subdiagonal has {} entries, expected {}", e.len(), d.len() - 1)));
        }
        Ok(TridiagonalMatrix { d, e })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.d
    }

    pub fn subdiagonal(&self) -> &[f64] {
        &self.e
    }

    pub fn to_band(&self) -> BandMatrix {
        let n = self.n();
        let mut bands = vec![0.0; 2 * n];
        for j in 0..n {
            bands[2 * j] = self.d[j];
            if j + 1 < n {
                bands[1 + 2 * j] = self.e[j];
            }
        }
        BandMatrix { n, b: 1, bands }
    }

    pub fn from_band(b: &BandMatrix) -> Result<Self> {
        if b.bandwidth() != 1 {
            return Err(Error::InvalidBandwidth { b: b.bandwidth(), n: b.n() });
        }
        Ok(b.tridiagonal_part())
    }

    pub fn to_symmetric(&self) -> SymmetricMatrix {
        let n = self.n();
        let mut a = SymmetricMatrix { n, data: vec![0.0; n * n] };
        for i in 0..n {
            a.data[i + i * n] = self.d[i];
        }
        for (i, &x) in self.e.iter().enumerate() {
            a.set(i + 1, i, x);
        }
        a
    }

    pub fn frobenius_norm(&self) -> f64 {
        let s: f64 = self.d.iter().map(|x| x * x).sum::<f64>() + 2.0 * self.e.iter().map(|x| x * x).sum::<f64>();
        s.sqrt()
    }
}

/// Explicit orthogonal factor `Q` of a similarity `A = Q M Q^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalAccumulator {
    q: Mat,
}

impl OrthogonalAccumulator {
    pub fn identity(n: usize) -> Self {
        OrthogonalAccumulator { q: Mat::identity(n) }
    }

    pub fn from_mat(q: Mat) -> Result<Self> {
        if q.rows() != q.cols() {
            return shape_err(format!("Q must be square, got {}x{}", q.rows(), q.cols()));
        }
        Ok(OrthogonalAccumulator { q })
    }

    pub fn n(&self) -> usize {
        self.q.rows()
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn into_mat(self) -> Mat {
        self.q
    }

    /// `||Q^T Q - I||_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.n();
        let mut g = Mat::identity(n);
        gemm(1.0, self.q.as_ref(), Op::T, self.q.as_ref(), Op::N, -1.0, g.as_mut());
        g.frobenius_norm()
    }
}

/// `100 * n * eps`, the orthogonality budget every accumulated `Q` must meet.
pub fn tol_orth(n: usize) -> f64 {
    100.0 * n as f64 * f64::EPSILON
}

/// `||A - Q M Q^T||_F / ||A||_F` for a dense `M`. Falls back to the absolute
/// norm when `A` is zero.
pub fn similarity_residual_dense(a: &SymmetricMatrix, q: &OrthogonalAccumulator, m: MatRef<'_>) -> Result<f64> {
    let n = a.n();
    if q.n() != n || m.rows() != n || m.cols() != n {
        return shape_err(format!("A is {n}x{n}, Q is {0}x{0}, M is {1}x{2}", q.n(), m.rows(), m.cols()));
    }
    let mut qm = Mat::zeros(n, n);
    gemm(1.0, q.q.as_ref(), Op::N, m, Op::N, 0.0, qm.as_mut());
    let mut r = a.to_mat();
    gemm(-1.0, qm.as_ref(), Op::N, q.q.as_ref(), Op::T, 1.0, r.as_mut());
    let an = a.frobenius_norm();
    let rn = r.frobenius_norm();
    Ok(if an == 0.0 { rn } else { rn / an })
}

/// `||A - Q T Q^T||_F / ||A||_F`, by explicit dense multiplication.
pub fn similarity_residual(a: &SymmetricMatrix, q: &OrthogonalAccumulator, t: &TridiagonalMatrix) -> Result<f64> {
    if t.n() != a.n() {
        return shape_err(format!("T is {0}x{0} but A is {1}x{1}", t.n(), a.n()));
    }
    let tm = t.to_symmetric();
    similarity_residual_dense(a, q, tm.as_mat())
}

/// [`similarity_residual`] for a band intermediate.
pub fn band_similarity_residual(a: &SymmetricMatrix, q: &OrthogonalAccumulator, b: &BandMatrix) -> Result<f64> {
    if b.n() != a.n() {
        return shape_err(format!("B is {0}x{0} but A is {1}x{1}", b.n(), a.n()));
    }
    let bm = b.to_symmetric();
    similarity_residual_dense(a, q, bm.as_mat())
}

/// Sum of diagonal entries.
pub trait Trace {
    fn trace(&self) -> f64;
}

impl Trace for SymmetricMatrix {
    fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

impl Trace for TridiagonalMatrix {
    fn trace(&self) -> f64 {
        self.d.iter().sum()
    }
}

impl Trace for BandMatrix {
    fn trace(&self) -> f64 {
        (0..self.n).map(|j| self.bands[j * (self.b + 1)]).sum()
    }
}

pub fn trace<T: Trace + ?Sized>(m: &T) -> f64 {
    m.trace()
}
