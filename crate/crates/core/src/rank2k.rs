//! Symmetric rank-2k update `C <- beta * C + alpha * (A B^T + B A^T)` on the lower
//! triangle of `C`.
//!
//! [`syr2k_recursive`] splits the triangle into `nb`-sized diagonal blocks plus
//! off-diagonal rectangles whose side doubles every round:
//!
//! ```text
//! C11 = A1 B1^T + B1 A1^T
//! C21 = A2 B1^T + B2 A1^T
//! C22 = A2 B2^T + B2 A2^T
//! ```
//!
//! Applied recursively to `C11` and `C22`, every block of the same level is
//! independent, so each level becomes a single batch of GEMMs. The diagonal
//! blocks go first as one batch, then rounds with sides `nb, 2nb, 4nb, ...`.

use rayon::prelude::*;

use crate::dense::{MatMut, MatRef};
use crate::error::{shape_err, Error, Result};

/// One product `C[rows x cols] += alpha * A[rows x k] * B[cols x k]^T` inside a batch.
///
/// Offsets are linear indices into the column-major parents. With `lower` set
/// the block must be square and only its lower triangle (diagonal included) is
/// written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GemmBlock {
    pub a_offset: usize,
    pub b_offset: usize,
    pub c_offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub lower: bool,
}

/// A batch of independent block products sharing `k`, `alpha` and the parents'
/// leading dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct GemmBatchDescriptor {
    pub k: usize,
    pub alpha: f64,
    pub lda: usize,
    pub ldb: usize,
    pub ldc: usize,
    pub blocks: Vec<GemmBlock>,
}

#[derive(Clone, Copy)]
struct Rect {
    r0: usize,
    c0: usize,
    r1: usize,
    c1: usize,
}

fn desc_err<T>(msg: String) -> Result<T> {
    Err(Error::InvalidDescriptor(msg))
}

fn check_region(name: &str, off: usize, rows: usize, cols: usize, ld: usize, len: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Ok(());
    }
    if ld == 0 || off % ld + rows > ld {
        return desc_err(format!("{name} block at offset {off} with {rows} rows wraps past ld {ld}"));
    }
    let last = (cols - 1).checked_mul(ld).and_then(|x| x.checked_add(off + rows - 1));
    match last {
        Some(last) if last < len => Ok(()),
        _ => desc_err(format!("{name} block at offset {off} ({rows}x{cols}, ld {ld}) exceeds buffer of {len}")),
    }
}

impl GemmBatchDescriptor {
    /// Checks bounds and pairwise disjointness of the C blocks.
    pub fn validate(&self, a_len: usize, b_len: usize, c_len: usize) -> Result<()> {
        let mut rects = Vec::with_capacity(self.blocks.len());
        for (idx, blk) in self.blocks.iter().enumerate() {
            if blk.lower && blk.rows != blk.cols {
                return desc_err(format!("block {idx} is marked lower but is {}x{}", blk.rows, blk.cols));
            }
            check_region("A", blk.a_offset, blk.rows, self.k, self.lda, a_len)?;
            check_region("B", blk.b_offset, blk.cols, self.k, self.ldb, b_len)?;
            check_region("C", blk.c_offset, blk.rows, blk.cols, self.ldc, c_len)?;
            if blk.rows > 0 && blk.cols > 0 {
                let r0 = blk.c_offset % self.ldc;
                let c0 = blk.c_offset / self.ldc;
                rects.push(Rect { r0, c0, r1: r0 + blk.rows, c1: c0 + blk.cols });
            }
        }
        rects.sort_by_key(|r| (r.c0, r.r0));
        for (i, a) in rects.iter().enumerate() {
            for b in &rects[i + 1..] {
                if b.c0 >= a.c1 {
                    break;
                }
                if a.r0 < b.r1 && b.r0 < a.r1 {
                    return desc_err(format!(
                        "C blocks overlap: rows {}..{} cols {}..{} and rows {}..{} cols {}..{}",
                        a.r0, a.r1, a.c0, a.c1, b.r0, b.r1, b.c0, b.c1
                    ));
                }
            }
        }
        Ok(())
    }

    /// Flops of one execution of this batch.
    pub fn flops(&self) -> f64 {
        self.blocks.iter().map(|b| 2.0 * b.rows as f64 * b.cols as f64 * self.k as f64).sum()
    }
}

#[derive(Clone, Copy)]
struct SendPtr(*mut f64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

// Column chunk width for splitting large blocks across workers.
const CHUNK: usize = 128;
const SPLIT_WORK: usize = 1 << 20;

/// Executes every block of `desc`; blocks (and column chunks of large blocks)
/// run concurrently.
pub fn gemm_batched(desc: &GemmBatchDescriptor, a: &[f64], b: &[f64], c: &mut [f64]) -> Result<()> {
    desc.validate(a.len(), b.len(), c.len())?;
    let k = desc.k;
    if k == 0 || desc.alpha == 0.0 {
        return Ok(());
    }
    // (block, first column, end column)
    let mut items = Vec::new();
    for (idx, blk) in desc.blocks.iter().enumerate() {
        if blk.rows == 0 || blk.cols == 0 {
            continue;
        }
        if blk.rows * blk.cols * k < SPLIT_WORK || blk.cols <= CHUNK {
            items.push((idx, 0, blk.cols));
        } else {
            let mut j = 0;
            while j < blk.cols {
                let je = (j + CHUNK).min(blk.cols);
                items.push((idx, j, je));
                j = je;
            }
        }
    }
    let cptr = SendPtr(c.as_mut_ptr());
    let (lda, ldb, ldc, alpha) = (desc.lda, desc.ldb, desc.ldc, desc.alpha);
    let run = |&(idx, j0, j1): &(usize, usize, usize)| {
        let blk = &desc.blocks[idx];
        // Lower blocks only touch rows at or below the chunk's first column.
        let i0 = if blk.lower { j0 } else { 0 };
        let rows = blk.rows - i0;
        let cols = j1 - j0;
        let ap = a[blk.a_offset + i0..].as_ptr();
        let bp = b[blk.b_offset + j0..].as_ptr();
        let cp = cptr;
        // SAFETY: validate() proved every C block in bounds and pairwise
        // disjoint, and chunks of one block cover disjoint column ranges, so no
        // two items write the same element.
        unsafe {
            let cbase = cp.0.add(blk.c_offset + i0 + j0 * ldc);
            if blk.lower {
                let mut tmp = vec![0.0; rows * cols];
                matrixmultiply::dgemm(
                    rows,
                    k,
                    cols,
                    alpha,
                    ap,
                    1,
                    lda as isize,
                    bp,
                    ldb as isize,
                    1,
                    0.0,
                    tmp.as_mut_ptr(),
                    1,
                    rows as isize,
                );
                for jj in 0..cols {
                    for ii in jj..rows {
                        *cbase.add(ii + jj * ldc) += tmp[ii + jj * rows];
                    }
                }
            } else {
                matrixmultiply::dgemm(
                    rows,
                    k,
                    cols,
                    alpha,
                    ap,
                    1,
                    lda as isize,
                    bp,
                    ldb as isize,
                    1,
                    1.0,
                    cbase,
                    1,
                    ldc as isize,
                );
            }
        }
    };
    if items.len() == 1 {
        run(&items[0]);
    } else {
        items.par_iter().for_each(run);
    }
    Ok(())
}

fn check_syr2k_shapes(a: &MatRef<'_>, b: &MatRef<'_>, c: &MatMut<'_>) -> Result<()> {
    let n = c.rows();
    if c.cols() != n {
        return shape_err(format!("C must be square, got {}x{}", n, c.cols()));
    }
    if a.rows() != n || b.rows() != n || a.cols() != b.cols() {
        return shape_err(format!("A is {}x{}, B is {}x{}, C is {n}x{n}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    Ok(())
}

fn scale_lower(c: &mut MatMut<'_>, beta: f64) {
    if beta == 1.0 {
        return;
    }
    let n = c.rows();
    for j in 0..n {
        for x in &mut c.col_mut(j)[j..] {
            *x = if beta == 0.0 { 0.0 } else { beta * *x };
        }
    }
}

/// Reference triple loop. Only the lower triangle of `c` is read or written;
/// `beta == 0` discards the old contents.
pub fn syr2k_naive(a: MatRef<'_>, b: MatRef<'_>, mut c: MatMut<'_>, alpha: f64, beta: f64) -> Result<()> {
    check_syr2k_shapes(&a, &b, &c)?;
    let (n, k) = (c.rows(), a.cols());
    for j in 0..n {
        for i in j..n {
            let mut s = 0.0;
            for l in 0..k {
                s += a.get(i, l) * b.get(j, l) + b.get(i, l) * a.get(j, l);
            }
            let old = if beta == 0.0 { 0.0 } else { beta * c.get(i, j) };
            c.set(i, j, old + alpha * s);
        }
    }
    Ok(())
}

/// Batches for an `n x n` update with `nb`-sized diagonal blocks: the diagonal
/// batch first, then one batch per doubling round. Offsets assume `A` and `B`
/// start at row 0 of their views.
pub fn syr2k_plan(
    n: usize,
    k: usize,
    nb: usize,
    alpha: f64,
    lda: usize,
    ldb: usize,
    ldc: usize,
) -> Vec<GemmBatchDescriptor> {
    assert!(nb >= 1, "block size must be positive");
    let mut plan = Vec::new();
    if n == 0 {
        return plan;
    }
    let nblk = n.div_ceil(nb);
    let batch = |blocks| GemmBatchDescriptor { k, alpha, lda, ldb, ldc, blocks };
    let diag = (0..nblk)
        .map(|t| {
            let s = t * nb;
            let w = nb.min(n - s);
            GemmBlock { a_offset: s, b_offset: s, c_offset: s + s * ldc, rows: w, cols: w, lower: true }
        })
        .collect();
    plan.push(batch(diag));
    let mut i = 1;
    while i < nblk {
        let mut blocks = Vec::new();
        let mut m = 0;
        loop {
            let rb = (2 * m + 1) * i;
            if rb >= nblk {
                break;
            }
            let r0 = rb * nb;
            let r1 = ((2 * m + 2) * i * nb).min(n);
            let c0 = 2 * m * i * nb;
            let c1 = r0;
            blocks.push(GemmBlock {
                a_offset: r0,
                b_offset: c0,
                c_offset: r0 + c0 * ldc,
                rows: r1 - r0,
                cols: c1 - c0,
                lower: false,
            });
            m += 1;
        }
        plan.push(batch(blocks));
        i *= 2;
    }
    plan
}

/// Blocked rank-2k update built from [`gemm_batched`] calls; mathematically
/// identical to [`syr2k_naive`].
pub fn syr2k_recursive(
    a: MatRef<'_>,
    b: MatRef<'_>,
    mut c: MatMut<'_>,
    alpha: f64,
    beta: f64,
    nb: usize,
) -> Result<()> {
    check_syr2k_shapes(&a, &b, &c)?;
    if nb == 0 {
        return Err(Error::InvalidConfig("syr2k block size must be at least 1".into()));
    }
    scale_lower(&mut c, beta);
    let n = c.rows();
    let k = a.cols();
    if n == 0 || k == 0 || alpha == 0.0 {
        return Ok(());
    }
    let (lda, ldb, ldc) = (a.ld(), b.ld(), c.ld());
    let (ad, bd) = (a.data(), b.data());
    let cd = c.data_mut();
    for desc in syr2k_plan(n, k, nb, alpha, lda, ldb, ldc) {
        gemm_batched(&desc, ad, bd, cd)?;
        let swapped = GemmBatchDescriptor { lda: ldb, ldb: lda, ..desc };
        gemm_batched(&swapped, bd, ad, cd)?;
    }
    Ok(())
}

/// `2 n^2 k`, the flop count charged to one rank-2k update.
pub fn syr2k_flops(n: usize, k: usize) -> f64 {
    2.0 * (n as f64).powi(2) * k as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{gemm, Mat, Op};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = crate::matrix::seeded_rng(seed, 3);
        Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn lower_rel_diff(x: &Mat, y: &Mat) -> f64 {
        let n = x.rows();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for j in 0..n {
            for i in j..n {
                num += (x.get(i, j) - y.get(i, j)).powi(2);
                den += y.get(i, j).powi(2);
            }
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    #[test]
    fn naive_zero_a_scales_c() {
        let a = Mat::zeros(4, 2);
        let b = random_mat(4, 2, 1);
        let mut c = random_mat(4, 4, 2);
        let c0 = c.clone();
        syr2k_naive(a.as_ref(), b.as_ref(), c.as_mut(), 1.0, 0.5).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                let expect = if i >= j { 0.5 * c0.get(i, j) } else { c0.get(i, j) };
                assert_eq!(c.get(i, j), expect);
            }
        }
    }

    #[test]
    fn naive_scalar() {
        let a = Mat::from_col_major(1, 1, vec![3.0]);
        let b = Mat::from_col_major(1, 1, vec![-2.0]);
        let mut c = Mat::from_col_major(1, 1, vec![f64::NAN]);
        syr2k_naive(a.as_ref(), b.as_ref(), c.as_mut(), 1.0, 0.0).unwrap();
        assert_eq!(c.get(0, 0), -12.0);
    }

    #[test]
    fn naive_matches_dense_products() {
        let a = random_mat(3, 2, 3);
        let b = random_mat(3, 2, 4);
        let mut c = Mat::zeros(3, 3);
        syr2k_naive(a.as_ref(), b.as_ref(), c.as_mut(), 1.0, 0.0).unwrap();
        let dense =
            Mat::from_fn(3, 3, |i, j| (0..2).map(|l| a.get(i, l) * b.get(j, l) + b.get(i, l) * a.get(j, l)).sum());
        for j in 0..3 {
            for i in j..3 {
                assert_eq!(c.get(i, j), dense.get(i, j));
            }
            for i in 0..j {
                assert_eq!(c.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let a = Mat::zeros(4, 2);
        let b = Mat::zeros(4, 3);
        let mut c = Mat::zeros(4, 4);
        assert!(syr2k_naive(a.as_ref(), b.as_ref(), c.as_mut(), 1.0, 1.0).is_err());
        assert!(syr2k_recursive(a.as_ref(), a.as_ref(), c.as_mut(), 1.0, 1.0, 0).is_err());
        let mut wide = Mat::zeros(4, 5);
        assert!(syr2k_recursive(a.as_ref(), a.as_ref(), wide.as_mut(), 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn single_block_has_no_rounds() {
        let plan = syr2k_plan(64, 8, 64, 1.0, 64, 64, 64);
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].blocks.len(), 1);
        let a = random_mat(64, 8, 5);
        let b = random_mat(64, 8, 6);
        let mut c1 = random_mat(64, 64, 7);
        let mut c2 = c1.clone();
        syr2k_naive(a.as_ref(), b.as_ref(), c1.as_mut(), -1.0, 1.0).unwrap();
        syr2k_recursive(a.as_ref(), b.as_ref(), c2.as_mut(), -1.0, 1.0, 64).unwrap();
        assert!(lower_rel_diff(&c2, &c1) <= 1e-13);
    }

    #[test]
    fn four_blocks_use_sides_nb_then_two_nb() {
        let nb = 16;
        let plan = syr2k_plan(4 * nb, 4, nb, 1.0, 64, 64, 64);
        assert_eq!(plan.len(), 3);
        assert_eq!(plan[0].blocks.len(), 4);
        assert!(plan[1].blocks.iter().all(|b| b.rows == nb && b.cols == nb));
        assert_eq!(plan[1].blocks.len(), 2);
        assert_eq!(plan[2].blocks.len(), 1);
        assert_eq!((plan[2].blocks[0].rows, plan[2].blocks[0].cols), (2 * nb, 2 * nb));
    }

    /// Counts how often each element is written; the lower triangle must be hit
    /// exactly once and the strict upper triangle never.
    fn coverage(n: usize, nb: usize) -> Vec<u8> {
        let mut hits = vec![0u8; n * n];
        for desc in syr2k_plan(n, 1, nb, 1.0, n, n, n) {
            for blk in &desc.blocks {
                let (r0, c0) = (blk.c_offset % n, blk.c_offset / n);
                for j in 0..blk.cols {
                    for i in 0..blk.rows {
                        if !blk.lower || i >= j {
                            hits[(r0 + i) + (c0 + j) * n] += 1;
                        }
                    }
                }
            }
        }
        hits
    }

    #[test]
    fn coverage_is_exactly_the_lower_triangle() {
        for n in (1..=64).chain([97, 128, 200, 255, 256, 257]) {
            for nb in 1..=n.min(70) {
                let hits = coverage(n, nb);
                for j in 0..n {
                    for i in 0..n {
                        let expect = u8::from(i >= j);
                        assert_eq!(hits[i + j * n], expect, "n={n} nb={nb} at ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn plans_validate() {
        for (n, nb) in [(10, 3), (64, 8), (100, 7), (512, 64)] {
            for desc in syr2k_plan(n, 4, nb, 1.0, n, n, n) {
                desc.validate(n * 4, n * 4, n * n).unwrap();
            }
        }
    }

    #[test]
    fn recursive_matches_naive_256() {
        let (n, k, nb) = (256, 32, 64);
        let a = random_mat(n, k, 8);
        let b = random_mat(n, k, 9);
        let mut c1 = random_mat(n, n, 10);
        let mut c2 = c1.clone();
        syr2k_naive(a.as_ref(), b.as_ref(), c1.as_mut(), -1.0, 1.0).unwrap();
        syr2k_recursive(a.as_ref(), b.as_ref(), c2.as_mut(), -1.0, 1.0, nb).unwrap();
        assert!(lower_rel_diff(&c2, &c1) <= 1e-13);
        // strict upper triangle untouched
        let c0 = random_mat(n, n, 10);
        for j in 0..n {
            for i in 0..j {
                assert_eq!(c2.get(i, j), c0.get(i, j));
            }
        }
    }

    #[test]
    fn recursive_on_strided_views() {
        let big_a = random_mat(40, 10, 11);
        let big_b = random_mat(40, 10, 12);
        let mut big_c1 = random_mat(50, 50, 13);
        let mut big_c2 = big_c1.clone();
        let (a, b) = (big_a.as_ref().sub(5, 2, 30, 6), big_b.as_ref().sub(7, 1, 30, 6));
        syr2k_naive(a, b, big_c1.as_mut().into_sub(3, 9, 30, 30), 2.0, -1.0).unwrap();
        syr2k_recursive(a, b, big_c2.as_mut().into_sub(3, 9, 30, 30), 2.0, -1.0, 7).unwrap();
        assert!(big_c1.sub(&big_c2).max_abs() <= 1e-13);
    }

    #[test]
    fn gemm_batched_empty_is_noop() {
        let desc = GemmBatchDescriptor { k: 2, alpha: 1.0, lda: 4, ldb: 4, ldc: 4, blocks: vec![] };
        let a = vec![1.0; 8];
        let mut c = vec![3.0; 16];
        gemm_batched(&desc, &a, &a, &mut c).unwrap();
        assert!(c.iter().all(|&x| x == 3.0));
    }

    #[test]
    fn gemm_batched_single_block_is_dense_gemm() {
        let a = random_mat(300, 40, 14);
        let b = random_mat(260, 40, 15);
        let mut c1 = random_mat(300, 260, 16);
        let mut c2 = c1.clone();
        let desc = GemmBatchDescriptor {
            k: 40,
            alpha: 0.5,
            lda: 300,
            ldb: 260,
            ldc: 300,
            blocks: vec![GemmBlock { a_offset: 0, b_offset: 0, c_offset: 0, rows: 300, cols: 260, lower: false }],
        };
        gemm_batched(&desc, a.data(), b.data(), c1.data_mut()).unwrap();
        gemm(0.5, a.as_ref(), Op::N, b.as_ref(), Op::T, 1.0, c2.as_mut());
        assert!(c1.sub(&c2).max_abs() <= 1e-13);
    }

    #[test]
    fn gemm_batched_diagonal_blocks_match_masked_dense() {
        let (n, nb, k) = (8, 2, 3);
        let a = random_mat(n, k, 17);
        let b = random_mat(n, k, 18);
        let blocks = (0..4)
            .map(|t| GemmBlock {
                a_offset: t * nb,
                b_offset: t * nb,
                c_offset: t * nb * (1 + n),
                rows: nb,
                cols: nb,
                lower: false,
            })
            .collect();
        let desc = GemmBatchDescriptor { k, alpha: 1.0, lda: n, ldb: n, ldc: n, blocks };
        let mut c = Mat::zeros(n, n);
        gemm_batched(&desc, a.data(), b.data(), c.data_mut()).unwrap();
        let full = a.matmul(&b.transpose());
        for j in 0..n {
            for i in 0..n {
                let expect = if i / nb == j / nb { full.get(i, j) } else { 0.0 };
                assert!((c.get(i, j) - expect).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn invalid_descriptors_are_rejected() {
        let base = GemmBatchDescriptor { k: 2, alpha: 1.0, lda: 4, ldb: 4, ldc: 4, blocks: vec![] };
        let blk = GemmBlock { a_offset: 0, b_offset: 0, c_offset: 0, rows: 2, cols: 2, lower: false };
        let a = vec![0.0; 8];
        let mut c = vec![0.0; 16];
        let out_of_range = GemmBatchDescriptor { blocks: vec![GemmBlock { a_offset: 7, ..blk }], ..base.clone() };
        assert!(matches!(gemm_batched(&out_of_range, &a, &a, &mut c), Err(Error::InvalidDescriptor(_))));
        let wraps = GemmBatchDescriptor { blocks: vec![GemmBlock { c_offset: 3, ..blk }], ..base.clone() };
        assert!(gemm_batched(&wraps, &a, &a, &mut c).is_err());
        let overlap = GemmBatchDescriptor { blocks: vec![blk, GemmBlock { c_offset: 5, ..blk }], ..base.clone() };
        assert!(gemm_batched(&overlap, &a, &a, &mut c).is_err());
        let lower_rect = GemmBatchDescriptor { blocks: vec![GemmBlock { cols: 1, lower: true, ..blk }], ..base };
        assert!(gemm_batched(&lower_rect, &a, &a, &mut c).is_err());
    }

    /// One level of the split, assembled by hand, equals the unsplit product.
    #[test]
    fn one_level_split_identity() {
        for (n, k, h) in [(16, 3, 8), (64, 5, 20), (33, 4, 17)] {
            let a = random_mat(n, k, 19);
            let b = random_mat(n, k, 20);
            let full = a.matmul(&b.transpose());
            let full = Mat::from_fn(n, n, |i, j| full.get(i, j) + full.get(j, i));
            let (a1, a2) = (a.as_ref().sub(0, 0, h, k).to_mat(), a.as_ref().sub(h, 0, n - h, k).to_mat());
            let (b1, b2) = (b.as_ref().sub(0, 0, h, k).to_mat(), b.as_ref().sub(h, 0, n - h, k).to_mat());
            let c11 = a1.matmul(&b1.transpose());
            let c21 = a2.matmul(&b1.transpose());
            let c21b = b2.matmul(&a1.transpose());
            let c22 = a2.matmul(&b2.transpose());
            let mut asm = Mat::zeros(n, n);
            for j in 0..n {
                for i in j..n {
                    let v = match (i < h, j < h) {
                        (true, true) => c11.get(i, j) + c11.get(j, i),
                        (false, true) => c21.get(i - h, j) + c21b.get(i - h, j),
                        _ => c22.get(i - h, j - h) + c22.get(j - h, i - h),
                    };
                    asm.set(i, j, v);
                }
            }
            assert!(lower_rel_diff(&asm, &full) <= 1e-14);
        }
    }

    #[test]
    fn flop_model() {
        assert_eq!(syr2k_flops(10, 3), 600.0);
        let total: f64 = syr2k_plan(64, 4, 8, 1.0, 64, 64, 64).iter().map(|d| d.flops()).sum();
        // diagonal blocks compute full squares, so the batches do slightly more
        // than half of the dense 2 n^2 k per orientation
        assert!(total >= syr2k_flops(64, 4) / 2.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn recursive_equals_naive(n in 1usize..90, k in 0usize..12, nb in 1usize..40, seed in any::<u64>(),
                                  alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let a = random_mat(n, k, seed);
            let b = random_mat(n, k, seed ^ 1);
            let mut c1 = random_mat(n, n, seed ^ 2);
            let mut c2 = c1.clone();
            syr2k_naive(a.as_ref(), b.as_ref(), c1.as_mut(), alpha, beta).unwrap();
            syr2k_recursive(a.as_ref(), b.as_ref(), c2.as_mut(), alpha, beta, nb).unwrap();
            prop_assert!(lower_rel_diff(&c2, &c1) <= 1e-13);
        }
    }
}
