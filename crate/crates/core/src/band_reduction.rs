//! Stage one: dense symmetric to band form.
//!
//! [`dbr`] walks the matrix in blocks of `nb` columns. Inside a block it
//! factors panels of width `b`, each one against a copy of the block that
//! receives only the updates it needs, and collects the rank-2 factors `Y`,
//! `Z` of every panel. The trailing matrix right of the block is touched
//! once per block by a single rank-2k update with inner dimension `nb`.
//! With `nb == b` this is the classical one-panel-per-update band reduction
//! ([`sbr`]).
//!
//! [`tridiag_direct`] is the one-stage reference: a blocked Householder
//! tridiagonalization whose cost is dominated by matrix-vector products.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::dense::{axpy, dot, gemm, mirror_lower, Mat, MatMut, MatRef, Op};
use crate::error::{Error, Result};
use crate::householder::{house_into, panel_qr};
use crate::matrix::{BandMatrix, OrthogonalAccumulator, SymmetricMatrix, TridiagonalMatrix};
use crate::rank2k::syr2k_recursive;

// Diagonal block size handed to the trailing rank-2k update.
const SYR2K_NB: usize = 128;
// Panel width of the one-stage reference.
const DIRECT_NB: usize = 32;

/// Parameters of [`dbr`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DbrConfig {
    /// Target bandwidth.
    pub b: usize,
    /// Columns per trailing update, a multiple of `b`.
    pub nb: usize,
    /// Build the explicit orthogonal factor.
    pub accumulate_q: bool,
    /// Update panels one source panel at a time instead of merging sources
    /// recursively.
    pub flat_panel_updates: bool,
}

impl DbrConfig {
    pub fn new(b: usize, nb: usize) -> Self {
        DbrConfig { b, nb, accumulate_q: false, flat_panel_updates: false }
    }

    pub fn with_q(mut self, on: bool) -> Self {
        self.accumulate_q = on;
        self
    }

    pub fn with_flat_panel_updates(mut self, on: bool) -> Self {
        self.flat_panel_updates = on;
        self
    }

    /// Requires `1 <= b <= nb < n` and `nb % b == 0`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let DbrConfig { b, nb, .. } = *self;
        if b == 0 || b > nb || nb >= n {
            return Err(Error::InvalidConfig(format!("need 1 <= b <= nb < n, got b = {b}, nb = {nb}, n = {n}")));
        }
        if nb % b != 0 {
            return Err(Error::InvalidConfig(format!("block size {nb} is not a multiple of bandwidth {b}")));
        }
        Ok(())
    }
}

/// One intra-block update: the panels in `sources` (already factored) are
/// applied to the block-relative columns `target_cols`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanelUpdate {
    pub sources: Range<usize>,
    pub target_cols: Range<usize>,
    /// Inner dimension `|sources| * b`.
    pub k: usize,
}

/// Ordered intra-block updates for panels of width `b` inside a block of `nb`
/// columns. Executing the tasks in order, factoring each source panel right
/// before its first use, brings every panel up to date before it is factored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanelUpdateSchedule {
    pub b: usize,
    pub nb: usize,
    pub tasks: Vec<PanelUpdate>,
}

impl PanelUpdateSchedule {
    pub fn panels(&self) -> usize {
        self.nb.checked_div(self.b).unwrap_or(0)
    }

    /// Number of tasks per inner dimension.
    pub fn k_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for t in &self.tasks {
            *h.entry(t.k).or_insert(0) += 1;
        }
        h
    }
}

/// Binary merge schedule: after the left half of a range of panels is done,
/// it is applied to the right half in one update, so inner dimensions double
/// at each level (`b, 2b, 4b, ...`).
pub fn recursive_panel_schedule(b: usize, nb: usize) -> PanelUpdateSchedule {
    fn rec(lo: usize, hi: usize, b: usize, out: &mut Vec<PanelUpdate>) {
        if hi - lo <= 1 {
            return;
        }
        let mid = lo + (hi - lo).div_ceil(2);
        rec(lo, mid, b, out);
        out.push(PanelUpdate { sources: lo..mid, target_cols: mid * b..hi * b, k: (mid - lo) * b });
        rec(mid, hi, b, out);
    }
    let mut tasks = Vec::new();
    if let Some(t) = nb.checked_div(b) {
        rec(0, t, b, &mut tasks);
    }
    PanelUpdateSchedule { b, nb, tasks }
}

/// Every panel applied on its own to all panels after it (`k = b` throughout).
pub fn flat_panel_schedule(b: usize, nb: usize) -> PanelUpdateSchedule {
    let t = nb.checked_div(b).unwrap_or(0);
    let tasks = (1..t).map(|i| PanelUpdate { sources: i - 1..i, target_cols: i * b..t * b, k: b }).collect();
    PanelUpdateSchedule { b, nb, tasks }
}

/// Work counters of one reduction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReductionStats {
    /// Floating-point operations spent on the reduction itself (Q excluded).
    pub flops: f64,
    pub panels: usize,
    pub trailing_updates: usize,
}

/// Dense to band with bandwidth `cfg.b`: `A = Q B Q^T`.
pub fn dbr(a: &SymmetricMatrix, cfg: &DbrConfig) -> Result<(BandMatrix, Option<OrthogonalAccumulator>)> {
    let (band, q, _) = dbr_with_stats(a, cfg)?;
    Ok((band, q))
}

/// [`dbr`] with `nb = b`.
pub fn sbr(a: &SymmetricMatrix, b: usize, accumulate_q: bool) -> Result<(BandMatrix, Option<OrthogonalAccumulator>)> {
    dbr(a, &DbrConfig::new(b, b).with_q(accumulate_q))
}

fn dense_to_band(a: &Mat, b: usize) -> Result<BandMatrix> {
    let n = a.rows();
    let mut packed = vec![0.0; (b + 1) * n];
    for j in 0..n {
        for off in 0..=b.min(n - 1 - j) {
            packed[off + j * (b + 1)] = a.get(j + off, j);
        }
    }
    BandMatrix::from_packed(n, b, packed)
}

struct BlockState {
    s: usize,
    e: usize,
    /// First row of the accumulated factors, `s + b`.
    g0: usize,
    /// Copy of the block columns, rows `s..n`.
    p: Mat,
    y: Mat,
    z: Mat,
    /// Compound `W` of the block (only with Q accumulation).
    wt: Option<Mat>,
    /// Accumulated columns used so far.
    kc: usize,
    /// Column range in `y`/`z` per panel slot; `None` until factored.
    slots: Vec<Option<Range<usize>>>,
}

/// [`dbr`] that also reports work counters.
pub fn dbr_with_stats(
    a: &SymmetricMatrix,
    cfg: &DbrConfig,
) -> Result<(BandMatrix, Option<OrthogonalAccumulator>, ReductionStats)> {
    let n = a.n();
    let mut stats = ReductionStats::default();
    if n < 3 {
        let b = cfg.b.clamp(1, (n - 1).max(1));
        let q = cfg.accumulate_q.then(|| OrthogonalAccumulator::identity(n));
        return Ok((dense_to_band(&a.to_mat(), b)?, q, stats));
    }
    cfg.validate(n)?;
    let DbrConfig { b, nb, .. } = *cfg;
    let schedule = if cfg.flat_panel_updates { flat_panel_schedule(b, nb) } else { recursive_panel_schedule(b, nb) };
    let mut st = a.to_mat();
    let mut q = cfg.accumulate_q.then(|| Mat::identity(n));

    let mut s = 0;
    // The block at `s` has work only if its first panel has at least two rows.
    while s + b + 2 <= n {
        let e = (s + nb).min(n);
        let g0 = s + b;
        let g = n - g0;
        let slots = nb / b;
        let mut blk = BlockState {
            s,
            e,
            g0,
            p: st.as_ref().sub(s, s, n - s, e - s).to_mat(),
            y: Mat::zeros(g, nb),
            z: Mat::zeros(g, nb),
            wt: q.as_ref().map(|_| Mat::zeros(g, nb)),
            kc: 0,
            slots: vec![None; slots],
        };
        for task in &schedule.tasks {
            for t in task.sources.clone() {
                factor_slot(&st, &mut blk, t, b, &mut stats);
            }
            apply_panel_update(&mut blk, task, &mut stats);
        }
        for t in 0..slots {
            factor_slot(&st, &mut blk, t, b, &mut stats);
        }

        // Block columns are final: write their lower part back.
        for c in s..e {
            let src = &blk.p.col(c - s)[c - s..];
            st.col_mut(c)[c..].copy_from_slice(src);
        }
        let kc = blk.kc;
        if e < n && kc > 0 {
            let nl = n - e;
            let off = e - g0;
            let zl = blk.z.as_ref().sub(off, 0, nl, kc);
            let yl = blk.y.as_ref().sub(off, 0, nl, kc);
            let mut stm = st.as_mut();
            syr2k_recursive(zl, yl, stm.sub_mut(e, e, nl, nl), -1.0, 1.0, SYR2K_NB)?;
            mirror_lower(stm.sub_mut(e, e, nl, nl));
            stats.flops += 2.0 * (nl * nl * kc) as f64;
            stats.trailing_updates += 1;
        }
        if let (Some(q), Some(wt)) = (q.as_mut(), blk.wt.as_ref()) {
            if kc > 0 {
                apply_block_to_q(q, g0, wt.as_ref().sub(0, 0, g, kc), blk.y.as_ref().sub(0, 0, g, kc));
            }
        }
        s += nb;
    }
    let band = dense_to_band(&st, b)?;
    let q = q.map(OrthogonalAccumulator::from_mat).transpose()?;
    Ok((band, q, stats))
}

/// `Q[:, g0..] -= (Q[:, g0..] W) Y^T`.
fn apply_block_to_q(q: &mut Mat, g0: usize, w: MatRef<'_>, y: MatRef<'_>) {
    let n = q.rows();
    let g = n - g0;
    let k = w.cols();
    let mut tmp = Mat::zeros(n, k);
    gemm(1.0, q.as_ref().sub(0, g0, n, g), Op::N, w, Op::N, 0.0, tmp.as_mut());
    gemm(-1.0, tmp.as_ref(), Op::N, y, Op::T, 1.0, q.as_mut().into_sub(0, g0, n, g));
}

/// Factors panel slot `t` of the current block if it has not been factored and
/// has something to eliminate.
fn factor_slot(st: &Mat, blk: &mut BlockState, t: usize, b: usize, stats: &mut ReductionStats) {
    if blk.slots[t].is_some() {
        return;
    }
    let n = st.rows();
    let (s, g0) = (blk.s, blk.g0);
    let j = s + t * b;
    if j >= blk.e || j + b + 2 > n {
        blk.slots[t] = Some(blk.kc..blk.kc);
        return;
    }
    let m = n - j - b;
    // Slot width inside the block, and how many of its columns fit a QR.
    let pw = b.min(blk.e - j);
    let p = pw.min(m);
    let g = n - g0;
    let o = j - s;
    let f = panel_qr(blk.p.as_ref().sub(j + b - s, j - s, m, p)).expect("panel shape is valid by construction");
    stats.flops += 4.0 * (m * p * p) as f64;
    stats.panels += 1;
    for c in 0..p {
        let col = &mut blk.p.col_mut(j - s + c)[j + b - s..];
        for (i, x) in col.iter_mut().enumerate() {
            *x = if i <= c { f.r.get(i, c) } else { 0.0 };
        }
    }
    if pw > p {
        // Columns of the slot past the last reflector only see Q^T from the left.
        let mut rest = blk.p.as_mut().into_sub(j + b - s, j + p - s, m, pw - p);
        let mut wtx = Mat::zeros(p, pw - p);
        gemm(1.0, f.w.as_ref(), Op::T, rest.rb(), Op::N, 0.0, wtx.as_mut());
        gemm(-1.0, f.y.as_ref(), Op::N, wtx.as_ref(), Op::N, 1.0, rest.rb_mut());
    }

    let kc = blk.kc;
    // Only rows from j + b down are ever read back from Z_t, so
    // A_t W = A0 W - Z_<t (Y_<t^T W) - Y_<t (Z_<t^T W) is formed on those rows.
    let mut aw = Mat::zeros(m, p);
    gemm(1.0, st.as_ref().sub(j + b, j + b, m, m), Op::N, f.w.as_ref(), Op::N, 0.0, aw.as_mut());
    stats.flops += 2.0 * (m * m * p) as f64;
    let mut m1 = Mat::zeros(kc, p);
    if kc > 0 {
        let mut m2 = Mat::zeros(kc, p);
        let yo = blk.y.as_ref().sub(o, 0, m, kc);
        let zo = blk.z.as_ref().sub(o, 0, m, kc);
        gemm(1.0, yo, Op::T, f.w.as_ref(), Op::N, 0.0, m1.as_mut());
        gemm(1.0, zo, Op::T, f.w.as_ref(), Op::N, 0.0, m2.as_mut());
        gemm(-1.0, zo, Op::N, m1.as_ref(), Op::N, 1.0, aw.as_mut());
        gemm(-1.0, yo, Op::N, m2.as_ref(), Op::N, 1.0, aw.as_mut());
        stats.flops += 8.0 * (m * kc * p) as f64;
    }
    // Z_t = A_t W - 1/2 Y_t (W^T A_t W)
    let mut wtaw = Mat::zeros(p, p);
    gemm(1.0, f.w.as_ref(), Op::T, aw.as_ref(), Op::N, 0.0, wtaw.as_mut());
    gemm(-0.5, f.y.as_ref(), Op::N, wtaw.as_ref(), Op::N, 1.0, aw.as_mut());
    stats.flops += 4.0 * (m * p * p) as f64;

    blk.z.as_mut().into_sub(o, kc, m, p).copy_from(aw.as_ref());
    blk.y.as_mut().into_sub(o, kc, m, p).copy_from(f.y.as_ref());
    if let Some(wt) = blk.wt.as_mut() {
        // W~_t = W_t - W~_<t (Y_<t^T W_t)
        wt.as_mut().into_sub(o, kc, m, p).copy_from(f.w.as_ref());
        if kc > 0 {
            let (done, mut fresh) = split_cols(wt, kc);
            gemm(-1.0, done, Op::N, m1.as_ref(), Op::N, 1.0, fresh.sub_mut(0, 0, g, p));
        }
    }
    blk.slots[t] = Some(kc..kc + p);
    blk.kc = kc + p;
}

fn split_cols(m: &mut Mat, k: usize) -> (MatRef<'_>, MatMut<'_>) {
    let rows = m.rows();
    let cols = m.cols();
    let (left, right) = m.data_mut().split_at_mut(k * rows);
    (MatRef::new(left, rows, k, rows.max(1)), MatMut::new(right, rows, cols - k, rows.max(1)))
}

/// Applies the rank-2 factors of `task.sources` to the block copy.
fn apply_panel_update(blk: &mut BlockState, task: &PanelUpdate, stats: &mut ReductionStats) {
    let n = blk.p.rows() + blk.s;
    let (s, g0) = (blk.s, blk.g0);
    let first = blk.slots[task.sources.start].clone().expect("source factored");
    let last = blk.slots[task.sources.end - 1].clone().expect("source factored");
    let src = first.start..last.end;
    if src.is_empty() {
        return;
    }
    let c0 = s + task.target_cols.start;
    let c1 = (s + task.target_cols.end).min(blk.e);
    if c0 >= c1 || c0 < g0 {
        debug_assert!(c0 >= c1, "targets must lie right of the first panel");
        return;
    }
    let k = src.len();
    let rows = n - c0;
    let cols = c1 - c0;
    let (ri, ci) = (c0 - g0, c0 - g0);
    let zr = blk.z.as_ref().sub(ri, src.start, rows, k);
    let yr = blk.y.as_ref().sub(ri, src.start, rows, k);
    let zc = blk.z.as_ref().sub(ci, src.start, cols, k);
    let yc = blk.y.as_ref().sub(ci, src.start, cols, k);
    let mut target = blk.p.as_mut().into_sub(c0 - s, c0 - s, rows, cols);
    gemm(-1.0, zr, Op::N, yc, Op::T, 1.0, target.rb_mut());
    gemm(-1.0, yr, Op::N, zc, Op::T, 1.0, target.rb_mut());
    stats.flops += 4.0 * (rows * cols * k) as f64;
}

/// One-stage blocked Householder tridiagonalization, `A = Q T Q^T`.
pub fn tridiag_direct(
    a: &SymmetricMatrix,
    accumulate_q: bool,
) -> Result<(TridiagonalMatrix, Option<OrthogonalAccumulator>)> {
    let (t, q, _) = tridiag_direct_with_stats(a, accumulate_q)?;
    Ok((t, q))
}

/// [`tridiag_direct`] that also reports work counters.
pub fn tridiag_direct_with_stats(
    a: &SymmetricMatrix,
    accumulate_q: bool,
) -> Result<(TridiagonalMatrix, Option<OrthogonalAccumulator>, ReductionStats)> {
    let n = a.n();
    let mut stats = ReductionStats::default();
    let mut st = a.to_mat();
    let mut q = accumulate_q.then(|| Mat::identity(n));
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut s = 0;
    while s < n {
        let bend = (s + DIRECT_NB).min(n);
        let g0 = s + 1;
        let g = n - g0.min(n);
        let width = bend - s;
        let mut v = Mat::zeros(g, width);
        let mut w = Mat::zeros(g, width);
        let mut wt = q.as_ref().map(|_| Mat::zeros(g, width));
        let mut used = 0;
        let mut x = vec![0.0; g];
        let mut hv = vec![0.0; g];
        for c in s..bend {
            let t = c - s;
            // Diagonal entry and the column below it under the pending updates.
            let mut dc = st.get(c, c);
            if t > 0 {
                let r = c - g0;
                for l in 0..t {
                    dc -= 2.0 * v.get(r, l) * w.get(r, l);
                }
            }
            d[c] = dc;
            if c + 1 >= n {
                break;
            }
            let m = n - c - 1;
            let o = c + 1 - g0;
            let xs = &mut x[..m];
            xs.copy_from_slice(&st.col(c)[c + 1..]);
            if t > 0 {
                let r = c - g0;
                for l in 0..t {
                    let (wv, vv) = (w.get(r, l), v.get(r, l));
                    for (i, xi) in xs.iter_mut().enumerate() {
                        *xi -= v.get(o + i, l) * wv + w.get(o + i, l) * vv;
                    }
                }
            }
            let hs = &mut hv[..m];
            let (beta, alpha) = house_into(xs, hs);
            e[c] = alpha;
            if beta == 0.0 || c + 2 >= n {
                continue;
            }
            stats.panels += 1;
            v.col_mut(t)[o..].copy_from_slice(hs);
            // p = A_t v on rows c + 1.., one gemv plus the pending corrections.
            let mut pcol = vec![0.0; m];
            gemm(
                1.0,
                st.as_ref().sub(c + 1, c + 1, m, m),
                Op::N,
                MatRef::new(hs, m, 1, m),
                Op::N,
                0.0,
                MatMut::new(&mut pcol, m, 1, m),
            );
            stats.flops += 2.0 * (m * m) as f64;
            let mut vtv = vec![0.0; t];
            for l in 0..t {
                let wtv = dot(&w.col(l)[o..], hs);
                vtv[l] = dot(&v.col(l)[o..], hs);
                axpy(-wtv, &v.col(l)[o..], &mut pcol);
                axpy(-vtv[l], &w.col(l)[o..], &mut pcol);
            }
            stats.flops += 8.0 * (m * t) as f64;
            // w = beta p - 1/2 beta^2 (p^T v) v
            let pv = dot(&pcol, hs);
            let wc = &mut w.col_mut(t)[o..];
            for (wi, pi) in wc.iter_mut().zip(&pcol) {
                *wi = beta * pi;
            }
            axpy(-0.5 * beta * beta * pv, hs, wc);
            stats.flops += 4.0 * m as f64;
            if let Some(wt) = wt.as_mut() {
                // W~_t = beta v - W~_<t (V_<t^T beta v)
                let (done, mut fresh) = split_cols(wt, t);
                let col = fresh.col_mut(0);
                for (ci, hi) in col[o..].iter_mut().zip(hs.iter()) {
                    *ci = beta * hi;
                }
                for l in 0..t {
                    axpy(-beta * vtv[l], done.col(l), col);
                }
            }
            used = t + 1;
        }
        let bend_rows = bend.min(n);
        if used > 0 && bend_rows < n {
            let nl = n - bend_rows;
            let off = bend_rows - g0;
            let vl = v.as_ref().sub(off, 0, nl, used);
            let wl = w.as_ref().sub(off, 0, nl, used);
            let mut stm = st.as_mut();
            syr2k_recursive(vl, wl, stm.sub_mut(bend_rows, bend_rows, nl, nl), -1.0, 1.0, SYR2K_NB)?;
            mirror_lower(stm.sub_mut(bend_rows, bend_rows, nl, nl));
            stats.flops += 2.0 * (nl * nl * used) as f64;
            stats.trailing_updates += 1;
        }
        if let (Some(q), Some(wt)) = (q.as_mut(), wt.as_ref()) {
            if used > 0 {
                apply_block_to_q(q, g0, wt.as_ref().sub(0, 0, g, used), v.as_ref().sub(0, 0, g, used));
            }
        }
        s = bend;
    }
    let t = TridiagonalMatrix::new(d, e)?;
    let q = q.map(OrthogonalAccumulator::from_mat).transpose()?;
    Ok((t, q, stats))
}
