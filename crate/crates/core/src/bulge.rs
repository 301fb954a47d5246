//! Stage two: band to tridiagonal by bulge chasing.
//!
//! Sweep `i` annihilates column `i` below the subdiagonal with one reflector
//! and then chases the fill it creates down the band, one window of `b` rows
//! per step. With row blocks `R_j = [i + 1 + j*b, i + (j+1)*b]` (clamped to the
//! matrix), step `j` works on
//!
//! ```text
//!            C_j       R_j
//!        +---------+---------+
//!  R_j   |  pink   |  green  |     pink: first column feeds the reflector,
//!        +---------+---------+           the rest is updated from the left
//!  R_j+1           |  blue   |     green: symmetric block, both sides
//!                  +---------+     blue:  right update, creates the next bulge
//! ```
//!
//! where `C_0 = {i}` and `C_j = R_{j-1}`. During the chase the matrix has
//! bandwidth up to `2b`, so it is held in an extended lower band in which
//! element `(r, c)` lives at `r + 2b * c`: any window inside the band is then a
//! plain column-major view with leading dimension `2b`.
//!
//! Sweeps overlap in the parallel chase. Each sweep publishes how far it has
//! got in a progress counter, and sweep `i` may start a step at column
//! `opCol = i + j*b` only once sweep `i - 1` has published at least
//! `opCol + 2b`. That keeps the two sweeps' windows in disjoint columns.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;

use crate::dense::MatMut;
use crate::error::{Error, Result};
use crate::householder::{house_into, HouseholderReflector};
use crate::matrix::{seeded_rng, BandMatrix, OrthogonalAccumulator, TridiagonalMatrix};

/// Per-sweep progress counters.
///
/// `gcom[i]` only grows. After step `j` sweep `i` publishes `i + (j+1)*b`;
/// when the sweep ends it publishes [`SweepProgress::done`], which releases
/// any follower regardless of where the sweep stopped.
#[derive(Debug)]
pub struct SweepProgress {
    gcom: Vec<AtomicUsize>,
    b: usize,
    n: usize,
}

impl SweepProgress {
    pub fn new(sweeps: usize, n: usize, b: usize) -> Self {
        SweepProgress { gcom: (0..sweeps).map(|_| AtomicUsize::new(0)).collect(), b, n }
    }

    pub fn len(&self) -> usize {
        self.gcom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gcom.is_empty()
    }

    /// Completion marker, larger than any column a follower waits for.
    pub fn done(&self) -> usize {
        self.n + 2 * self.b
    }

    pub fn get(&self, i: usize) -> usize {
        self.gcom[i].load(Ordering::Acquire)
    }

    /// Release-publishes `value` for sweep `i`; values never decrease.
    pub fn publish(&self, i: usize, value: usize) {
        debug_assert!(value >= self.gcom[i].load(Ordering::Relaxed));
        self.gcom[i].store(value, Ordering::Release);
    }

    /// Whether sweep `i` may start work at column `op_col`.
    pub fn ready(&self, i: usize, op_col: usize) -> bool {
        i == 0 || self.get(i - 1) >= op_col + 2 * self.b
    }

    /// Spins (then yields) until [`SweepProgress::ready`] holds.
    pub fn wait(&self, i: usize, op_col: usize) {
        let mut spins = 0u32;
        while !self.ready(i, op_col) {
            if spins < 64 {
                std::hint::spin_loop();
                spins += 1;
            } else {
                std::thread::yield_now();
            }
        }
    }
}

/// Scratch reused across the steps of one sweep.
#[derive(Clone, Debug, Default)]
pub struct BulgeWorkspace {
    v: Vec<f64>,
    x: Vec<f64>,
    p: Vec<f64>,
    u: Vec<f64>,
}

impl BulgeWorkspace {
    pub fn new(b: usize) -> Self {
        BulgeWorkspace { v: vec![0.0; b], x: vec![0.0; b], p: vec![0.0; b], u: vec![0.0; b] }
    }

    fn ensure(&mut self, m: usize) {
        for buf in [&mut self.v, &mut self.x, &mut self.p, &mut self.u] {
            if buf.len() < m {
                buf.resize(m, 0.0);
            }
        }
    }
}

/// Applies `h` (length `m`) to one chase window of `m + q` rows and
/// `pink_cols + m` columns: columns `[0, pink_cols)` are updated from the left,
/// the `m x m` block at `(0, pink_cols)` from both sides (lower triangle only),
/// and the `q x m` block at `(m, pink_cols)` from the right. Nothing else in
/// the window is read or written.
pub fn sweep_window_update(ws: &mut BulgeWorkspace, h: &HouseholderReflector, window: MatMut<'_>, pink_cols: usize) {
    window_update(ws, &h.v, h.beta, window, pink_cols);
}

fn window_update(ws: &mut BulgeWorkspace, v: &[f64], beta: f64, mut w: MatMut<'_>, pc: usize) {
    let m = v.len();
    assert!(w.cols() == pc + m && w.rows() >= m, "window geometry does not match the reflector");
    if beta == 0.0 {
        return;
    }
    let q = w.rows() - m;
    ws.ensure(m);
    // pink: P <- H P
    for c in 0..pc {
        let col = &mut w.col_mut(c)[..m];
        let s = beta * dot(v, col);
        for (x, vi) in col.iter_mut().zip(v) {
            *x -= s * vi;
        }
    }
    // green: D <- H D H with D symmetric, lower triangle stored.
    // p = beta D v, w = p - beta/2 (p^T v) v, D <- D - v w^T - w v^T
    let p = &mut ws.p[..m];
    p.fill(0.0);
    for c in 0..m {
        let col = &w.col_mut(pc + c)[..m];
        let vc = v[c];
        let mut acc = col[c] * vc;
        for r in c + 1..m {
            acc += col[r] * v[r];
            p[r] += col[r] * vc;
        }
        p[c] += acc;
    }
    for x in p.iter_mut() {
        *x *= beta;
    }
    let half = 0.5 * beta * dot(p, v);
    for (pi, vi) in p.iter_mut().zip(v) {
        *pi -= half * vi;
    }
    for c in 0..m {
        let (vc, pcv) = (v[c], p[c]);
        let col = &mut w.col_mut(pc + c)[..m];
        for r in c..m {
            col[r] -= v[r] * pcv + p[r] * vc;
        }
    }
    // blue: E <- E H
    if q > 0 {
        let u = &mut ws.u[..q];
        u.fill(0.0);
        for c in 0..m {
            let col = &w.col_mut(pc + c)[m..m + q];
            let vc = v[c];
            for (ui, x) in u.iter_mut().zip(col) {
                *ui += x * vc;
            }
        }
        for c in 0..m {
            let s = beta * v[c];
            let col = &mut w.col_mut(pc + c)[m..m + q];
            for (x, ui) in col.iter_mut().zip(u.iter()) {
                *x -= s * ui;
            }
        }
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Options for [`chase`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChaseOptions {
    /// Executors pulling sweeps; 1 runs the sweeps in order on the caller.
    pub workers: usize,
    pub accumulate_q: bool,
    /// Record the safety audit.
    pub audit: bool,
    /// Inject seeded random delays between steps. Changes the interleaving,
    /// never the result.
    pub stress_seed: Option<u64>,
}

impl ChaseOptions {
    pub fn serial() -> Self {
        ChaseOptions { workers: 1, accumulate_q: false, audit: false, stress_seed: None }
    }

    pub fn parallel(workers: usize) -> Self {
        ChaseOptions { workers, ..Self::serial() }
    }

    pub fn with_q(mut self, on: bool) -> Self {
        self.accumulate_q = on;
        self
    }
}

/// Work counters of one chase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChaseStats {
    pub flops: f64,
    pub sweeps: usize,
    pub steps: usize,
}

/// What the instrumented schedule observed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChaseAudit {
    /// Margin checks performed (one per step of every sweep but the first).
    pub checks: usize,
    /// Checks where the leading sweep's active column was less than `2b` ahead.
    pub violations: usize,
    /// Smallest observed `opCol(i-1) - opCol(i)` among running pairs.
    pub min_margin: Option<usize>,
    /// Values published by each sweep, in order.
    pub publishes: Vec<Vec<usize>>,
}

impl ChaseAudit {
    /// Every sweep's publishes strictly increase by `b`, except the last,
    /// which is the completion marker.
    pub fn publishes_monotone(&self, b: usize) -> bool {
        self.publishes.iter().all(|seq| {
            let body = &seq[..seq.len().saturating_sub(1)];
            body.windows(2).all(|w| w[1] == w[0] + b) && seq.windows(2).all(|w| w[1] > w[0])
        })
    }
}

/// Result of [`chase`].
#[derive(Clone, Debug)]
pub struct ChaseOutput {
    pub t: TridiagonalMatrix,
    /// `Q` with `B = Q T Q^T` (times the initial factor, if one was given).
    pub q: Option<OrthogonalAccumulator>,
    pub stats: ChaseStats,
    pub audit: Option<ChaseAudit>,
}

/// Extended band storage: `(r, c)` with `0 <= r - c <= 2b` at `r + 2b * c`.
struct ChaseBand {
    n: usize,
    ld: usize,
    data: Vec<f64>,
}

impl ChaseBand {
    fn from_band(bm: &BandMatrix) -> Self {
        let (n, b) = (bm.n(), bm.bandwidth());
        let ld = 2 * b;
        let mut data = vec![0.0; n + (n - 1) * ld];
        let bands = bm.bands();
        for j in 0..n {
            for off in 0..=b.min(n - 1 - j) {
                data[j + off + j * ld] = bands[off + j * (b + 1)];
            }
        }
        ChaseBand { n, ld, data }
    }

    fn tridiagonal(&self) -> TridiagonalMatrix {
        let (n, ld) = (self.n, self.ld);
        let d = (0..n).map(|j| self.data[j + j * ld]).collect();
        let e = (0..n - 1).map(|j| self.data[j + 1 + j * ld]).collect();
        TridiagonalMatrix { d, e }
    }
}

#[derive(Clone, Copy)]
struct SharedPtr(*mut f64);
unsafe impl Send for SharedPtr {}
unsafe impl Sync for SharedPtr {}

/// A reflector of one step: acts on rows `start..start + v.len()`.
struct StepReflector {
    start: usize,
    beta: f64,
    v: Vec<f64>,
}

struct SweepCtx<'a> {
    n: usize,
    b: usize,
    ld: usize,
    ptr: SharedPtr,
    len: usize,
    progress: &'a SweepProgress,
    /// Column each sweep is working at (audit only).
    active: Option<&'a [AtomicUsize]>,
    collect_q: bool,
    stress_seed: Option<u64>,
}

struct SweepResult {
    flops: f64,
    steps: usize,
    reflectors: Vec<StepReflector>,
    checks: usize,
    violations: usize,
    min_margin: Option<usize>,
    publishes: Vec<usize>,
}

impl SweepCtx<'_> {
    /// # Safety
    /// The caller must own the element range covered by the window, i.e. no
    /// other thread may access it for the lifetime of the returned view.
    unsafe fn window(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> MatMut<'_> {
        let lo = r0 + c0 * self.ld;
        let len = (cols - 1) * self.ld + rows;
        assert!(lo + len <= self.len, "window leaves the band storage");
        let slice = std::slice::from_raw_parts_mut(self.ptr.0.add(lo), len);
        MatMut::new(slice, rows, cols, self.ld)
    }

    fn run_sweep(&self, i: usize, ws: &mut BulgeWorkspace) -> SweepResult {
        let (n, b) = (self.n, self.b);
        let mut res = SweepResult {
            flops: 0.0,
            steps: 0,
            reflectors: Vec::new(),
            checks: 0,
            violations: 0,
            min_margin: None,
            publishes: Vec::new(),
        };
        let mut rng = self.stress_seed.map(|s| seeded_rng(s, i as u64 + 1));
        let mut j = 0;
        loop {
            let start = i + 1 + j * b;
            if start > n - 1 {
                break;
            }
            let op_col = i + j * b;
            if let Some(rng) = rng.as_mut() {
                stress_delay(rng);
            }
            self.progress.wait(i, op_col);
            if let (Some(active), true) = (self.active, i > 0) {
                let lead = active[i - 1].load(Ordering::Acquire);
                res.checks += 1;
                let margin = lead.saturating_sub(op_col);
                if lead < op_col + 2 * b {
                    res.violations += 1;
                }
                if lead != usize::MAX {
                    res.min_margin = Some(res.min_margin.map_or(margin, |m| m.min(margin)));
                }
            }

            let end = (i + (j + 1) * b).min(n - 1);
            let m = end - start + 1;
            let nstart = end + 1;
            let q = if nstart < n { (i + (j + 2) * b).min(n - 1) - nstart + 1 } else { 0 };
            let (c0, pc) = if j == 0 { (i, 1) } else { (start - b, b) };
            // SAFETY: the progress predicate keeps sweep i - 1 at least two
            // steps of columns ahead and sweep i + 1 at least two behind, so
            // columns c0..=end belong to this sweep alone until it publishes.
            let mut w = unsafe { self.window(start, c0, m + q, pc + m) };
            ws.ensure(m);
            let (beta, alpha) = {
                let x = &mut ws.x[..m];
                x.copy_from_slice(&w.col_mut(0)[..m]);
                house_into(x, &mut ws.v[..m])
            };
            let col = w.col_mut(0);
            col[0] = alpha;
            col[1..m].fill(0.0);
            res.flops += 3.0 * m as f64;
            if beta != 0.0 {
                let v = std::mem::take(&mut ws.v);
                window_update(ws, &v[..m], beta, w.into_sub(0, 1, m + q, pc - 1 + m), pc - 1);
                if self.collect_q {
                    res.reflectors.push(StepReflector { start, beta, v: v[..m].to_vec() });
                }
                ws.v = v;
                res.flops += (4 * m * (pc - 1) + 4 * m * m + 4 * q * m) as f64;
            }
            res.steps += 1;

            let more = end < n - 1;
            let next = if more { i + (j + 1) * b } else { usize::MAX };
            if let Some(active) = self.active {
                active[i].store(next, Ordering::Release);
            }
            let publish = if more { i + (j + 1) * b } else { self.progress.done() };
            self.progress.publish(i, publish);
            if self.active.is_some() {
                res.publishes.push(publish);
            }
            if !more {
                break;
            }
            j += 1;
        }
        if res.steps == 0 {
            if let Some(active) = self.active {
                active[i].store(usize::MAX, Ordering::Release);
            }
            self.progress.publish(i, self.progress.done());
            if self.active.is_some() {
                res.publishes.push(self.progress.done());
            }
        }
        res
    }
}

fn stress_delay(rng: &mut rand_chacha::ChaCha8Rng) {
    match rng.random_range(0..32u32) {
        0 => std::thread::sleep(Duration::from_micros(rng.random_range(1..40))),
        1..=6 => std::thread::yield_now(),
        _ => {
            for _ in 0..rng.random_range(0..200u32) {
                std::hint::spin_loop();
            }
        }
    }
}

/// Band to tridiagonal. With `q_init`, the chase's reflectors are multiplied
/// onto it from the right.
pub fn chase_onto(bm: &BandMatrix, opts: &ChaseOptions, q_init: Option<OrthogonalAccumulator>) -> Result<ChaseOutput> {
    let (n, b) = (bm.n(), bm.bandwidth());
    if b >= n && n > 1 {
        return Err(Error::InvalidBandwidth { b, n });
    }
    if opts.workers == 0 {
        return Err(Error::InvalidConfig("at least one worker is required".into()));
    }
    if let Some(q) = &q_init {
        if q.n() != n {
            return Err(Error::Shape(format!("initial Q is {0}x{0}, band is {1}x{1}", q.n(), n)));
        }
    }
    let q0 = || q_init.clone().unwrap_or_else(|| OrthogonalAccumulator::identity(n));
    if b == 1 || n <= 2 {
        let audit = opts.audit.then(ChaseAudit::default);
        return Ok(ChaseOutput {
            t: bm.tridiagonal_part(),
            q: opts.accumulate_q.then(q0),
            stats: ChaseStats::default(),
            audit,
        });
    }

    let mut band = ChaseBand::from_band(bm);
    let sweeps = n - 2;
    let progress = SweepProgress::new(sweeps, n, b);
    let active: Option<Vec<AtomicUsize>> = opts.audit.then(|| (0..sweeps).map(|_| AtomicUsize::new(0)).collect());
    let ctx = SweepCtx {
        n,
        b,
        ld: band.ld,
        ptr: SharedPtr(band.data.as_mut_ptr()),
        len: band.data.len(),
        progress: &progress,
        active: active.as_deref(),
        collect_q: opts.accumulate_q,
        stress_seed: opts.stress_seed,
    };

    let mut results: Vec<Option<SweepResult>> = (0..sweeps).map(|_| None).collect();
    if opts.workers == 1 {
        let mut ws = BulgeWorkspace::new(b);
        for (i, slot) in results.iter_mut().enumerate() {
            *slot = Some(ctx.run_sweep(i, &mut ws));
        }
    } else {
        let next = AtomicUsize::new(0);
        let done = Mutex::new(Vec::with_capacity(sweeps));
        std::thread::scope(|s| {
            for _ in 0..opts.workers.min(sweeps) {
                s.spawn(|| {
                    let mut ws = BulgeWorkspace::new(b);
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= sweeps {
                            break;
                        }
                        local.push((i, ctx.run_sweep(i, &mut ws)));
                    }
                    done.lock().expect("no worker panics while holding the lock").extend(local);
                });
            }
        });
        for (i, r) in done.into_inner().expect("workers finished") {
            results[i] = Some(r);
        }
    }

    let results: Vec<SweepResult> = results.into_iter().map(|r| r.expect("every sweep ran")).collect();
    let mut stats = ChaseStats { sweeps, ..ChaseStats::default() };
    let mut audit = opts.audit.then(ChaseAudit::default);
    for r in &results {
        stats.flops += r.flops;
        stats.steps += r.steps;
        if let Some(a) = audit.as_mut() {
            a.checks += r.checks;
            a.violations += r.violations;
            a.min_margin = match (a.min_margin, r.min_margin) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
            a.publishes.push(r.publishes.clone());
        }
    }
    let q = if opts.accumulate_q {
        let reflectors: Vec<&StepReflector> = results.iter().flat_map(|r| r.reflectors.iter()).collect();
        Some(replay_q(q0(), &reflectors)?)
    } else {
        None
    };
    Ok(ChaseOutput { t: band.tridiagonal(), q, stats, audit })
}

/// `Q <- Q H_1 H_2 ...` in sweep order, computed on `Q^T` so that every
/// column is independent.
fn replay_q(q: OrthogonalAccumulator, refl: &[&StepReflector]) -> Result<OrthogonalAccumulator> {
    let n = q.n();
    let mut qt = q.q().transpose();
    const CHUNK: usize = 16;
    qt.data_mut().par_chunks_mut(n * CHUNK).for_each(|cols| {
        for h in refl {
            let rows = h.start..h.start + h.v.len();
            for col in cols.chunks_exact_mut(n) {
                let seg = &mut col[rows.clone()];
                let s = h.beta * dot(&h.v, seg);
                if s != 0.0 {
                    for (x, vi) in seg.iter_mut().zip(&h.v) {
                        *x -= s * vi;
                    }
                }
            }
        }
    });
    OrthogonalAccumulator::from_mat(qt.transpose())
}

/// Band to tridiagonal with a configurable schedule.
pub fn chase(bm: &BandMatrix, opts: &ChaseOptions) -> Result<ChaseOutput> {
    chase_onto(bm, opts, None)
}

/// Sweeps strictly in order on the calling thread.
pub fn chase_serial(bm: &BandMatrix, accumulate_q: bool) -> Result<(TridiagonalMatrix, Option<OrthogonalAccumulator>)> {
    let out = chase(bm, &ChaseOptions::serial().with_q(accumulate_q))?;
    Ok((out.t, out.q))
}

/// Pipelined sweeps on `workers` threads.
pub fn chase_parallel(
    bm: &BandMatrix,
    workers: usize,
    accumulate_q: bool,
) -> Result<(TridiagonalMatrix, Option<OrthogonalAccumulator>)> {
    let out = chase(bm, &ChaseOptions::parallel(workers).with_q(accumulate_q))?;
    Ok((out.t, out.q))
}

/// `6 n^2 b`, the flop count charged to one chase.
pub fn chase_flops(n: usize, b: usize) -> f64 {
    6.0 * (n as f64).powi(2) * b as f64
}
