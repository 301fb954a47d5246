use std::io;
use std::time::Instant;

use evdkit::band_reduction::{dbr_with_stats, tridiag_direct, DbrConfig};
use evdkit::bulge::{chase, chase_flops, chase_onto, ChaseOptions};
use evdkit::dense::Mat;
use evdkit::io::{load_symf, save_symf, save_trid};
use evdkit::matrix::{make_symmetric, seeded_rng, similarity_residual, tol_orth, Trace};
use evdkit::pipeline::default_blocksize;
use evdkit::rank2k::{syr2k_flops, syr2k_naive, syr2k_recursive};
use evdkit::tridiag_eig::{eig_qr, jacobi_oracle, max_eigenvalue_deviation, DEFAULT_TOL};
use evdkit::{OrthogonalAccumulator, SymmetricMatrix, TridiagonalMatrix};
use rand::Rng;

use crate::report::{dbr_flops, emit, rate, RunReport, Stage, SCHEMA_VERSION};
use crate::{Failure, Options};

const DEFAULT_N: usize = 1024;
const DEFAULT_B: usize = 32;
const RESIDUAL_TOL: f64 = 1e-12;
const EIG_TOL: f64 = 1e-11;
const SYR2K_TOL: f64 = 1e-13;
const ORACLE_MAX_N: usize = 512;

/// `x <= tol`, false for NaN.
fn within(x: f64, tol: f64) -> bool {
    x <= tol
}

fn single(list: &[usize], default: usize, flag: &str) -> Result<usize, Failure> {
    match list {
        [] => Ok(default),
        [x] => Ok(*x),
        _ => Err(Failure::Config(format!("--{flag} takes a single value for this command"))),
    }
}

fn list_or(list: &[usize], default: &[usize], flag: &str) -> Result<Vec<usize>, Failure> {
    let v = if list.is_empty() { default.to_vec() } else { list.to_vec() };
    if v.contains(&0) {
        return Err(Failure::Config(format!("--{flag} values must be positive")));
    }
    Ok(v)
}

fn matrix(opts: &Options, n: usize) -> Result<SymmetricMatrix, Failure> {
    match &opts.input {
        Some(path) => Ok(load_symf(path)?),
        None => {
            if n == 0 {
                return Err(Failure::Config("--n must be at least 1".into()));
            }
            Ok(make_symmetric(n, opts.seed, opts.dist)?)
        }
    }
}

/// Bandwidth and block size for an `n x n` run. Matrices below 3 rows are
/// already tridiagonal, so anything goes there.
fn shape(n: usize, b: usize, nb: Option<usize>) -> Result<(usize, usize), Failure> {
    if b == 0 {
        return Err(Failure::Config("--bandwidth must be at least 1".into()));
    }
    if n < 3 {
        let b = b.clamp(1, (n.max(2)) - 1);
        return Ok((b, nb.unwrap_or(b)));
    }
    if b >= n {
        return Err(Failure::Config(format!("bandwidth {b} must be below n = {n}")));
    }
    let nb = match nb {
        Some(nb) => nb,
        None => default_blocksize(n, b).ok_or_else(|| {
            Failure::Config(format!("no multiple of bandwidth {b} fits below n = {n} as a block size"))
        })?,
    };
    DbrConfig::new(b, nb).validate(n)?;
    Ok((b, nb))
}

struct Pipeline {
    t: TridiagonalMatrix,
    q: Option<OrthogonalAccumulator>,
    dbr_secs: f64,
    chase_secs: f64,
}

fn pipeline(
    a: &SymmetricMatrix,
    b: usize,
    nb: usize,
    opts: &Options,
    workers: usize,
    want_q: bool,
) -> Result<Pipeline, Failure> {
    let cfg = DbrConfig::new(b, nb).with_q(want_q).with_flat_panel_updates(opts.flat_panel_updates);
    let t0 = Instant::now();
    let (band, q, _) = dbr_with_stats(a, &cfg)?;
    let dbr_secs = t0.elapsed().as_secs_f64();
    let chase_workers = if opts.serial_chase { 1 } else { workers };
    let t0 = Instant::now();
    let out = chase_onto(&band, &ChaseOptions::parallel(chase_workers).with_q(want_q), q)?;
    let chase_secs = t0.elapsed().as_secs_f64();
    Ok(Pipeline { t: out.t, q: out.q, dbr_secs, chase_secs })
}

struct Row {
    n: usize,
    b: usize,
    nb: usize,
    workers: usize,
    seed: u64,
}

impl Row {
    fn report(&self, stage: Stage, seconds: f64, flops: f64, residual: f64) -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            stage,
            n: self.n,
            b: self.b,
            nb: self.nb,
            workers: self.workers,
            seconds,
            gflops: rate(flops, seconds),
            residual,
            seed: self.seed,
        }
    }
}

fn stage_reports(row: &Row, p: &Pipeline) -> Vec<RunReport> {
    let (fd, fc) = (dbr_flops(row.n), chase_flops(row.n, row.b));
    vec![row.report(Stage::Dbr, p.dbr_secs, fd, f64::NAN), row.report(Stage::Chase, p.chase_secs, fc, f64::NAN)]
}

fn print(reports: &[RunReport], opts: &Options) -> Result<(), Failure> {
    emit(reports, opts.format, io::stdout().lock())?;
    Ok(())
}

fn check_similarity(a: &SymmetricMatrix, p: &Pipeline) -> Result<(f64, Option<String>), Failure> {
    let q = p.q.as_ref().expect("Q was requested");
    let res = similarity_residual(a, q, &p.t)?;
    let orth = q.orthogonality_defect();
    let n = a.n();
    let problem = if !within(res, RESIDUAL_TOL) {
        Some(format!("similarity residual {res:.3e} exceeds {RESIDUAL_TOL:e}"))
    } else if !within(orth, tol_orth(n).max(RESIDUAL_TOL)) {
        Some(format!("orthogonality defect {orth:.3e} exceeds {:e}", tol_orth(n).max(RESIDUAL_TOL)))
    } else {
        None
    };
    Ok((res, problem))
}

pub fn tridiag(opts: &Options, workers: usize) -> Result<(), Failure> {
    let n = single(&opts.n, DEFAULT_N, "n")?;
    let b = single(&opts.bandwidth, DEFAULT_B, "bandwidth")?;
    let nb = opts.blocksize.first().copied();
    single(&opts.blocksize, 0, "blocksize")?;
    let a = matrix(opts, n)?;
    let n = a.n();
    let (b, nb) = shape(n, b, nb)?;
    let p = pipeline(&a, b, nb, opts, workers, opts.verify || opts.accumulate_q)?;
    let (residual, problem) = if opts.verify { check_similarity(&a, &p)? } else { (f64::NAN, None) };
    let mut problems: Vec<String> = problem.into_iter().collect();

    let row = Row { n, b, nb, workers, seed: opts.seed };
    let mut reports = stage_reports(&row, &p);
    let total = p.dbr_secs + p.chase_secs;
    reports.push(row.report(Stage::Total, total, dbr_flops(n) + chase_flops(n, b), residual));
    if opts.oracle {
        // The one-stage reduction as baseline; residual compares the spectra.
        let t0 = Instant::now();
        let (direct, _) = tridiag_direct(&a, false)?;
        let secs = t0.elapsed().as_secs_f64();
        let (x, y) = (eig_qr(&p.t, DEFAULT_TOL), eig_qr(&direct, DEFAULT_TOL));
        let norm = a.frobenius_norm();
        let dev = max_eigenvalue_deviation(&x.values, &y.values) / if norm > 0.0 { norm } else { 1.0 };
        if !within(dev, EIG_TOL) {
            problems.push(format!("two-stage and direct spectra differ by {dev:.3e} * ||A||_F"));
        }
        reports.push(row.report(Stage::Direct, secs, dbr_flops(n), dev));
    }
    print(&reports, opts)?;
    if let Some(path) = &opts.output {
        save_trid(path, &p.t)?;
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(problems.join("; ")))
    }
}

pub fn evd(opts: &Options, workers: usize) -> Result<(), Failure> {
    let n = single(&opts.n, DEFAULT_N, "n")?;
    let b = single(&opts.bandwidth, DEFAULT_B, "bandwidth")?;
    let nb = opts.blocksize.first().copied();
    single(&opts.blocksize, 0, "blocksize")?;
    let a = matrix(opts, n)?;
    let n = a.n();
    if opts.oracle && n > ORACLE_MAX_N {
        return Err(Failure::Config(format!("--oracle is limited to n <= {ORACLE_MAX_N}, got {n}")));
    }
    let (b, nb) = shape(n, b, nb)?;
    let p = pipeline(&a, b, nb, opts, workers, opts.verify || opts.accumulate_q)?;
    let t0 = Instant::now();
    let eig = eig_qr(&p.t, DEFAULT_TOL);
    let eig_secs = t0.elapsed().as_secs_f64();

    let mut problems = Vec::new();
    if !eig.converged {
        problems.push(format!("QL iteration did not converge after {} sweeps", eig.iterations));
    }
    let mut residual = f64::NAN;
    if opts.verify {
        let (r, problem) = check_similarity(&a, &p)?;
        residual = r;
        problems.extend(problem);
    }
    let mut deviation = f64::NAN;
    if opts.oracle {
        let oracle = jacobi_oracle(&a, 1e-15);
        let norm = a.frobenius_norm();
        let dev = max_eigenvalue_deviation(&eig.values, &oracle.values);
        deviation = if norm > 0.0 { dev / norm } else { dev };
        if !within(deviation, EIG_TOL) {
            problems.push(format!("eigenvalue deviation {deviation:.3e} * ||A||_F exceeds {EIG_TOL:e}"));
        }
    }

    let row = Row { n, b, nb, workers, seed: opts.seed };
    let mut reports = stage_reports(&row, &p);
    reports.push(row.report(Stage::Eig, eig_secs, 0.0, deviation));
    let total = p.dbr_secs + p.chase_secs + eig_secs;
    reports.push(row.report(Stage::Total, total, dbr_flops(n) + chase_flops(n, b), residual));
    print(&reports, opts)?;
    if let Some(path) = &opts.output {
        let spectrum = TridiagonalMatrix::new(eig.values, vec![0.0; n - 1])?;
        save_trid(path, &spectrum)?;
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(problems.join("; ")))
    }
}

fn random_mat(rows: usize, cols: usize, seed: u64, stream: u64) -> Mat {
    let mut rng = seeded_rng(seed, stream);
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn lower_rel_dev(x: &Mat, y: &Mat) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for j in 0..x.cols() {
        for i in j..x.rows() {
            num += (x.get(i, j) - y.get(i, j)).powi(2);
            den += y.get(i, j).powi(2);
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

pub fn syr2k_bench(opts: &Options, workers: usize) -> Result<(), Failure> {
    let ns = list_or(&opts.n, &[512], "n")?;
    let ks = list_or(&opts.k, &[16, 64, 256], "k")?;
    let nbs = list_or(&opts.blocksize, &[128], "blocksize")?;
    let mut reports = Vec::new();
    let mut problems = Vec::new();
    for &n in &ns {
        for &k in &ks {
            let a = random_mat(n, k, opts.seed, 1);
            let b = random_mat(n, k, opts.seed, 2);
            let c0 = random_mat(n, n, opts.seed, 3);
            let flops = syr2k_flops(n, k);
            let mut naive = c0.clone();
            let t0 = Instant::now();
            syr2k_naive(a.as_ref(), b.as_ref(), naive.as_mut(), 1.0, 1.0)?;
            let secs = t0.elapsed().as_secs_f64();
            let row = Row { n, b: k, nb: 0, workers, seed: opts.seed };
            reports.push(row.report(Stage::Syr2k, secs, flops, f64::NAN));
            for &nb in &nbs {
                let mut c = c0.clone();
                let t0 = Instant::now();
                syr2k_recursive(a.as_ref(), b.as_ref(), c.as_mut(), 1.0, 1.0, nb)?;
                let secs = t0.elapsed().as_secs_f64();
                let dev = lower_rel_dev(&c, &naive);
                if !within(dev, SYR2K_TOL) {
                    problems.push(format!("n = {n}, k = {k}, nb = {nb}: deviation {dev:.3e}"));
                }
                let row = Row { n, b: k, nb, workers, seed: opts.seed };
                reports.push(row.report(Stage::Syr2k, secs, flops, dev));
            }
        }
    }
    print(&reports, opts)?;
    for &n in &ns {
        for &nb in &nbs {
            let mut cells: Vec<_> =
                reports.iter().filter(|r| r.n == n && r.nb == nb).map(|r| (r.b, r.gflops)).collect();
            cells.sort_by_key(|c| c.0);
            let monotone = cells.windows(2).all(|w| w[1].1 >= 0.9 * w[0].1);
            eprintln!(
                "n = {n}, nb = {nb}: gflops non-decreasing in k (10% slack): {}",
                if monotone { "yes" } else { "no" }
            );
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("recursive and naive updates disagree: {}", problems.join("; "))))
    }
}

pub fn tune(opts: &Options, workers: usize) -> Result<(), Failure> {
    let n = single(&opts.n, DEFAULT_N, "n")?;
    let bs = list_or(&opts.bandwidth, &[8, 16, 32], "bandwidth")?;
    let nbs = list_or(&opts.blocksize, &[64, 128, 256], "blocksize")?;
    let a = matrix(opts, n)?;
    let n = a.n();
    let mut reports: Vec<RunReport> = Vec::new();
    for &b in &bs {
        for &nb in &nbs {
            if DbrConfig::new(b, nb).validate(n).is_err() {
                eprintln!("skipping b = {b}, nb = {nb}: need b <= nb < n = {n} with nb a multiple of b");
                continue;
            }
            let p = pipeline(&a, b, nb, opts, workers, false)?;
            let total = p.dbr_secs + p.chase_secs;
            eprintln!("b = {b}, nb = {nb}: dbr {:.4}s, chase {:.4}s, total {total:.4}s", p.dbr_secs, p.chase_secs);
            let row = Row { n, b, nb, workers, seed: opts.seed };
            reports.push(row.report(Stage::Total, total, dbr_flops(n) + chase_flops(n, b), f64::NAN));
        }
    }
    let winner = reports
        .iter()
        .min_by(|x, y| x.seconds.total_cmp(&y.seconds))
        .cloned()
        .ok_or_else(|| Failure::Config("no valid (bandwidth, blocksize) pair in the grid".into()))?;
    eprintln!("winner: b = {}, nb = {} ({:.4}s)", winner.b, winner.nb, winner.seconds);
    reports.push(winner);
    print(&reports, opts)
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn line(&mut self, n: usize, name: &str, ok: bool, detail: String) {
        println!("{} n={n} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn verify_one(
    suite: &mut Suite,
    a: &SymmetricMatrix,
    b: usize,
    nb: Option<usize>,
    workers: usize,
    seed: u64,
) -> Result<(), Failure> {
    let n = a.n();
    let b = b.min((n / 4).max(1));
    let (b, nb) = match nb {
        Some(nb) if DbrConfig::new(b, nb).validate(n).is_ok() => (b, nb),
        _ => shape(n, b, None)?,
    };
    let norm = a.frobenius_norm();
    let scale = if norm > 0.0 { norm } else { 1.0 };

    let cfg = DbrConfig::new(b, nb).with_q(true);
    let (band, q, _) = dbr_with_stats(a, &cfg)?;
    suite.line(
        n,
        "band shape",
        band.true_bandwidth() <= b,
        format!("bandwidth {} with b = {b}, nb = {nb}", band.true_bandwidth()),
    );

    let (flat, _, _) = dbr_with_stats(a, &cfg.with_q(false).with_flat_panel_updates(true))?;
    let diff = band.bands().iter().zip(flat.bands()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale;
    suite.line(
        n,
        "flat vs recursive panel updates",
        diff <= RESIDUAL_TOL,
        format!("max deviation {diff:.2e} * ||A||_F"),
    );

    let out = chase_onto(&band, &ChaseOptions::parallel(workers.max(2)).with_q(true), q)?;
    let serial = chase(&band, &ChaseOptions::serial())?;
    suite.line(n, "parallel vs serial chase", out.t == serial.t, format!("{} workers, bitwise", workers.max(2)));

    let q = out.q.expect("Q was requested");
    let res = similarity_residual(a, &q, &out.t)?;
    suite.line(n, "similarity residual", res <= RESIDUAL_TOL, format!("{res:.2e}"));
    let orth = q.orthogonality_defect();
    let otol = tol_orth(n).max(RESIDUAL_TOL);
    suite.line(n, "orthogonality", orth <= otol, format!("{orth:.2e}"));

    let eig = eig_qr(&out.t, DEFAULT_TOL);
    suite.line(n, "QL convergence", eig.converged, format!("{} sweeps", eig.iterations));
    let tr_dev = (eig.values.iter().sum::<f64>() - a.trace()).abs() / scale;
    suite.line(n, "trace", tr_dev <= 1e-10, format!("deviation {tr_dev:.2e} * ||A||_F"));

    if n <= ORACLE_MAX_N {
        let oracle = jacobi_oracle(a, 1e-15);
        let dev = max_eigenvalue_deviation(&eig.values, &oracle.values) / scale;
        suite.line(n, "eigenvalues vs Jacobi", dev <= EIG_TOL, format!("max deviation {dev:.2e} * ||A||_F"));
    }

    let (direct, _) = tridiag_direct(a, false)?;
    let eig_direct = eig_qr(&direct, DEFAULT_TOL);
    let dev = max_eigenvalue_deviation(&eig.values, &eig_direct.values) / scale;
    suite.line(n, "two-stage vs direct", dev <= EIG_TOL, format!("max deviation {dev:.2e} * ||A||_F"));

    let k = 16.min(n);
    let (ya, yb) = (random_mat(n, k, seed, 4), random_mat(n, k, seed, 5));
    let c0 = random_mat(n, n, seed, 6);
    let mut fast = c0.clone();
    syr2k_recursive(ya.as_ref(), yb.as_ref(), fast.as_mut(), -1.0, 1.0, 32)?;
    let mut slow = c0;
    syr2k_naive(ya.as_ref(), yb.as_ref(), slow.as_mut(), -1.0, 1.0)?;
    let dev = lower_rel_dev(&fast, &slow);
    suite.line(n, "syr2k recursive vs naive", dev <= SYR2K_TOL, format!("relative deviation {dev:.2e}, k = {k}"));
    Ok(())
}

pub fn verify(opts: &Options, workers: usize) -> Result<(), Failure> {
    let b = single(&opts.bandwidth, DEFAULT_B, "bandwidth")?;
    if b == 0 {
        return Err(Failure::Config("--bandwidth must be at least 1".into()));
    }
    let nb = opts.blocksize.first().copied();
    single(&opts.blocksize, 0, "blocksize")?;
    let mut suite = Suite { failed: 0 };
    if let Some(path) = &opts.input {
        let a = load_symf(path)?;
        verify_one(&mut suite, &a, b, nb, workers, opts.seed)?;
    } else {
        for n in list_or(&opts.n, &[64, 128, 256], "n")? {
            let a = make_symmetric(n, opts.seed, opts.dist)?;
            verify_one(&mut suite, &a, b, nb, workers, opts.seed)?;
        }
    }
    match suite.failed {
        0 => Ok(()),
        k => Err(Failure::Verification(format!("{k} invariant(s) failed"))),
    }
}

pub fn gen(opts: &Options) -> Result<(), Failure> {
    let n = single(&opts.n, DEFAULT_N, "n")?;
    let path = opts.output.as_ref().ok_or_else(|| Failure::Config("gen needs --output".into()))?;
    let a = matrix(opts, n)?;
    save_symf(path, &a)?;
    Ok(())
}
