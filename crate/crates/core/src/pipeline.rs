//! The two stages glued together: dense to band, band to tridiagonal.

use crate::band_reduction::{dbr_with_stats, DbrConfig, ReductionStats};
use crate::bulge::{chase_onto, ChaseOptions, ChaseStats};
use crate::error::{Error, Result};
use crate::matrix::{BandMatrix, OrthogonalAccumulator, SymmetricMatrix, TridiagonalMatrix};
use crate::tridiag_eig::{eig_qr, EigResult, DEFAULT_TOL};

/// Largest block size the default rule picks.
pub const MAX_DEFAULT_NB: usize = 512;

/// `min(512, largest multiple of b below n)`, or `None` if that is smaller
/// than `b`.
pub fn default_blocksize(n: usize, b: usize) -> Option<usize> {
    if b == 0 || n == 0 {
        return None;
    }
    let nb = ((n - 1) / b * b).min(MAX_DEFAULT_NB / b * b);
    (nb >= b).then_some(nb)
}

/// Parameters of [`tridiagonalize`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TwoStageConfig {
    pub dbr: DbrConfig,
    pub workers: usize,
}

impl TwoStageConfig {
    /// Bandwidth `b`, the default block size, one worker, no `Q`.
    pub fn new(b: usize) -> Self {
        TwoStageConfig { dbr: DbrConfig::new(b, b), workers: 1 }
    }

    pub fn blocksize(mut self, nb: usize) -> Self {
        self.dbr.nb = nb;
        self
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_q(mut self, on: bool) -> Self {
        self.dbr.accumulate_q = on;
        self
    }

    pub fn with_flat_panel_updates(mut self, on: bool) -> Self {
        self.dbr.flat_panel_updates = on;
        self
    }
}

/// Everything the two stages produce.
#[derive(Clone, Debug)]
pub struct Tridiagonalization {
    pub band: BandMatrix,
    pub t: TridiagonalMatrix,
    /// `A = Q T Q^T`, when requested.
    pub q: Option<OrthogonalAccumulator>,
    pub reduction: ReductionStats,
    pub chase: ChaseStats,
}

/// `A = Q T Q^T` through a band of width `cfg.dbr.b`. Matrices with fewer
/// than three rows are already tridiagonal and skip validation.
pub fn tridiagonalize(a: &SymmetricMatrix, cfg: &TwoStageConfig) -> Result<Tridiagonalization> {
    if cfg.workers == 0 {
        return Err(Error::InvalidConfig("at least one worker is required".into()));
    }
    let (band, q, reduction) = dbr_with_stats(a, &cfg.dbr)?;
    let opts = ChaseOptions::parallel(cfg.workers).with_q(cfg.dbr.accumulate_q);
    let out = chase_onto(&band, &opts, q)?;
    Ok(Tridiagonalization { band, t: out.t, q: out.q, reduction, chase: out.stats })
}

/// Eigenvalues of `a` via [`tridiagonalize`] and [`eig_qr`].
pub fn eigenvalues(a: &SymmetricMatrix, cfg: &TwoStageConfig) -> Result<EigResult> {
    let red = tridiagonalize(a, cfg)?;
    Ok(eig_qr(&red.t, DEFAULT_TOL))
}
