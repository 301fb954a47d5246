//! Two-stage symmetric eigenvalue decomposition on multi-core CPUs.
//!
//! A dense symmetric `A` is first reduced to a band matrix `B` of bandwidth
//! `b` ([`band_reduction::dbr`]), then the band is chased down to a
//! tridiagonal `T` by pipelined Householder sweeps ([`bulge::chase`]), and
//! finally the eigenvalues of `T` come from implicit QL
//! ([`tridiag_eig::eig_qr`]). Every stage has a slow, obviously correct
//! counterpart for cross-checking.
//!
//! ```
//! use evdkit::{make_symmetric, similarity_residual, tridiagonalize, Distribution, TwoStageConfig};
//!
//! let a = make_symmetric(128, 7, Distribution::Gaussian)?;
//! let red = tridiagonalize(&a, &TwoStageConfig::new(8).blocksize(32).with_q(true))?;
//! let q = red.q.as_ref().unwrap();
//! assert!(similarity_residual(&a, q, &red.t)? < 1e-12);
//! # Ok::<(), evdkit::Error>(())
//! ```

#![allow(clippy::needless_range_loop)]

pub mod band_reduction;
pub mod bulge;
pub mod dense;
pub mod error;
pub mod householder;
pub mod io;
pub mod matrix;
pub mod pipeline;
pub mod rank2k;
pub mod tridiag_eig;

pub use band_reduction::{dbr, sbr, tridiag_direct, DbrConfig};
pub use bulge::{chase, chase_parallel, chase_serial, ChaseOptions, SweepProgress};
pub use error::{Error, Result};
pub use householder::{house, panel_qr, HouseholderReflector, PanelFactors};
pub use matrix::{
    make_band, make_symmetric, similarity_residual, wilkinson, BandMatrix, Distribution, OrthogonalAccumulator,
    SymmetricMatrix, TridiagonalMatrix,
};
pub use pipeline::{default_blocksize, eigenvalues, tridiagonalize, Tridiagonalization, TwoStageConfig};
pub use rank2k::{syr2k_naive, syr2k_recursive};
pub use tridiag_eig::{eig_qr, jacobi_oracle, EigResult};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/storage.md")]
    mod storage {}
    #[doc = include_str!("../../../book/src/householder.md")]
    mod householder {}
    #[doc = include_str!("../../../book/src/rank2k.md")]
    mod rank2k {}
    #[doc = include_str!("../../../book/src/band_reduction.md")]
    mod band_reduction {}
    #[doc = include_str!("../../../book/src/bulge_chasing.md")]
    mod bulge_chasing {}
    #[doc = include_str!("../../../book/src/eigenvalues.md")]
    mod eigenvalues {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
