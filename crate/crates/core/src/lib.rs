//! Detection of rank-one signals in spiked rectangular matrices.
//!
//! A data matrix either carries a rank-one mean (`Y = √λ·u·vᵀ + X`, the
//! additive model) or a rank-one covariance perturbation
//! (`Y = (I + λ·u·uᵀ)^{1/2}·X`, the multiplicative model), where `X` has
//! i.i.d. entries of variance `1/N`. The crate provides:
//!
//! * [`spectral`] — dense symmetric eigensolver plus the deterministic
//!   random-matrix reference functions (Marchenko–Pastur law, Stieltjes
//!   transform, BBP outlier locations);
//! * [`noise`] — noise densities (analytic and KDE-estimated), score
//!   functions, Fisher information, and transform-moment functionals;
//! * [`models`] — seeded generation of spiked data matrices;
//! * [`transform`] — entrywise score transforms, effective-SNR formulas,
//!   and the improved-PCA detector;
//! * [`lss`] — the linear-spectral-statistics hypothesis test with its
//!   closed-form statistic, limiting distribution, and error;
//! * [`harness`] — Monte Carlo experiments that verify every closed-form
//!   prediction, with CSV/JSON persistence and reproducible seeding.
//!
//! Trial loops in the harness run on a rayon pool when the default
//! `parallel` feature is enabled and fall back to sequential iteration
//! otherwise; results are bit-identical either way because every trial
//! draws from its own counter-derived RNG stream.

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod lss;
pub mod models;
pub mod noise;
pub mod quad;
pub mod spectral;
pub mod stream;
pub mod transform;

pub use error::{Error, Result};
pub use spectral::Ratio;
