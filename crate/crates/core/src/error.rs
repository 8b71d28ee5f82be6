use thiserror::Error;

/// Errors reported by the factorization, potential, holonomy and
/// unitarization stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("loop is not real symmetric: max |f - f*| = {0:.3e}")]
    NotRealSymmetric(f64),
    #[error("loop has negative circle samples: min sample = {0:.3e}")]
    NegativeSamples(f64),
    #[error("loop is identically zero")]
    IdenticallyZero,
    #[error("circle zero at angle {theta:.6} is not of multiplicity two (f''={second_deriv:.3e})")]
    HigherOrderZero { theta: f64, second_deriv: f64 },
    #[error("loop is not Hermitian symmetric: max |X - X*| = {0:.3e}")]
    NotHermitianSymmetric(f64),
    #[error("loop is not positive semidefinite: min eigenvalue = {0:.3e}")]
    NotPsd(f64),
    #[error("determinant is identically zero within tolerance")]
    DegenerateDeterminant,
    #[error("spectral factorization did not converge in {iters} iterations (last update {last_update:.3e})")]
    SpectralFactorizationDiverged { iters: usize, last_update: f64 },
    #[error("input loop is singular even after ridge regularization (min |det| = {0:.3e})")]
    SingularInput(f64),
    #[error("weight {0} outside (-inf, 1] \\ {{0}}")]
    WeightOutOfRange(f64),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("gauge is singular at z = {z} (|det g| = {det:.3e})")]
    SingularGauge { z: num_complex::Complex<f64>, det: f64 },
    #[error("upper-right potential entry vanishes at z = {0}")]
    ZeroUpperEntry(num_complex::Complex<f64>),
    #[error("integration path comes within {dist:.3e} of pole {pole} (minimum {min:.3e})")]
    PoleTooClose { pole: num_complex::Complex<f64>, dist: f64, min: f64 },
    #[error("step size underflow at z = {0} during ODE integration")]
    StepUnderflow(num_complex::Complex<f64>),
    #[error("eigenvalue branch matching jumped by {0:.3} between adjacent samples")]
    DiscontinuousBranch(f64),
    #[error("kernel is not numerically one-dimensional on {flagged} of {total} samples")]
    KernelDimensionCollapse { flagged: usize, total: usize },
    #[error("unitarity residual {0:.3e} exceeds pipeline threshold")]
    UnitarityResidualExceeded(f64),
    #[error("kernel section loses {discarded:.3e} of its energy under band truncation")]
    SectionTruncation { discarded: f64 },
    #[error("surface periods fail to close: seam mismatch {mismatch:.3e} (threshold {threshold:.3e})")]
    ClosureFailure { mismatch: f64, threshold: f64 },
    #[error("mesh does not reach {required} periods into the end (found {found})")]
    InsufficientEndDepth { required: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
