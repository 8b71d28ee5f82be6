//! Loop-group pipeline for constant-mean-curvature surfaces in R^3.
//!
//! The crate builds CMC trinoids end to end: a meromorphic trinoid
//! potential is integrated to a loop-valued frame, the monodromy
//! representation is unitarized by a dressing loop, per-vertex Iwasawa
//! factorization produces the unitary frame, and the Sym formula maps it
//! to R^3. Delaunay surfaces of revolution are generated in closed form as
//! references, and every closing and asymptotics condition is tracked as a
//! numeric residual.

pub mod error;
pub mod factorize;
mod fft;
pub mod linalg;
pub mod loops;
pub mod potentials;

pub use error::{Error, Result};
