//! Complex scaling of radial Laplacians on the hyperbolic plane and on
//! SL(3,R)/SO(3): coefficient fields, scaling maps, finite-difference
//! assembly, rotated spectra and continued resolvent matrix elements.

// `!(x > 0.0)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod discretize;
pub mod error;
pub mod geometry;
pub mod io;
pub mod operators;
pub mod oracle;
pub mod scaling;
pub mod sparse;
pub mod special;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::Space;
pub use num_complex::Complex64;

/// Run dense and sparse kernels single-threaded, so results do not depend
/// on the machine's thread count.
pub fn use_sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}
