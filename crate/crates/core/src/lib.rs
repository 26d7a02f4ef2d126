//! Self-affine measures in `R^d`, `d >= 2`: word algebra and stopping-time
//! decompositions, exact and sampled Fourier transforms, random walks of the
//! transposed linear parts on the sphere, renewal and transfer operators, and
//! a decay-experiment pipeline built on top of them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod decay;
pub mod error;
pub mod fourier;
pub mod ifs;
pub mod linalg;
pub mod props;
pub mod renewal;
pub mod report;
pub mod rng;
pub mod sphere;
pub mod transfer;
pub mod words;

pub use error::{Error, Result, Violation, ViolationKind};
pub use ifs::{validate, AffineMap, AffineSystem, RawMap, RawSystem};
pub use linalg::Matrix;
pub use num_complex::Complex64;
pub use words::{compose, norm_family, stopping_set, StoppingSet, Word};
