//! Keller-Osserman theory for quasilinear inequalities with gradient terms
//! on the Heisenberg group: structural validation, decision of the
//! integrability conditions, explicit radial barriers and their numerical
//! certification.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod barrier;
pub mod cli;
pub mod error;
pub mod heisenberg;
pub mod ko;
pub mod profile;
pub mod quadrature;
pub mod roots;
pub mod transforms;
pub mod validate;
pub mod verify;

pub use error::{Error, Result};
