//! Augmented Lagrangian solver for convex quadratic models with Lagrange
//! multiplier diagnostics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod alm;
pub mod catalog;
pub mod commands;
pub mod io;
pub mod linalg;
pub mod multipliers;
pub mod ocp;
pub mod problem;
pub mod sets;
