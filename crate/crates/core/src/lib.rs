// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod bloch;
pub mod error;
pub mod lattice;
pub mod spline;
pub mod propagator;
pub mod semiclassics;
pub mod effective;
pub mod wigner;
pub mod config;
pub mod harness;
