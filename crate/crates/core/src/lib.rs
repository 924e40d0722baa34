//! Thin star domains shrinking onto a metric star graph.
//!
//! The crate builds the planar thin domains `Ω_ε` around a star graph, the
//! rescaled measure and squeezed potential living on them, solves the
//! Neumann-plus-potential eigenproblem there with P1 finite elements, solves
//! the limiting Kirchhoff–delta problem on the graph, and provides the
//! diagnostics used to check that the former converges to the latter.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Dense numeric kernels index several arrays with one loop counter.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod eigen;
pub mod error;
pub mod fem2d;
pub mod geometry;
pub mod graph_spectra;
pub mod harness;
pub mod mesh2d;
pub mod quadrature;
pub mod sparse;
pub mod star_graph;
pub mod thin_domain;

pub use error::{Error, Result};

/// Volume of the one-dimensional unit ball, the cross-section constant in
/// the planar setting.
pub const OMEGA: f64 = 2.0;
