//! Logarithmic curvature flow on support functions of convex bodies.
//!
//! The flow `dh/dt = log(sigma_k(hess h + h I) f)` is integrated on grids of
//! `S^1` and `S^2`. Stationary points solve the (weighted)
//! Christoffel-Minkowski equation `sigma_k(hess h + h I) = 1/f`.

pub mod bodies;
pub mod cli;
pub mod elliptic;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod io;
mod krylov;
mod lp;
pub mod sphere;
pub mod symfunc;
pub mod verifier;
pub mod xi;

pub use error::{Error, Result};
