//! Multi-block ADMM for nonconvex problems with sphere, Stiefel and Euclidean
//! blocks coupled by a linear constraint.

// `!(x > 0.0)` style checks reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod error;
pub mod io;
pub mod manifold;
pub mod problem;
pub mod prox;
pub mod solver;

pub use error::{Error, Result};
pub use manifold::{ManifoldKind, ManifoldSpec, Point};
