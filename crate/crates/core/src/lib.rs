//! Numerical toolkit for continuum-wise hyperbolic homeomorphisms on the
//! torus and the sphere.

pub mod acceptance;
pub mod chainrec;
pub mod continua;
pub mod cwmetric;
pub mod error;
pub mod experiment;
pub mod holonomy;
pub mod models;
pub mod periodic;
pub mod registry;
pub mod sectors;

pub use error::{CwError, Result};
