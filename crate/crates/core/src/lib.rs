//! Log-normal multifractal random measures on a grid, multi-step optimal
//! transport to the Lebesgue measure, and the geometric and probabilistic
//! constructions built on top of it.

pub mod chaos;
pub mod error;
pub mod field;
pub mod geometry;
pub mod header;
pub mod io;
pub mod kpz;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod timechange;
pub mod transport;

pub use error::{Error, Result};
pub use model::ModelParams;

/// A point of `R^m` for `m <= 2`; in dimension one the second coordinate is 0.
pub type Point = [f64; 2];
