//! Fourth-order tension fields, stress-energy tensors and their identities
//! for maps between Riemannian manifolds, on uniform grids.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`, the precision every experiment runs in.

pub mod calculus;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod manifold;
pub mod random;
pub mod scalar;
pub mod stress;
pub mod tension;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Grid = grid::DomainGrid<f64>;
pub type Metric = grid::DomainMetric<f64>;
pub type Target = manifold::ChartTarget<f64>;
pub type Map<'a> = calculus::MapField<'a, f64>;
pub type Bundle<'a> = calculus::Pullback<'a, f64>;
pub type Field = grid::NodeField<f64>;
pub type Tensor = calculus::BundleTensor<f64>;
