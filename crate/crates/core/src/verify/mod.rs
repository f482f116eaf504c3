//! Independent numerical certification of the identities.

pub mod convergence;
pub mod cutoff;
pub mod pohozaev;
pub mod variation;
