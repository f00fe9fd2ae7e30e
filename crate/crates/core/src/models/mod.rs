//! Simulator models.

pub mod gaussian;
pub mod ising;
pub mod lv;
