//! Symbolic discovery of hyperelastic strain energy functions from
//! multi-mode stress data.

pub mod expr;
pub mod mechanics;
pub mod objective;
pub mod evolution;
pub mod datagen;
pub mod convexity;
pub mod workflow;
