//! Numerical building blocks shared by the simulation and the closed-form theory.

pub mod quadrature;
pub mod summation;

pub use summation::CompensatedSum;
