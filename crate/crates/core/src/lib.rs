//! Numerics for backward doubly stochastic equations driven by
//! non-homogeneous Levy noise with finitely many jump sizes.
//!
//! The crate builds the orthonormalized power-jump martingale basis from a
//! characteristic triplet, simulates joint forward/backward sample paths,
//! solves (reflected) generalized backward doubly stochastic equations with
//! monotone drivers, and evaluates the induced solution fields of obstacle
//! integro-PDEs with nonlinear Neumann boundary data against a finite
//! difference oracle.

pub mod basis;
pub mod grid;
pub mod paths;
pub mod reflect;
pub mod solver;
pub mod doss;
pub mod error;
pub mod levy;
pub mod sipde;
pub mod timefn;

pub use error::{Error, Result};
