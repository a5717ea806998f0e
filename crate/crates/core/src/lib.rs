//! Fully implicit incompressible two-phase flow in porous media driven by
//! multi-perforation wells, solved either with Newton's method or with an
//! aggregation-based FAS nonlinear multigrid cycle whose coarse grids keep
//! perforated cells away from aggregate interfaces.

pub mod assembly;
pub mod driver;
pub mod error;
pub mod fas;
pub mod fluid;
pub mod grid;
pub mod hierarchy;
pub mod linsolve;
pub mod partition;
pub mod smoother;
pub mod sparse;
pub mod wells;

pub use error::{Error, Result};
