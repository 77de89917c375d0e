pub mod bench;
pub mod cli;
pub mod cubature;
pub mod error;
pub mod gp;
pub mod hyper;
pub mod kernels;
pub mod linalg;
pub mod measures;
pub mod polyspace;
pub mod quadrature;

pub use error::{Error, Result};
