pub mod asymptotics;
pub mod boundary;
pub mod discretize;
pub mod error;
pub mod expfam;
pub mod mixture;
pub mod quadrature;
pub mod simplex;
pub mod spectrum;

pub use error::{Error, Result};
