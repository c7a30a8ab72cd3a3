pub mod error;
pub mod flow;
pub mod kempfness;
pub mod action;
pub mod convexity;
pub mod linalg;
pub mod manifold;
pub mod moment;
pub mod quadrature;
pub mod reduction;
pub mod report;
pub mod scenarios;
pub mod tolerances;

pub use error::{Error, Result};
pub use tolerances::Tolerances;
pub mod cli;
