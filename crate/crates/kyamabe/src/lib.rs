pub mod conformal;
pub mod counterexamples;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod quadrature;
pub mod radial;
pub mod suites;
pub mod symmfunc;
pub mod variational;

pub use error::{Error, Result};
