pub mod algorithms;
pub mod convex_sets;
pub mod error;
pub mod harness;
pub mod instances;
pub mod objectives;
pub mod oco;
pub mod oracles;
pub mod vectorspace;

pub use error::{Error, Result};
