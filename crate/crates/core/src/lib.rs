pub mod case;
pub mod check;
pub mod circuit;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod matpower;
pub mod metrics;
pub mod multi_period;
pub mod oracle;
pub mod report;
pub mod solver;
pub mod sparse;
pub mod synthetic;

pub use error::{Error, Result};
