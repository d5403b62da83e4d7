pub mod autodiff;
pub mod auxiliary;
pub mod data;
pub mod error;
pub mod mechanisms;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod params;
pub mod runner;
pub mod trainer;

pub use error::{Error, Result};
