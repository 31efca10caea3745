pub mod dataset;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sim_ks;
pub mod sim_waves;
pub mod spectral;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
