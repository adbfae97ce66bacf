//! Peer effects for count outcomes on grouped directed networks.

pub mod dataset;
pub mod effects;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod network;
pub mod normal;
pub mod simulate;

pub use error::{Error, Result};
pub use dataset::Dataset;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
