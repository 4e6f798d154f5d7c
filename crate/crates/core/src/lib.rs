pub mod coinc;
pub mod error;
pub mod estimate;
pub mod fitmodel;
pub mod io;
pub mod phasematch;
pub mod pipeline;
pub mod registry;
pub mod tables;
pub mod twinstream;

pub use error::{Error, Result};
