pub mod error;
pub mod excursions;
pub mod inference;
pub mod mesh;
pub mod model;
pub mod pipeline;
pub mod spde;
pub mod timeseries;
pub mod sparse;

pub use error::{Error, ErrorKind, Result};
