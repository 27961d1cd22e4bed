pub mod covariance;
pub mod criterion;
pub mod data;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod hyperlearn;
pub mod linalg;
pub mod pitc;
pub mod selector;
pub mod verify;

pub use error::{Error, Result};
