//! Joint IRS passive beamforming and fronthaul compression for the C-RAN uplink.

pub mod auxiliary;
pub mod channel;
pub mod conic;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod rates;
pub mod scenario;
pub mod surrogate;

pub use error::{Error, Result};
