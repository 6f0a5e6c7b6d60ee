pub mod boundary;
pub mod curve;
pub mod encode;
pub mod ensemble;
pub mod error;
pub mod finspace;
pub mod io;
pub mod lnbnn;
pub mod metrics;
pub mod stroke;
pub mod synth;

pub use error::{Error, Result};
