//! Feedback coding for the two-user Gaussian multiple-access channel with
//! interference known non-causally at both transmitters, and rate-region
//! tools for finite-alphabet MACs with state.

pub mod codec;
pub mod dm;
pub mod error;
pub mod exec;
pub mod montecarlo;
pub mod regions;
pub mod riccati;

pub use error::{Error, Result};
pub use exec::Exec;
