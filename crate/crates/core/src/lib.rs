//! Linear statistics of the sine determinantal point process: sampling,
//! variance identities, Hankel–Fredholm determinants and Kolmogorov–Smirnov
//! rate bounds.

pub mod cltlab;
pub mod error;
pub mod funcspace;
pub mod hankel;
pub mod quad;
pub mod selftest;
pub mod sinedpp;

pub use error::{Error, Result};
