pub mod bootstrap;
pub mod cb_engine;
pub mod deriv_band;
pub mod error;
pub mod estimators;
pub mod frcb;
pub mod rng;
pub mod shape;
pub mod simkit;

pub use error::{Error, Result};
