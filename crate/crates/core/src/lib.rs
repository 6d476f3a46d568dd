//! Dual-quaternion networks for sound event localization and detection with
//! two first-order ambisonic microphones.

pub mod ambisonics;
pub mod error;
pub mod hypercomplex;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
