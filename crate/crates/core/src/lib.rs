//! Detection of periodic alarm sounds in noisy audio.

pub mod audio;
pub mod bench;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod nn;
pub mod nonmodel;
pub mod registry;
pub mod seeding;
pub mod sinusoid;
pub mod synth;
pub mod systems;
pub mod temporal;

pub use error::{Error, Result};
