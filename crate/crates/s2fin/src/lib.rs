//! Scene containers, synthetic scenes, frequency analysis, file formats and
//! command implementations around the `s2fin-core` network.

pub mod analysis;
pub mod cli;
pub mod container;
pub mod error;
pub mod paramfile;
pub mod pnm;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
