//! File formats, parallel execution, the external-model bridge and the
//! `xpe` command-line front-end on top of [`xpe_core`].

pub mod bridge;
pub mod cli;
pub mod csv_io;
pub mod error;
pub mod export;
pub mod model_io;
pub mod parallel;
pub mod report;
pub mod scenario_io;

pub use error::{Error, Result};
