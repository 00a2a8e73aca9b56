//! Scene configuration, frame-script replay and output writing for the
//! `ddgi` renderer.

pub mod config;
pub mod run;
pub mod script;

pub use config::{load_config, ConfigError, Loaded, RunConfig};
pub use run::{run, Replay, RunOptions, RunSummary};
