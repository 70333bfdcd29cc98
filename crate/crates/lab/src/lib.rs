//! IO layer of the sponge laboratory: stable text file formats, the mock
//! translation service with its black-box client, wall-clock and
//! file-backed energy measurement, and the config-driven experiment
//! runner behind the `spongelab` CLI.

pub mod config;
pub mod experiments;
pub mod formats;
pub mod measure;
pub mod service;
