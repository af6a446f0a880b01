//! Command-line and REST control plane for the sensor traffic generator.
//!
//! The CLI subcommands and the `POST /api/runs` roles share the parameter
//! structs in [`params`] and the executor in [`runs`].

pub mod api;
pub mod cli;
pub mod logbuf;
pub mod openapi;
pub mod params;
pub mod runs;
pub mod stats;
