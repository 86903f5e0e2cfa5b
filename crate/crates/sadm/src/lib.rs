//! PNG IO, schedule tables, the verification harness and the `sadm` command
//! line on top of [`sadm_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod table;
pub mod verify;

pub use error::{Error, Result};
