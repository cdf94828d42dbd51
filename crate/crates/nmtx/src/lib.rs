//! File formats, atomic output and the `nmtx` command line on top of
//! [`nmtx_core`].

pub mod atomic;
pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod formats;

pub use container::{load_lm, load_model, save_lm, save_model, Container};
pub use error::{NmtxError, Result};
