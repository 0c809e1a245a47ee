//! Experiment harness for the TMC estimators: configurable sweeps that write
//! CSV, a timing benchmark for cost as a function of sample count, and a
//! verification suite of oracle checks.

pub mod checks;
pub mod config;
pub mod cost;
pub mod error;
pub mod oracle;
pub mod record;
pub mod sweep;

pub use error::HarnessError;
