//! Library surface of the experiment runner: config schema, execution, and
//! emission.  The `oodle` binary is a thin wrapper over these modules.

pub mod config;
pub mod emit;
pub mod runner;
