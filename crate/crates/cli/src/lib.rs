//! Library surface of the experiment harness, split out so integration
//! tests can drive configuration and grid execution in-process.

pub mod config;
pub mod runner;
