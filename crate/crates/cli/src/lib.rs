//! Library surface of the command-line driver, shared with the test
//! suites.

pub mod commands;
pub mod format;
pub mod randgen;
pub mod repro;
