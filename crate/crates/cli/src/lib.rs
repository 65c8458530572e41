//! Stages, configuration and artifact handling behind the `clem` binary.

pub mod artifacts;
pub mod config;
pub mod stages;
pub mod svg;
