//! Front-end for the `beamjam` binary: config loading, the run commands,
//! run manifests and the self-test suites.

pub mod manifest;
pub mod run;
pub mod selftest;
