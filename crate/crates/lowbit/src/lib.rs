//! IO, experiments and the command-line front end for [`lowbit_core`].

pub mod acceptance;
pub mod checkpoint;
pub mod harness;

pub use lowbit_core as core;
