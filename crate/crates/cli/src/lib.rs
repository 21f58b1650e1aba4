//! Batch front end over `melnikov-core`: certificates, soundness sweeps,
//! zero reports, Melnikov sampling and basis fits.

pub mod args;
pub mod commands;
pub mod formats;
