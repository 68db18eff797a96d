//! Library surface of the vimu CLI: experiment configuration, synthesis
//! and assembly stages, the end-to-end runner, and the demo-task generator.
//! The binary in `main.rs` is a thin argument-parsing shell over this.

// `!(x > 0.0)` guards reject NaN as well as non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod demo;
pub mod manifest;
pub mod stages;
pub mod synth;
