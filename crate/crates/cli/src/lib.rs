//! Operator pipeline around `slpn-core`: corpus preparation, training,
//! evaluation and report comparison.

pub mod commands;
pub mod config;
pub mod pipeline;
