//! Batch frontend for the audit toolkit: JSON configs in, JSON reports and
//! plot-ready CSV out, plus analytics-log decoding and secure-aggregation
//! simulation. All subcommand logic lives here so integration tests can
//! drive it without spawning processes.

pub mod commands;
pub mod config;
pub mod record;
pub mod registry;
