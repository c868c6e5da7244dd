//! Operations shell over `gridops-core`: scenario runner with an
//! event-sourced store, report rendering, HTTP API and CLI.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod journal;
pub mod reports;

pub use config::ScenarioConfig;
pub use engine::{Command, Engine, EngineError, Outcome, State};
pub use reports::{render, state_digest, Format, Report};
