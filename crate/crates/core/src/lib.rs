pub mod ga;
pub mod plant;
pub mod service;
pub mod orchestrator;
pub mod analysis;
pub mod config;
pub mod cli;
