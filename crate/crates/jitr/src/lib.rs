//! Gateway, ledger, jobs and command-line tooling around `jitr-core`.

pub mod artifact;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod engine;
pub mod ledger;
pub mod state;
pub mod trace;
pub mod upstream;
pub mod wire;
pub mod gateway;
pub mod simulate;
pub mod compare;
pub mod cli;
pub mod http;
