//! Core algorithms for just-in-time replacement of LLM calls with small
//! surrogate models.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds without `std`: token and cost accounting, recurring-task mining,
//! hashed-feature surrogate training, model search over a card store, and the
//! task lifecycle / monitoring rules. IO, HTTP, persistence and the CLI live
//! in the `jitr` crate.
#![no_std]
#![forbid(unsafe_code)]
#![warn(rust_2018_idioms)]

extern crate alloc;

pub mod clock;
pub mod cost;
mod error;
pub mod learn;
pub mod lifecycle;
pub mod miner;
pub mod monitor;
pub mod stats;
pub mod tokens;
pub mod zoo;

pub use error::{Error, Result};
