//! Signaling-game benchmark: hard-coded Sender languages, a trainable
//! recurrent Receiver, and a multi-seed harness measuring how fast each
//! language is acquired and how well it generalizes.

pub mod cli;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod languages;
pub mod receiver;
pub mod seeding;
pub mod tasks;
pub mod worlds;

pub use error::{Error, Result};
