//! Export service, loopback client, benchmark harness and command line for
//! the ledgerstream engine.

pub mod bench;
pub mod cli;
pub mod client;
pub mod service;
