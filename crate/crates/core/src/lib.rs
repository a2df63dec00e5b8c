//! Shipment tracking on a private proof-of-authority ledger, driven by a
//! deterministic megacity logistics simulation.

pub mod config;
pub mod consensus;
pub mod contracts;
pub mod crypto;
pub mod encoding;
pub mod error;
pub mod ledger;
pub mod manager;
pub mod metrics;
pub mod monitor;
pub mod network;
pub mod orchestrator;
pub mod rpc;
pub mod sim;

pub use config::ScenarioConfig;
pub use crypto::{create_account, Account, Address, Bytes, Hash32};
pub use error::{Error, Result};
