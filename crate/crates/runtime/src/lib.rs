//! Live deployment over real sockets: TCP gossip between nodes, a bootnode
//! registry, node RPC and action managers over HTTP.

pub mod bootnode;
pub mod client;
pub mod launch;
pub mod manager;
pub mod monitor;
pub mod node;
pub mod p2p;

mod error;

pub use error::{RuntimeError, RuntimeResult};

use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds since a shared origin; block timestamps use this.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetClock {
    pub origin_unix_ms: u64,
}

impl NetClock {
    pub fn starting_now() -> NetClock {
        NetClock {
            origin_unix_ms: unix_ms(),
        }
    }

    pub fn now_ms(&self) -> u64 {
        unix_ms().saturating_sub(self.origin_unix_ms)
    }
}

pub fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
