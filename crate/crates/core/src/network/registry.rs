use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::Address;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerInfo {
    pub peer_id: Address,
    pub endpoint: String,
}

/// Bootnode protocol, framed like peer messages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum BootRequest {
    Register(PeerInfo),
    List,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum BootResponse {
    Ack,
    Peers(Vec<PeerInfo>),
}

/// The bootnode's peer table: register and list, nothing more.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    peers: BTreeMap<Address, PeerInfo>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    /// Registers (or re-registers, replacing the endpoint) and returns every
    /// other known peer.
    pub fn register_and_discover(&mut self, me: PeerInfo) -> Vec<PeerInfo> {
        let id = me.peer_id;
        self.peers.insert(id, me);
        self.list().into_iter().filter(|p| p.peer_id != id).collect()
    }

    pub fn list(&self) -> Vec<PeerInfo> {
        self.peers.values().cloned().collect()
    }

    pub fn get(&self, id: &Address) -> Option<&PeerInfo> {
        self.peers.get(id)
    }

    pub fn handle(&mut self, req: BootRequest) -> BootResponse {
        match req {
            BootRequest::Register(info) => {
                self.peers.insert(info.peer_id, info);
                BootResponse::Ack
            }
            BootRequest::List => BootResponse::Peers(self.list()),
        }
    }
}
