use serde::{Deserialize, Serialize};

use super::transaction::SignedTransaction;
use crate::consensus::PoAConfig;
use crate::contracts::{ContractStore, MapBounds};
use crate::crypto::{Account, Address, Bytes, Hash32};
use crate::encoding::{canonical_encode, canonical_hash};

/// Network parameters fixed at genesis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisInfo {
    pub sealers: Vec<Address>,
    pub admin: Address,
    pub authorized: Vec<Address>,
    pub bounds: MapBounds,
    pub poa: PoAConfig,
}

impl GenesisInfo {
    pub fn initial_store(&self) -> ContractStore {
        ContractStore::new(self.admin, self.authorized.iter().copied(), self.bounds)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Hash32,
    /// Milliseconds on the sealing node's clock since the network started.
    pub timestamp: u64,
    pub sealer: Address,
    pub sealer_key: Bytes,
    pub transactions: Vec<SignedTransaction>,
    pub state_hash: Hash32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genesis: Option<GenesisInfo>,
    pub seal_signature: Bytes,
}

impl Block {
    pub fn genesis(info: GenesisInfo) -> Block {
        let state_hash = info.initial_store().state_hash();
        Block {
            height: 0,
            parent_hash: Hash32::ZERO,
            timestamp: 0,
            sealer: Address::ZERO,
            sealer_key: Bytes::default(),
            transactions: Vec::new(),
            state_hash,
            genesis: Some(info),
            seal_signature: Bytes::default(),
        }
    }

    /// Builds and signs a block; `sealer` must be the holder of the seal key.
    pub fn sealed(
        sealer: &Account,
        height: u64,
        parent_hash: Hash32,
        timestamp: u64,
        transactions: Vec<SignedTransaction>,
        state_hash: Hash32,
    ) -> Block {
        let mut block = Block {
            height,
            parent_hash,
            timestamp,
            sealer: sealer.address(),
            sealer_key: sealer.public_key().clone(),
            transactions,
            state_hash,
            genesis: None,
            seal_signature: Bytes::default(),
        };
        block.reseal(sealer);
        block
    }

    pub fn reseal(&mut self, sealer: &Account) {
        self.seal_signature = sealer.sign(&self.seal_digest());
    }

    /// SHA-256 over the canonical encoding of every field except the seal.
    pub fn seal_digest(&self) -> Hash32 {
        let mut tree = serde_json::to_value(self).expect("blocks serialize");
        tree.as_object_mut()
            .expect("block is an object")
            .remove("seal_signature");
        canonical_hash(&tree)
    }

    pub fn hash(&self) -> Hash32 {
        canonical_hash(self)
    }

    pub fn encode(&self) -> Vec<u8> {
        canonical_encode(self)
    }

    pub fn encoded_len(&self) -> u64 {
        self.encode().len() as u64
    }
}
