//! Proof-of-authority: strict round-robin sealing over a fixed sealer set.

mod pool;
mod sealer;

pub use pool::{PoolError, TxPool};
pub use sealer::{seal_block, SealingContext};

use serde::{Deserialize, Serialize};

use crate::crypto::{verify_signature, Address};
use crate::error::{Error, Result};
use crate::ledger::Block;

/// Empty blocks are sealed only when this many periods pass without one.
pub const KEEPALIVE_PERIODS: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoAConfig {
    pub block_period_ms: u64,
    pub max_txs_per_block: usize,
}

impl Default for PoAConfig {
    fn default() -> Self {
        PoAConfig {
            block_period_ms: 500,
            max_txs_per_block: 256,
        }
    }
}

impl PoAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_period_ms == 0 || self.max_txs_per_block == 0 {
            return Err(Error::InvalidConfig(
                "block_period_ms and max_txs_per_block must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealerSet {
    sealers: Vec<Address>,
}

impl SealerSet {
    pub fn new(sealers: Vec<Address>) -> Result<SealerSet> {
        if sealers.is_empty() {
            return Err(Error::InvalidConfig("sealer set must not be empty".into()));
        }
        let mut sorted = sealers.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != sealers.len() {
            return Err(Error::InvalidConfig("duplicate sealer address".into()));
        }
        Ok(SealerSet { sealers })
    }

    pub fn len(&self) -> usize {
        self.sealers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sealers.is_empty()
    }

    pub fn contains(&self, who: &Address) -> bool {
        self.sealers.contains(who)
    }

    pub fn addresses(&self) -> &[Address] {
        &self.sealers
    }

    /// In-turn sealer for `height`: `sealers[(height - 1) mod n]`.
    pub fn expected_sealer(&self, height: u64) -> Result<Address> {
        if height == 0 {
            return Err(Error::InvalidArgument("genesis has no sealer".into()));
        }
        let n = self.sealers.len() as u64;
        Ok(self.sealers[((height - 1) % n) as usize])
    }
}

/// True iff `block` comes from the in-turn sealer and carries its valid seal.
pub fn validate_seal(block: &Block, sealers: &SealerSet) -> bool {
    let Ok(expected) = sealers.expected_sealer(block.height) else {
        return false;
    };
    block.sealer == expected
        && verify_signature(
            &expected,
            &block.sealer_key,
            &block.seal_digest(),
            &block.seal_signature,
        )
}
