use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use thiserror::Error;

use crate::crypto::{Address, Hash32};
use crate::ledger::{verify_transaction, SignedTransaction};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("signature does not verify")]
    BadSignature,
    #[error("nonce {nonce} already used; next is {expected}")]
    StaleNonce { nonce: u64, expected: u64 },
    #[error("transaction already pending")]
    Duplicate,
    #[error("a different transaction already holds nonce {nonce}")]
    NonceTaken { nonce: u64 },
}

/// Verified transactions waiting for a block, queued per sender by nonce
/// and stamped with their arrival order.
#[derive(Clone, Debug, Default)]
pub struct TxPool {
    pending: BTreeMap<Address, BTreeMap<u64, (u64, SignedTransaction)>>,
    hashes: HashSet<Hash32>,
    arrivals: u64,
}

impl TxPool {
    pub fn new() -> TxPool {
        TxPool::default()
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    pub fn contains(&self, hash: &Hash32) -> bool {
        self.hashes.contains(hash)
    }

    /// `chain_next` is the sender's next nonce according to the local chain.
    pub fn insert(&mut self, tx: SignedTransaction, chain_next: u64) -> Result<Hash32, PoolError> {
        if !verify_transaction(&tx) {
            return Err(PoolError::BadSignature);
        }
        if tx.nonce < chain_next {
            return Err(PoolError::StaleNonce {
                nonce: tx.nonce,
                expected: chain_next,
            });
        }
        let hash = tx.hash();
        let queue = self.pending.entry(tx.sender).or_default();
        if let Some((_, existing)) = queue.get(&tx.nonce) {
            return Err(if existing.hash() == hash {
                PoolError::Duplicate
            } else {
                PoolError::NonceTaken { nonce: tx.nonce }
            });
        }
        queue.insert(tx.nonce, (self.arrivals, tx));
        self.arrivals += 1;
        self.hashes.insert(hash);
        Ok(hash)
    }

    /// Highest pending nonce for `sender`, if any.
    pub fn highest_nonce(&self, sender: &Address) -> Option<u64> {
        self.pending
            .get(sender)
            .and_then(|q| q.keys().next_back().copied())
    }

    /// Up to `limit` transactions runnable now, oldest arrival first while
    /// keeping each sender's nonces in order. Per sender only the gap-free
    /// run starting at the chain's next nonce qualifies.
    pub fn executable(
        &self,
        next_nonce: impl Fn(&Address) -> u64,
        limit: usize,
    ) -> Vec<SignedTransaction> {
        let runs: Vec<Vec<&(u64, SignedTransaction)>> = self
            .pending
            .iter()
            .map(|(sender, queue)| {
                let mut expect = next_nonce(sender);
                queue
                    .range(expect..)
                    .take_while(|(nonce, _)| {
                        let ok = **nonce == expect;
                        expect += 1;
                        ok
                    })
                    .map(|(_, entry)| entry)
                    .collect()
            })
            .collect();
        let mut heads: BinaryHeap<Reverse<(u64, usize, usize)>> = runs
            .iter()
            .enumerate()
            .filter_map(|(r, run)| run.first().map(|(seq, _)| Reverse((*seq, r, 0))))
            .collect();
        let mut out = Vec::new();
        while out.len() < limit {
            let Some(Reverse((_, r, i))) = heads.pop() else {
                break;
            };
            out.push(runs[r][i].1.clone());
            if let Some((seq, _)) = runs[r].get(i + 1) {
                heads.push(Reverse((*seq, r, i + 1)));
            }
        }
        out
    }

    /// Drops everything the chain has already consumed.
    pub fn prune(&mut self, next_nonce: impl Fn(&Address) -> u64) {
        let hashes = &mut self.hashes;
        self.pending.retain(|sender, queue| {
            let next = next_nonce(sender);
            let keep = queue.split_off(&next);
            for (_, tx) in queue.values() {
                hashes.remove(&tx.hash());
            }
            *queue = keep;
            !queue.is_empty()
        });
    }

    pub fn clear(&mut self) {
        self.pending.clear();
        self.hashes.clear();
        self.arrivals = 0;
    }
}
