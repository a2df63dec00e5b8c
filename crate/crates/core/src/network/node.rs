//! A full node as a pure state machine: frames and clock ticks in,
//! outgoing frames out. Drivers (loopback harness, TCP runtime) own I/O.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use super::dedup::DedupCache;
use super::message::{is_gossip_frame, message_hash, Message};
use super::transport::Payload;
use crate::consensus::{seal_block, validate_seal, PoolError, SealingContext, TxPool};
use crate::contracts::{call_read, ActionEvent, ContractError, ReadCall, ReadResult, Receipt};
use crate::crypto::{Account, Address, Hash32};
use crate::ledger::{Block, BlockRejection, Chain, ImportedBlock, SignedTransaction};

/// Blocks per `ChainSlice` reply.
pub const SLICE_LIMIT: usize = 2048;

/// A sync request with no answer after this long may be re-sent.
pub const SYNC_TIMEOUT_MS: u64 = 2_000;

#[derive(Clone, Debug)]
pub enum Outgoing {
    Broadcast {
        payload: Payload,
        except: Option<Address>,
    },
    Direct {
        to: Address,
        payload: Payload,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("node is syncing")]
    Syncing,
    #[error("transaction rejected: {0}")]
    Rejected(#[from] PoolError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadInfo {
    pub height: u64,
    pub hash: Hash32,
    pub state_hash: Hash32,
    pub byte_size: u64,
    pub timestamp: u64,
    pub pending: usize,
    pub syncing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RejectionRecord {
    pub block_hash: Hash32,
    pub height: u64,
    pub from: Address,
    pub rejection: BlockRejection,
}

#[derive(Clone, Copy, Debug)]
struct SyncState {
    peer: Address,
    requested_at: u64,
}

pub struct Node {
    id: Address,
    sealer: Option<Account>,
    chain: Chain,
    pool: TxPool,
    seen: DedupCache,
    rejections: Vec<RejectionRecord>,
    imports: Vec<ImportedBlock>,
    sync: Option<SyncState>,
    chain_file: Option<PathBuf>,
    reorgs: u64,
}

impl Node {
    pub fn new(id: Address, chain: Chain) -> Node {
        Node {
            id,
            sealer: None,
            chain,
            pool: TxPool::new(),
            seen: DedupCache::default(),
            rejections: Vec::new(),
            imports: Vec::new(),
            sync: None,
            chain_file: None,
            reorgs: 0,
        }
    }

    /// Makes this node a sealer signing with `account`.
    pub fn with_sealer(mut self, account: Account) -> Node {
        self.sealer = Some(account);
        self
    }

    /// Persists every imported block to `path`, writing the current chain first.
    pub fn with_chain_file(mut self, path: PathBuf) -> crate::Result<Node> {
        self.chain.save(&path)?;
        self.chain_file = Some(path);
        Ok(self)
    }

    pub fn id(&self) -> Address {
        self.id
    }

    pub fn is_sealer(&self) -> bool {
        self.sealer.is_some()
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn pool(&self) -> &TxPool {
        &self.pool
    }

    pub fn rejections(&self) -> &[RejectionRecord] {
        &self.rejections
    }

    pub fn reorgs(&self) -> u64 {
        self.reorgs
    }

    pub fn is_syncing(&self) -> bool {
        self.sync.is_some()
    }

    /// Block imports since the last call, in import order.
    pub fn drain_imports(&mut self) -> Vec<ImportedBlock> {
        std::mem::take(&mut self.imports)
    }

    pub fn head(&self) -> HeadInfo {
        HeadInfo {
            height: self.chain.height(),
            hash: self.chain.head_hash(),
            state_hash: self.chain.state_hash(),
            byte_size: self.chain.byte_size(),
            timestamp: self.chain.head().timestamp,
            pending: self.pool.len(),
            syncing: self.is_syncing(),
        }
    }

    /// Next usable nonce for `sender`, counting transactions still pending.
    pub fn get_nonce(&self, sender: &Address) -> Result<u64, SubmitError> {
        if self.is_syncing() {
            return Err(SubmitError::Syncing);
        }
        let chain_next = self.chain.next_nonce(sender);
        let pending_next = self.pool.highest_nonce(sender).map_or(0, |n| n + 1);
        Ok(chain_next.max(pending_next))
    }

    pub fn get_blocks(&self, from: u64, to: u64) -> Vec<Block> {
        let head = self.chain.height();
        if from > head || from > to {
            return Vec::new();
        }
        (from..=to.min(head))
            .filter_map(|h| self.chain.block(h).cloned())
            .collect()
    }

    pub fn get_events(&self, from_block: u64) -> Vec<ActionEvent> {
        let events = self.chain.events();
        let start = events.partition_point(|e| e.block_height < from_block);
        events[start..].to_vec()
    }

    pub fn get_receipt(&self, tx_hash: &Hash32) -> Option<Receipt> {
        self.chain.receipt_for(tx_hash).cloned()
    }

    pub fn call_read(&self, call: &ReadCall) -> Result<ReadResult, ContractError> {
        call_read(self.chain.state(), call)
    }

    /// Local submission (node RPC). Accepted transactions are gossiped.
    pub fn submit_transaction(
        &mut self,
        tx: SignedTransaction,
    ) -> Result<(Hash32, Vec<Outgoing>), SubmitError> {
        if self.is_syncing() {
            return Err(SubmitError::Syncing);
        }
        let next = self.chain.next_nonce(&tx.sender);
        let msg = Message::NewTransaction(tx.clone());
        let hash = self.pool.insert(tx, next)?;
        let payload: Payload = Arc::new(msg.encode());
        self.seen.insert(message_hash(&payload));
        Ok((
            hash,
            vec![Outgoing::Broadcast {
                payload,
                except: None,
            }],
        ))
    }

    /// Asks `peer` for every block above our head.
    pub fn request_sync(&mut self, peer: Address, now_ms: u64) -> Vec<Outgoing> {
        self.sync = Some(SyncState {
            peer,
            requested_at: now_ms,
        });
        vec![Outgoing::Direct {
            to: peer,
            payload: Arc::new(Message::GetChainFrom(self.chain.height() + 1).encode()),
        }]
    }

    /// The peer a stalled sync went to, if the request has timed out.
    pub fn stalled_sync(&self, now_ms: u64) -> Option<Address> {
        self.sync
            .filter(|s| now_ms.saturating_sub(s.requested_at) >= SYNC_TIMEOUT_MS)
            .map(|s| s.peer)
    }

    pub fn cancel_sync(&mut self) {
        self.sync = None;
    }

    /// Clock tick: gives an in-turn sealer the chance to produce a block.
    pub fn tick(&mut self, now_ms: u64) -> Vec<Outgoing> {
        let Some(account) = &self.sealer else {
            return Vec::new();
        };
        if self.sync.is_some() {
            return Vec::new();
        }
        let block = seal_block(
            &SealingContext {
                account,
                chain: &self.chain,
                pool: &self.pool,
            },
            now_ms,
        );
        let Some(block) = block else {
            return Vec::new();
        };
        let msg = Message::NewBlock(block.clone());
        match self.import(block) {
            Ok(_) => {
                let payload: Payload = Arc::new(msg.encode());
                self.seen.insert(message_hash(&payload));
                vec![Outgoing::Broadcast {
                    payload,
                    except: None,
                }]
            }
            Err(r) => {
                warn!(rejection = %r, "own block failed validation");
                Vec::new()
            }
        }
    }

    /// Handles one encoded message received from `from`.
    pub fn handle_frame(&mut self, from: Address, payload: &Payload, now_ms: u64) -> Vec<Outgoing> {
        let gossip = is_gossip_frame(payload);
        if gossip && !self.seen.insert(message_hash(payload)) {
            return Vec::new();
        }
        let msg = match Message::decode(payload) {
            Ok(m) => m,
            Err(e) => {
                debug!(%from, error = %e, "undecodable frame");
                return Vec::new();
            }
        };
        let forward = || {
            vec![Outgoing::Broadcast {
                payload: payload.clone(),
                except: Some(from),
            }]
        };
        match msg {
            Message::NewTransaction(tx) => {
                let next = self.chain.next_nonce(&tx.sender);
                match self.pool.insert(tx, next) {
                    Ok(_) => forward(),
                    Err(e) => {
                        debug!(error = %e, "gossiped transaction not pooled");
                        Vec::new()
                    }
                }
            }
            Message::NewBlock(block) => self.on_new_block(from, block, now_ms, forward),
            Message::GetChainFrom(height) => {
                let end = height.saturating_add(SLICE_LIMIT as u64 - 1);
                let blocks = self.get_blocks(height, end);
                vec![Outgoing::Direct {
                    to: from,
                    payload: Arc::new(Message::ChainSlice(blocks).encode()),
                }]
            }
            Message::ChainSlice(blocks) => self.on_chain_slice(from, blocks, now_ms),
        }
    }

    fn on_new_block(
        &mut self,
        from: Address,
        block: Block,
        now_ms: u64,
        forward: impl FnOnce() -> Vec<Outgoing>,
    ) -> Vec<Outgoing> {
        let head = self.chain.height();
        let height = block.height;
        let hash = block.hash();
        if height > 0 && !validate_seal(&block, self.chain.sealers()) {
            self.record_rejection(hash, height, from, BlockRejection::BadSeal);
            return Vec::new();
        }
        match self.import(block.clone()) {
            Ok(_) => return forward(),
            Err(BlockRejection::BadLink(_)) if height > head + 1 => {
                if self.sync.is_none() {
                    return self.request_sync(from, now_ms);
                }
                return Vec::new();
            }
            Err(BlockRejection::BadLink(_)) if height >= 1 => {
                if self.chain.block_hash(height) == Some(hash) {
                    return Vec::new();
                }
                if self.chain.block_hash(height - 1) == Some(block.parent_hash) {
                    // Competing block at a height we already hold.
                    if let Ok(candidate) = self.chain.fork_with(height, &[block]) {
                        if self.adopt(candidate) {
                            return forward();
                        }
                    }
                    return Vec::new();
                }
                // Different history below this block: fetch it.
                if self.sync.is_none() {
                    self.sync = Some(SyncState {
                        peer: from,
                        requested_at: now_ms,
                    });
                    return vec![Outgoing::Direct {
                        to: from,
                        payload: Arc::new(Message::GetChainFrom(1).encode()),
                    }];
                }
                return Vec::new();
            }
            Err(rejection) => self.record_rejection(hash, height, from, rejection),
        }
        Vec::new()
    }

    fn on_chain_slice(&mut self, from: Address, blocks: Vec<Block>, now_ms: u64) -> Vec<Outgoing> {
        if self.sync.is_some_and(|s| s.peer == from) {
            self.sync = None;
        }
        let Some(first) = blocks.first() else {
            return Vec::new();
        };
        let first_height = first.height;
        let head = self.chain.height();
        let full = blocks.len() == SLICE_LIMIT;
        if first_height == head + 1 && first.parent_hash == self.chain.head_hash() {
            for block in blocks {
                let (h, hash) = (block.height, block.hash());
                if let Err(r) = self.import(block) {
                    self.record_rejection(hash, h, from, r);
                    return Vec::new();
                }
            }
            if full {
                return self.request_sync(from, now_ms);
            }
            return Vec::new();
        }
        if first_height > head + 1 {
            return self.request_sync(from, now_ms);
        }
        match self.chain.fork_with(first_height, &blocks) {
            Ok(candidate) => {
                let longer = candidate.height() > self.chain.height();
                if self.adopt(candidate) && full && longer {
                    return self.request_sync(from, now_ms);
                }
            }
            Err(BlockRejection::BadLink(_)) if first_height > 1 => {
                self.sync = Some(SyncState {
                    peer: from,
                    requested_at: now_ms,
                });
                return vec![Outgoing::Direct {
                    to: from,
                    payload: Arc::new(Message::GetChainFrom(1).encode()),
                }];
            }
            Err(r) => {
                let hash = blocks[0].hash();
                self.record_rejection(hash, first_height, from, r);
            }
        }
        Vec::new()
    }

    fn record_rejection(&mut self, block_hash: Hash32, height: u64, from: Address, r: BlockRejection) {
        debug!(height, %from, rejection = %r, "block rejected");
        self.rejections.push(RejectionRecord {
            block_hash,
            height,
            from,
            rejection: r,
        });
    }

    fn import(&mut self, block: Block) -> Result<ImportedBlock, BlockRejection> {
        let persist = self.chain_file.as_ref().map(|_| block.clone());
        let imported = self.chain.append_block(block)?;
        let state = self.chain.state();
        self.pool.prune(|s| state.next_nonce(s));
        if let (Some(path), Some(block)) = (&self.chain_file, persist) {
            if let Err(e) = Chain::append_to_file(path, &block) {
                warn!(error = %e, "failed to persist block");
            }
        }
        self.imports.push(imported.clone());
        Ok(imported)
    }

    /// Switches to `candidate` if fork choice prefers it. Transactions from
    /// abandoned blocks go back to the pool.
    fn adopt(&mut self, candidate: Chain) -> bool {
        if !candidate.is_better_than(&self.chain) {
            return false;
        }
        let fork = (1..=self.chain.height().min(candidate.height()))
            .find(|h| self.chain.block_hash(*h) != candidate.block_hash(*h))
            .unwrap_or(self.chain.height().min(candidate.height()) + 1);
        let orphaned: Vec<SignedTransaction> = self.chain.blocks()[fork as usize..]
            .iter()
            .flat_map(|b| b.transactions.iter().cloned())
            .collect();
        self.chain = candidate;
        self.reorgs += 1;
        let mut total = self
            .chain
            .events()
            .iter()
            .filter(|e| e.block_height < fork)
            .count() as u64;
        let mut bytes: u64 = self.chain.blocks()[..fork as usize]
            .iter()
            .map(Block::encoded_len)
            .sum();
        for h in fork..=self.chain.height() {
            let block = self.chain.block(h).expect("in range");
            let len = block.encoded_len();
            bytes += len;
            let events = self
                .chain
                .events()
                .iter()
                .filter(|e| e.block_height == h)
                .count();
            total += events as u64;
            self.imports.push(ImportedBlock {
                height: h,
                hash: self.chain.block_hash(h).expect("in range"),
                timestamp: block.timestamp,
                tx_count: block.transactions.len(),
                events,
                encoded_len: len,
                byte_size: bytes,
                total_events: total,
            });
        }
        for tx in orphaned {
            let next = self.chain.next_nonce(&tx.sender);
            let _ = self.pool.insert(tx, next);
        }
        let state = self.chain.state();
        self.pool.prune(|s| state.next_nonce(s));
        if let Some(path) = &self.chain_file {
            if let Err(e) = self.chain.save(path) {
                warn!(error = %e, "failed to rewrite chain file");
            }
        }
        true
    }
}
