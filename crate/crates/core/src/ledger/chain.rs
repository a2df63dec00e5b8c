use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use super::block::{Block, GenesisInfo};
use super::transaction::verify_transaction;
use crate::consensus::{validate_seal, PoAConfig, SealerSet};
use crate::contracts::{execute_block, ActionEvent, ContractStore, Receipt};
use crate::crypto::{sha256, Address, Hash32};
use crate::encoding::canonical_decode;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "rejection", content = "detail", rename_all = "kebab-case")]
pub enum BlockRejection {
    #[error("bad-link: {0}")]
    BadLink(String),
    #[error("bad-seal")]
    BadSeal,
    #[error("bad-transaction: {0}")]
    BadTransaction(String),
    #[error("bad-state-hash: block claims {claimed}, execution gives {computed}")]
    BadStateHash { claimed: Hash32, computed: Hash32 },
}

impl BlockRejection {
    pub fn kind(&self) -> &'static str {
        match self {
            BlockRejection::BadLink(_) => "bad-link",
            BlockRejection::BadSeal => "bad-seal",
            BlockRejection::BadTransaction(_) => "bad-transaction",
            BlockRejection::BadStateHash { .. } => "bad-state-hash",
        }
    }
}

/// Summary of a successful import.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ImportedBlock {
    pub height: u64,
    pub hash: Hash32,
    pub timestamp: u64,
    pub tx_count: usize,
    pub events: usize,
    pub encoded_len: u64,
    /// Chain bytes including this block.
    pub byte_size: u64,
    /// Action events in the chain including this block.
    pub total_events: u64,
}

impl ImportedBlock {
    /// Console line printed by sealers for every imported block.
    pub fn console_line(&self) -> String {
        format!(
            "imported block height={} hash={} txs={} bytes={}",
            self.height,
            self.hash.short(),
            self.tx_count,
            self.byte_size
        )
    }
}

/// Append-only, fully validated block list plus the contract state at its head.
#[derive(Clone, Debug)]
pub struct Chain {
    blocks: Vec<Block>,
    hashes: Vec<Hash32>,
    byte_size: u64,
    sealers: SealerSet,
    poa: PoAConfig,
    state: ContractStore,
    receipts: Vec<Vec<Receipt>>,
    events: Vec<ActionEvent>,
    tx_index: HashMap<Hash32, (u64, u32)>,
}

impl Chain {
    pub fn from_genesis(genesis: Block) -> Result<Chain> {
        let info: &GenesisInfo = genesis
            .genesis
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("block 0 carries no genesis info".into()))?;
        if genesis.height != 0
            || !genesis.parent_hash.is_zero()
            || !genesis.sealer.is_zero()
            || !genesis.transactions.is_empty()
        {
            return Err(Error::InvalidArgument("malformed genesis block".into()));
        }
        info.poa.validate()?;
        let sealers = SealerSet::new(info.sealers.clone())?;
        let state = info.initial_store();
        if state.state_hash() != genesis.state_hash {
            return Err(Error::InvalidArgument("genesis state hash mismatch".into()));
        }
        let encoded = genesis.encode();
        let poa = info.poa;
        Ok(Chain {
            hashes: vec![sha256(&encoded)],
            byte_size: encoded.len() as u64,
            blocks: vec![genesis],
            sealers,
            poa,
            state,
            receipts: vec![Vec::new()],
            events: Vec::new(),
            tx_index: HashMap::new(),
        })
    }

    pub fn genesis(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn genesis_hash(&self) -> Hash32 {
        self.hashes[0]
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn head_hash(&self) -> Hash32 {
        *self.hashes.last().expect("chain always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.head().height
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(usize::try_from(height).ok()?)
    }

    pub fn block_hash(&self, height: u64) -> Option<Hash32> {
        self.hashes.get(usize::try_from(height).ok()?).copied()
    }

    pub fn byte_size(&self) -> u64 {
        self.byte_size
    }

    pub fn sealers(&self) -> &SealerSet {
        &self.sealers
    }

    pub fn poa(&self) -> &PoAConfig {
        &self.poa
    }

    pub fn state(&self) -> &ContractStore {
        &self.state
    }

    pub fn state_hash(&self) -> Hash32 {
        self.head().state_hash
    }

    pub fn events(&self) -> &[ActionEvent] {
        &self.events
    }

    pub fn receipts(&self, height: u64) -> &[Receipt] {
        usize::try_from(height)
            .ok()
            .and_then(|h| self.receipts.get(h))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn all_receipts(&self) -> impl Iterator<Item = &Receipt> {
        self.receipts.iter().flatten()
    }

    /// Block height and index of an included transaction.
    pub fn find_transaction(&self, hash: &Hash32) -> Option<(u64, u32)> {
        self.tx_index.get(hash).copied()
    }

    pub fn receipt_for(&self, hash: &Hash32) -> Option<&Receipt> {
        let (h, i) = self.find_transaction(hash)?;
        self.receipts(h).get(i as usize)
    }

    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.state.next_nonce(sender)
    }

    /// Runs every validity check on a candidate head extension and returns
    /// the execution outcome, without mutating the chain.
    fn check(&self, block: &Block) -> Result<crate::contracts::BlockOutcome, BlockRejection> {
        let head = self.head();
        if block.height != head.height + 1 {
            return Err(BlockRejection::BadLink(format!(
                "height {} does not follow head {}",
                block.height, head.height
            )));
        }
        if block.parent_hash != self.head_hash() {
            return Err(BlockRejection::BadLink(format!(
                "parent {} is not head {}",
                block.parent_hash.short(),
                self.head_hash().short()
            )));
        }
        if block.genesis.is_some() {
            return Err(BlockRejection::BadLink("genesis info outside block 0".into()));
        }
        if !validate_seal(block, &self.sealers) {
            return Err(BlockRejection::BadSeal);
        }
        if block.transactions.len() > self.poa.max_txs_per_block {
            return Err(BlockRejection::BadTransaction(format!(
                "{} transactions exceed the limit of {}",
                block.transactions.len(),
                self.poa.max_txs_per_block
            )));
        }
        let mut expected: BTreeMap<Address, u64> = BTreeMap::new();
        for (i, tx) in block.transactions.iter().enumerate() {
            if !verify_transaction(tx) {
                return Err(BlockRejection::BadTransaction(format!(
                    "transaction {i} has an invalid signature"
                )));
            }
            let next = expected
                .entry(tx.sender)
                .or_insert_with(|| self.state.next_nonce(&tx.sender));
            if tx.nonce != *next {
                return Err(BlockRejection::BadTransaction(format!(
                    "transaction {i} from {} has nonce {}, expected {}",
                    tx.sender, tx.nonce, next
                )));
            }
            *next += 1;
        }
        let outcome = execute_block(&self.state, block.height, &block.transactions);
        let computed = outcome.state_hash();
        if computed != block.state_hash {
            return Err(BlockRejection::BadStateHash {
                claimed: block.state_hash,
                computed,
            });
        }
        Ok(outcome)
    }

    /// Validates `block` against the head and appends it. On rejection the
    /// chain is unchanged.
    pub fn append_block(&mut self, block: Block) -> Result<ImportedBlock, BlockRejection> {
        let outcome = self.check(&block)?;
        let encoded = block.encode();
        let hash = sha256(&encoded);
        let encoded_len = encoded.len() as u64;
        for (i, tx) in block.transactions.iter().enumerate() {
            self.tx_index.insert(tx.hash(), (block.height, i as u32));
        }
        let events = outcome.events.len();
        self.state = outcome.store;
        self.events.extend(outcome.events);
        self.receipts.push(outcome.receipts);
        self.byte_size += encoded_len;
        self.hashes.push(hash);
        let imported = ImportedBlock {
            height: block.height,
            hash,
            timestamp: block.timestamp,
            tx_count: block.transactions.len(),
            events,
            encoded_len,
            byte_size: self.byte_size,
            total_events: self.events.len() as u64,
        };
        self.blocks.push(block);
        Ok(imported)
    }

    /// Rebuilds a chain from genesis, validating every block.
    pub fn replay(blocks: impl IntoIterator<Item = Block>) -> Result<Chain> {
        let mut iter = blocks.into_iter();
        let genesis = iter
            .next()
            .ok_or_else(|| Error::InvalidArgument("no genesis block".into()))?;
        let mut chain = Chain::from_genesis(genesis)?;
        for block in iter {
            let height = block.height;
            chain
                .append_block(block)
                .map_err(|r| Error::ChainFile(format!("block {height} rejected: {r}")))?;
        }
        Ok(chain)
    }

    /// Candidate chain sharing our first `keep` blocks, followed by `tail`.
    /// Blocks of `tail` that fail validation end the candidate there.
    pub fn fork_with(&self, keep: u64, tail: &[Block]) -> Result<Chain, BlockRejection> {
        let keep = (keep as usize).clamp(1, self.blocks.len());
        let mut candidate = Chain::replay(self.blocks[..keep].iter().cloned())
            .expect("a prefix of a valid chain is valid");
        let mut first = true;
        for block in tail {
            match candidate.append_block(block.clone()) {
                Ok(_) => first = false,
                Err(r) if first => return Err(r),
                Err(_) => break,
            }
        }
        Ok(candidate)
    }

    /// Fork choice: longer wins; on equal length the lower head hash wins.
    pub fn is_better_than(&self, other: &Chain) -> bool {
        (self.height(), std::cmp::Reverse(self.head_hash()))
            > (other.height(), std::cmp::Reverse(other.head_hash()))
    }

    /// Writes the whole chain as one canonical block per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for block in &self.blocks {
            out.write_all(&block.encode())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Appends one block line to an existing chain file.
    pub fn append_to_file(path: &Path, block: &Block) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = block.encode();
        line.push(b'\n');
        f.write_all(&line)?;
        Ok(())
    }

    /// Loads and fully re-validates a chain file.
    pub fn load(path: &Path) -> Result<Chain> {
        let reader = BufReader::new(File::open(path)?);
        let mut blocks = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let block: Block = canonical_decode(line.as_bytes())
                .map_err(|e| Error::ChainFile(format!("line {}: {e}", n + 1)))?;
            blocks.push(block);
        }
        Chain::replay(blocks)
    }
}
