use super::pool::TxPool;
use super::KEEPALIVE_PERIODS;
use crate::contracts::execute_block;
use crate::crypto::Account;
use crate::ledger::{Block, Chain};

/// Everything a sealer needs to decide whether, and what, to seal.
pub struct SealingContext<'a> {
    pub account: &'a Account,
    pub chain: &'a Chain,
    pub pool: &'a TxPool,
}

/// Seals the next block if this node is in turn, the period has elapsed and
/// there is work (or a keepalive is due). The pool is left untouched; it is
/// pruned when the block is imported.
pub fn seal_block(ctx: &SealingContext<'_>, now_ms: u64) -> Option<Block> {
    let chain = ctx.chain;
    let head = chain.head();
    let height = head.height + 1;
    let in_turn = chain.sealers().expected_sealer(height).ok()? == ctx.account.address();
    if !in_turn {
        return None;
    }
    let period = chain.poa().block_period_ms;
    let since_head = now_ms.saturating_sub(head.timestamp);
    if since_head < period {
        return None;
    }
    let state = chain.state();
    let txs = ctx
        .pool
        .executable(|s| state.next_nonce(s), chain.poa().max_txs_per_block);
    if txs.is_empty() && since_head < KEEPALIVE_PERIODS * period {
        return None;
    }
    let outcome = execute_block(state, height, &txs);
    Some(Block::sealed(
        ctx.account,
        height,
        chain.head_hash(),
        now_ms,
        txs,
        outcome.state_hash(),
    ))
}
