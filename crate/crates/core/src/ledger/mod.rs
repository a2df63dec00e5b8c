//! Transactions, blocks and the validated chain every node keeps.

mod block;
mod chain;
mod transaction;

pub use block::{Block, GenesisInfo};
pub use chain::{BlockRejection, Chain, ImportedBlock};
pub use transaction::{sign_transaction, verify_transaction, SignedTransaction};
