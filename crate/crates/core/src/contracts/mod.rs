//! The `ShipmentManager` and `Shipment` contracts as native state machines.

mod action;
mod store;

pub use action::{is_valid_timestamp, Action, MapBounds, DELIVERY, PICKUP, TIMESTAMP_FORMAT};
pub use store::{
    shipment_address, ContractError, ContractStore, ShipmentState, TxFailure,
    SHIPMENT_MANAGER_ADDRESS,
};

use serde::{Deserialize, Serialize};

use crate::crypto::{Address, Hash32};
use crate::ledger::SignedTransaction;

/// Mutating calls; the only thing a transaction can carry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ContractCall {
    AddAction { shipment_id: String, action: Action },
    SetAuthorized { target: Address, allowed: bool },
}

/// Read-only calls, answered off-chain by a node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ReadCall {
    GetShipment { shipment_id: String },
    GetActionCount { shipment_id: String },
    GetAction { shipment_id: String, index: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadResult {
    Address(Address),
    Count(u64),
    Action(Action),
}

pub fn call_read(store: &ContractStore, call: &ReadCall) -> Result<ReadResult, ContractError> {
    match call {
        ReadCall::GetShipment { shipment_id } => {
            Ok(ReadResult::Address(store.get_shipment(shipment_id)))
        }
        ReadCall::GetActionCount { shipment_id } => {
            store.get_action_count(shipment_id).map(ReadResult::Count)
        }
        ReadCall::GetAction { shipment_id, index } => {
            store.get_action(shipment_id, *index).map(ReadResult::Action)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReceiptStatus {
    Ok,
    Failed { failure: TxFailure },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_hash: Hash32,
    pub tx_index: u32,
    pub sender: Address,
    pub nonce: u64,
    #[serde(flatten)]
    pub status: ReceiptStatus,
}

impl Receipt {
    pub fn is_ok(&self) -> bool {
        self.status == ReceiptStatus::Ok
    }
}

/// Log entry emitted by the manager for every accepted action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub block_height: u64,
    pub tx_index: u32,
    pub action: Action,
}

impl ActionEvent {
    pub fn position(&self) -> (u64, u32) {
        (self.block_height, self.tx_index)
    }
}

#[derive(Clone, Debug)]
pub struct BlockOutcome {
    pub store: ContractStore,
    pub receipts: Vec<Receipt>,
    pub events: Vec<ActionEvent>,
}

impl BlockOutcome {
    pub fn state_hash(&self) -> Hash32 {
        self.store.state_hash()
    }
}

/// Applies `transactions` in order on a copy of `store`. Every transaction
/// consumes its sender's nonce; failed ones change nothing else. Signature
/// and nonce checks are the ledger's job and already happened.
pub fn execute_block(
    store: &ContractStore,
    height: u64,
    transactions: &[SignedTransaction],
) -> BlockOutcome {
    let mut next = store.clone();
    let mut receipts = Vec::with_capacity(transactions.len());
    let mut events = Vec::new();
    for (i, tx) in transactions.iter().enumerate() {
        let tx_index = i as u32;
        next.consume_nonce(&tx.sender);
        let result = match &tx.call {
            ContractCall::AddAction {
                shipment_id,
                action,
            } => next
                .add_action(&tx.sender, shipment_id, action.clone())
                .map(|action| {
                    events.push(ActionEvent {
                        block_height: height,
                        tx_index,
                        action,
                    })
                }),
            ContractCall::SetAuthorized { target, allowed } => {
                next.set_authorized(&tx.sender, *target, *allowed)
            }
        };
        let status = match result {
            Ok(()) => ReceiptStatus::Ok,
            Err(failure) => ReceiptStatus::Failed { failure },
        };
        receipts.push(Receipt {
            tx_hash: tx.hash(),
            tx_index,
            sender: tx.sender,
            nonce: tx.nonce,
            status,
        });
    }
    BlockOutcome {
        store: next,
        receipts,
        events,
    }
}

#[cfg(test)]
mod tests;
