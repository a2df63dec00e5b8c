//! Per-agent Action Manager: turns posted action JSON into signed
//! `add_action` transactions for the agent's node.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use crate::contracts::{is_valid_timestamp, Action, ContractCall, DELIVERY, PICKUP};
use crate::crypto::{Account, Address, Hash32};
use crate::ledger::{sign_transaction, SignedTransaction};
use crate::rpc::{ApiError, NodeApi};

/// POST /action body. Any `agent_address` sent is ignored: the manager
/// always records its own.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBody {
    pub shipment_id: String,
    pub timestamp: String,
    pub action_type: u8,
    pub agent_name: String,
    pub x: i64,
    pub y: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_address: Option<Address>,
}

impl From<&Action> for ActionBody {
    fn from(a: &Action) -> ActionBody {
        ActionBody {
            shipment_id: a.shipment_id.clone(),
            timestamp: a.timestamp.clone(),
            action_type: a.action_type,
            agent_name: a.agent_name.clone(),
            x: a.x,
            y: a.y,
            agent_address: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub agent_name: String,
    pub address: Address,
    pub next_nonce: Option<u64>,
}

/// HTTP status plus JSON body.
#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: Value,
}

impl Reply {
    pub fn accepted(tx_hash: Hash32) -> Reply {
        Reply {
            status: 202,
            body: json!({"status": "accepted", "tx_hash": tx_hash}),
        }
    }

    pub fn error(status: u16, message: impl Into<String>) -> Reply {
        Reply {
            status,
            body: json!({"status": "error", "error": message.into()}),
        }
    }

    pub fn tx_hash(&self) -> Option<Hash32> {
        self.body.get("tx_hash")?.as_str()?.parse().ok()
    }
}

/// Next nonce to sign with; unknown until synced from the node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NonceTracker {
    next: Option<u64>,
}

impl NonceTracker {
    pub fn get(&self) -> Option<u64> {
        self.next
    }

    pub fn set(&mut self, next: u64) {
        self.next = Some(next);
    }

    pub fn reset(&mut self) {
        self.next = None;
    }

    fn advance(&mut self) {
        let n = self.next.expect("advance after sync");
        self.next = Some(n + 1);
    }
}

pub struct ActionManager {
    agent_name: String,
    account: Account,
    nonce: NonceTracker,
    submitted: Vec<u64>,
}

/// Validates a POST body against the action schema.
pub fn parse_action_body(body: &[u8], agent: Address) -> Result<Action, String> {
    let b: ActionBody = serde_json::from_slice(body).map_err(|e| format!("malformed body: {e}"))?;
    if b.action_type != PICKUP && b.action_type != DELIVERY {
        return Err(format!("action_type must be 1 or 2, got {}", b.action_type));
    }
    if !is_valid_timestamp(&b.timestamp) {
        return Err(format!("timestamp {:?} is not YYYY-MM-DD HH:MM:SS", b.timestamp));
    }
    if b.shipment_id.is_empty() || b.agent_name.is_empty() {
        return Err("shipment_id and agent_name must be non-empty".into());
    }
    Ok(Action {
        shipment_id: b.shipment_id,
        timestamp: b.timestamp,
        action_type: b.action_type,
        agent_name: b.agent_name,
        agent_address: agent,
        x: b.x,
        y: b.y,
    })
}

impl ActionManager {
    pub fn new(agent_name: impl Into<String>, account: Account) -> ActionManager {
        ActionManager {
            agent_name: agent_name.into(),
            account,
            nonce: NonceTracker::default(),
            submitted: Vec::new(),
        }
    }

    pub fn agent_name(&self) -> &str {
        &self.agent_name
    }

    pub fn address(&self) -> Address {
        self.account.address()
    }

    pub fn next_nonce(&self) -> Option<u64> {
        self.nonce.get()
    }

    /// Nonces of every accepted submission, in order.
    pub fn submitted_nonces(&self) -> &[u64] {
        &self.submitted
    }

    pub fn health(&self) -> Health {
        Health {
            agent_name: self.agent_name.clone(),
            address: self.address(),
            next_nonce: self.nonce.get(),
        }
    }

    /// Loads the next nonce from the node. One attempt; callers retry.
    pub fn startup_sync(&mut self, api: &mut dyn NodeApi) -> Result<u64, ApiError> {
        let next = api.get_nonce(self.address())?;
        self.set_next_nonce(next);
        Ok(next)
    }

    /// Records a nonce read from the node by some other client.
    pub fn set_next_nonce(&mut self, next: u64) {
        self.nonce.set(next);
    }

    /// Signs `action` with the next nonce without consuming it.
    pub fn sign(&self, action: Action) -> Option<SignedTransaction> {
        let nonce = self.nonce.get()?;
        let shipment_id = action.shipment_id.clone();
        Some(sign_transaction(
            &self.account,
            nonce,
            ContractCall::AddAction { shipment_id, action },
        ))
    }

    /// Marks the transaction signed by `sign` as accepted by the node.
    pub fn commit(&mut self, tx: &SignedTransaction) {
        debug_assert_eq!(Some(tx.nonce), self.nonce.get());
        self.submitted.push(tx.nonce);
        self.nonce.advance();
    }

    /// Forgets the nonce so the next request re-reads it from the node.
    pub fn invalidate_nonce(&mut self) {
        self.nonce.reset();
    }

    /// Decides what a submission result means. `attempt` counts from 0;
    /// a first rejection drops the nonce so the caller can resync and retry.
    pub fn after_submit(
        &mut self,
        tx: &SignedTransaction,
        result: Result<Hash32, ApiError>,
        attempt: usize,
    ) -> Option<Reply> {
        match result {
            Ok(hash) => {
                self.commit(tx);
                Some(Reply::accepted(hash))
            }
            Err(ApiError::Rejected(reason)) if attempt == 0 => {
                // Our nonce is out of date (for example after a restart).
                debug!(agent = %self.agent_name, %reason, "submission rejected, resyncing nonce");
                self.invalidate_nonce();
                None
            }
            Err(ApiError::Rejected(reason)) => Some(Reply::error(
                502,
                format!("submission rejected after nonce resync: {reason}"),
            )),
            Err(e @ (ApiError::Unreachable(_) | ApiError::Syncing)) => {
                Some(Reply::error(503, e.to_string()))
            }
            Err(e) => {
                warn!(agent = %self.agent_name, error = %e, "submission failed");
                Some(Reply::error(502, e.to_string()))
            }
        }
    }

    /// POST /action.
    pub fn handle_post_action(&mut self, api: &mut dyn NodeApi, body: &[u8]) -> Reply {
        let action = match parse_action_body(body, self.address()) {
            Ok(a) => a,
            Err(e) => return Reply::error(400, e),
        };
        for attempt in 0..2 {
            if self.nonce.get().is_none() {
                if let Err(e) = self.startup_sync(api) {
                    return Reply::error(503, e.to_string());
                }
            }
            let tx = self.sign(action.clone()).expect("nonce synced");
            let result = api.submit_transaction(tx.clone());
            if let Some(reply) = self.after_submit(&tx, result, attempt) {
                return reply;
            }
        }
        unreachable!("second attempt always answers")
    }
}
