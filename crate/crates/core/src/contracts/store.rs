use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::{Action, MapBounds};
use crate::crypto::{sha256, Address, Hash32};
use crate::encoding::canonical_hash;

/// Well-known address of the singleton shipment manager.
pub const SHIPMENT_MANAGER_ADDRESS: Address = Address([
    0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0x51, 0x0a,
]);

/// Why a mutating call left the store untouched.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum TxFailure {
    #[error("unauthorized-sender")]
    UnauthorizedSender,
    #[error("malformed-action: {0}")]
    MalformedAction(String),
    #[error("not-admin")]
    NotAdmin,
}

/// Errors from direct contract calls that never reach a block.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "kebab-case")]
pub enum ContractError {
    #[error("not-manager: caller {caller} is not the shipment's manager")]
    NotManager { caller: Address },
    #[error("index-error: index {index} out of range for {count} actions")]
    IndexError { index: u64, count: u64 },
    #[error("unknown shipment {id:?}")]
    UnknownShipment { id: String },
}

/// Storage of one `Shipment` contract instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShipmentState {
    pub id: String,
    pub address: Address,
    manager: Address,
    actions: Vec<Action>,
}

impl ShipmentState {
    fn new(id: &str, manager: Address) -> ShipmentState {
        ShipmentState {
            id: id.to_owned(),
            address: shipment_address(&manager, id),
            manager,
            actions: Vec::new(),
        }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// `addAction`, guarded so only the owning manager may append.
    pub fn add_action(&mut self, caller: &Address, action: Action) -> Result<(), ContractError> {
        if *caller != self.manager {
            return Err(ContractError::NotManager { caller: *caller });
        }
        self.actions.push(action);
        Ok(())
    }

    pub fn action_count(&self) -> u64 {
        self.actions.len() as u64
    }

    pub fn action(&self, index: u64) -> Result<&Action, ContractError> {
        usize::try_from(index)
            .ok()
            .and_then(|i| self.actions.get(i))
            .ok_or(ContractError::IndexError {
                index,
                count: self.action_count(),
            })
    }
}

/// Derived address of the shipment contract for `shipment_id`.
pub fn shipment_address(manager: &Address, shipment_id: &str) -> Address {
    let mut preimage = manager.0.to_vec();
    preimage.extend_from_slice(shipment_id.as_bytes());
    let digest = sha256(&preimage);
    let mut out = [0u8; 20];
    out.copy_from_slice(&digest.0[12..]);
    Address(out)
}

/// Complete contract state: the manager's registry and allowlist, every
/// shipment, and the per-sender nonce counters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractStore {
    pub manager: Address,
    pub admin: Address,
    pub bounds: MapBounds,
    authorized: BTreeSet<Address>,
    shipments_by_id: BTreeMap<String, ShipmentState>,
    nonces: BTreeMap<Address, u64>,
}

impl ContractStore {
    pub fn new(
        admin: Address,
        authorized: impl IntoIterator<Item = Address>,
        bounds: MapBounds,
    ) -> ContractStore {
        ContractStore {
            manager: SHIPMENT_MANAGER_ADDRESS,
            admin,
            bounds,
            authorized: authorized.into_iter().collect(),
            shipments_by_id: BTreeMap::new(),
            nonces: BTreeMap::new(),
        }
    }

    pub fn state_hash(&self) -> Hash32 {
        canonical_hash(self)
    }

    pub fn is_authorized(&self, who: &Address) -> bool {
        self.authorized.contains(who)
    }

    pub fn authorized(&self) -> impl Iterator<Item = &Address> {
        self.authorized.iter()
    }

    pub fn shipments(&self) -> impl Iterator<Item = &ShipmentState> {
        self.shipments_by_id.values()
    }

    pub fn shipment(&self, id: &str) -> Option<&ShipmentState> {
        self.shipments_by_id.get(id)
    }

    /// Next nonce expected from `sender`.
    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.nonces.get(sender).copied().unwrap_or(0)
    }

    pub(crate) fn consume_nonce(&mut self, sender: &Address) {
        *self.nonces.entry(*sender).or_insert(0) += 1;
    }

    /// `ShipmentManager.addAction`: creates the shipment on first use then
    /// appends. Leaves the store unchanged on failure.
    pub fn add_action(
        &mut self,
        sender: &Address,
        shipment_id: &str,
        action: Action,
    ) -> Result<Action, TxFailure> {
        if !self.authorized.contains(sender) {
            return Err(TxFailure::UnauthorizedSender);
        }
        action
            .check_shape(&self.bounds)
            .map_err(TxFailure::MalformedAction)?;
        if action.shipment_id != shipment_id {
            return Err(TxFailure::MalformedAction(format!(
                "action is for shipment {:?}, call targets {:?}",
                action.shipment_id, shipment_id
            )));
        }
        if action.agent_address != *sender {
            return Err(TxFailure::MalformedAction(format!(
                "agent_address {} differs from sender {}",
                action.agent_address, sender
            )));
        }
        let manager = self.manager;
        let shipment = self
            .shipments_by_id
            .entry(shipment_id.to_owned())
            .or_insert_with(|| ShipmentState::new(shipment_id, manager));
        shipment
            .add_action(&manager, action.clone())
            .expect("manager is always the owner of shipments it creates");
        Ok(action)
    }

    /// `ShipmentManager.getShipment`: the zero address for unknown ids.
    pub fn get_shipment(&self, shipment_id: &str) -> Address {
        self.shipments_by_id
            .get(shipment_id)
            .map(|s| s.address)
            .unwrap_or(Address::ZERO)
    }

    pub fn get_action_count(&self, shipment_id: &str) -> Result<u64, ContractError> {
        self.shipment_or_err(shipment_id).map(|s| s.action_count())
    }

    pub fn get_action(&self, shipment_id: &str, index: u64) -> Result<Action, ContractError> {
        self.shipment_or_err(shipment_id)?.action(index).cloned()
    }

    fn shipment_or_err(&self, id: &str) -> Result<&ShipmentState, ContractError> {
        self.shipments_by_id
            .get(id)
            .ok_or_else(|| ContractError::UnknownShipment { id: id.to_owned() })
    }

    /// Allowlist update, admin only.
    pub fn set_authorized(
        &mut self,
        sender: &Address,
        target: Address,
        allowed: bool,
    ) -> Result<(), TxFailure> {
        if *sender != self.admin {
            return Err(TxFailure::NotAdmin);
        }
        if allowed {
            self.authorized.insert(target);
        } else {
            self.authorized.remove(&target);
        }
        Ok(())
    }

    /// Direct mutable access used only to model a non-manager caller.
    #[cfg(test)]
    pub(crate) fn shipment_mut(&mut self, id: &str) -> Option<&mut ShipmentState> {
        self.shipments_by_id.get_mut(id)
    }
}
