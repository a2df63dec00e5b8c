use serde::{Deserialize, Serialize};

use crate::contracts::ContractCall;
use crate::crypto::{verify_signature, Account, Address, Bytes, Hash32};
use crate::encoding::canonical_hash;

/// A contract call signed by its sender.
///
/// The sender's Ed25519 public key travels with the transaction so any node
/// can check both the signature and that the key derives `sender`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedTransaction {
    pub sender: Address,
    pub nonce: u64,
    pub call: ContractCall,
    pub public_key: Bytes,
    pub signature: Bytes,
}

#[derive(Serialize)]
struct SigningPayload<'a> {
    sender: &'a Address,
    nonce: u64,
    call: &'a ContractCall,
}

fn payload_digest(sender: &Address, nonce: u64, call: &ContractCall) -> Hash32 {
    canonical_hash(&SigningPayload {
        sender,
        nonce,
        call,
    })
}

impl SignedTransaction {
    /// SHA-256 of the canonical encoding of `(sender, nonce, call)`.
    pub fn signing_digest(&self) -> Hash32 {
        payload_digest(&self.sender, self.nonce, &self.call)
    }

    /// Transaction id: hash of the full signed encoding.
    pub fn hash(&self) -> Hash32 {
        canonical_hash(self)
    }
}

pub fn sign_transaction(account: &Account, nonce: u64, call: ContractCall) -> SignedTransaction {
    let sender = account.address();
    let signature = account.sign(&payload_digest(&sender, nonce, &call));
    SignedTransaction {
        sender,
        nonce,
        call,
        public_key: account.public_key().clone(),
        signature,
    }
}

pub fn verify_transaction(tx: &SignedTransaction) -> bool {
    verify_signature(
        &tx.sender,
        &tx.public_key,
        &tx.signing_digest(),
        &tx.signature,
    )
}
