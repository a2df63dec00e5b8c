//! Node RPC: JSON requests `{"method": .., "params": ..}` answered with
//! `{"ok": ..}` or `{"error": {"code": .., "message": ..}}`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::contracts::{ActionEvent, ReadCall, ReadResult, Receipt};
use crate::crypto::{Address, Hash32};
use crate::ledger::{Block, SignedTransaction};
use crate::network::{HeadInfo, Node, Outgoing, SubmitError, SLICE_LIMIT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "snake_case")]
pub enum RpcRequest {
    SubmitTransaction(SignedTransaction),
    GetNonce { address: Address },
    GetHead,
    GetBlocks { from: u64, to: u64 },
    GetEvents { from_block: u64 },
    GetReceipt { tx_hash: Hash32 },
    CallRead(ReadCall),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Syncing,
    Rejected,
    Contract,
    NotFound,
    InvalidRequest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpcResponse {
    Ok(Value),
    Error(RpcError),
}

impl RpcResponse {
    fn ok<T: Serialize>(value: &T) -> RpcResponse {
        RpcResponse::Ok(serde_json::to_value(value).expect("serializable"))
    }

    fn err(code: ErrorCode, message: impl Into<String>) -> RpcResponse {
        RpcResponse::Error(RpcError {
            code,
            message: message.into(),
        })
    }

    pub fn into_result<T: DeserializeOwned>(self) -> Result<T, ApiError> {
        match self {
            RpcResponse::Ok(v) => {
                serde_json::from_value(v).map_err(|e| ApiError::Protocol(e.to_string()))
            }
            RpcResponse::Error(e) => Err(ApiError::from(e)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResult {
    pub tx_hash: Hash32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonceResult {
    pub next_nonce: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiptInfo {
    pub block_height: u64,
    pub receipt: Receipt,
}

/// Client-side view of a failed call.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ApiError {
    #[error("node unreachable: {0}")]
    Unreachable(String),
    #[error("node is syncing")]
    Syncing,
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl From<RpcError> for ApiError {
    fn from(e: RpcError) -> ApiError {
        match e.code {
            ErrorCode::Syncing => ApiError::Syncing,
            ErrorCode::Rejected => ApiError::Rejected(e.message),
            ErrorCode::Contract => ApiError::Contract(e.message),
            ErrorCode::NotFound => ApiError::NotFound(e.message),
            ErrorCode::InvalidRequest => ApiError::Protocol(e.message),
        }
    }
}

fn submit_error(e: SubmitError) -> RpcResponse {
    match e {
        SubmitError::Syncing => RpcResponse::err(ErrorCode::Syncing, e.to_string()),
        SubmitError::Rejected(r) => RpcResponse::err(ErrorCode::Rejected, r.to_string()),
    }
}

/// Answers one request against `node`. Returned frames must be sent by the
/// caller.
pub fn handle_rpc(node: &mut Node, request: RpcRequest) -> (RpcResponse, Vec<Outgoing>) {
    let reply = match request {
        RpcRequest::SubmitTransaction(tx) => {
            return match node.submit_transaction(tx) {
                Ok((tx_hash, out)) => (RpcResponse::ok(&SubmitResult { tx_hash }), out),
                Err(e) => (submit_error(e), Vec::new()),
            }
        }
        RpcRequest::GetNonce { address } => match node.get_nonce(&address) {
            Ok(next_nonce) => RpcResponse::ok(&NonceResult { next_nonce }),
            Err(e) => submit_error(e),
        },
        RpcRequest::GetHead => RpcResponse::ok(&node.head()),
        RpcRequest::GetBlocks { from, to } => {
            let to = to.min(from.saturating_add(SLICE_LIMIT as u64 - 1));
            RpcResponse::ok(&node.get_blocks(from, to))
        }
        RpcRequest::GetEvents { from_block } => RpcResponse::ok(&node.get_events(from_block)),
        RpcRequest::GetReceipt { tx_hash } => {
            match (node.chain().find_transaction(&tx_hash), node.get_receipt(&tx_hash)) {
                (Some((block_height, _)), Some(receipt)) => {
                    RpcResponse::ok(&ReceiptInfo { block_height, receipt })
                }
                _ => RpcResponse::err(ErrorCode::NotFound, format!("no receipt for {tx_hash}")),
            }
        }
        RpcRequest::CallRead(call) => match node.call_read(&call) {
            Ok(r) => RpcResponse::ok(&r),
            Err(e) => RpcResponse::err(ErrorCode::Contract, e.to_string()),
        },
    };
    (reply, Vec::new())
}

/// Parses a raw request body and answers it.
pub fn handle_rpc_bytes(node: &mut Node, body: &[u8]) -> (RpcResponse, Vec<Outgoing>) {
    match serde_json::from_slice::<RpcRequest>(body) {
        Ok(req) => handle_rpc(node, req),
        Err(e) => (
            RpcResponse::err(ErrorCode::InvalidRequest, e.to_string()),
            Vec::new(),
        ),
    }
}

/// Blocking access to a node's RPC, typed.
pub trait NodeApi {
    fn call(&mut self, request: RpcRequest) -> Result<RpcResponse, ApiError>;

    fn submit_transaction(&mut self, tx: SignedTransaction) -> Result<Hash32, ApiError> {
        let r: SubmitResult = self.call(RpcRequest::SubmitTransaction(tx))?.into_result()?;
        Ok(r.tx_hash)
    }

    fn get_nonce(&mut self, address: Address) -> Result<u64, ApiError> {
        let r: NonceResult = self.call(RpcRequest::GetNonce { address })?.into_result()?;
        Ok(r.next_nonce)
    }

    fn get_head(&mut self) -> Result<HeadInfo, ApiError> {
        self.call(RpcRequest::GetHead)?.into_result()
    }

    fn get_blocks(&mut self, from: u64, to: u64) -> Result<Vec<Block>, ApiError> {
        self.call(RpcRequest::GetBlocks { from, to })?.into_result()
    }

    fn get_events(&mut self, from_block: u64) -> Result<Vec<ActionEvent>, ApiError> {
        self.call(RpcRequest::GetEvents { from_block })?.into_result()
    }

    fn get_receipt(&mut self, tx_hash: Hash32) -> Result<ReceiptInfo, ApiError> {
        self.call(RpcRequest::GetReceipt { tx_hash })?.into_result()
    }

    fn call_read(&mut self, call: ReadCall) -> Result<ReadResult, ApiError> {
        self.call(RpcRequest::CallRead(call))?.into_result()
    }
}

/// Direct calls into a node held in memory. Frames produced by the call
/// are queued for the caller to send.
pub struct LocalNode<'a> {
    pub node: Option<&'a mut Node>,
    pub outgoing: Vec<Outgoing>,
}

impl<'a> LocalNode<'a> {
    pub fn new(node: Option<&'a mut Node>) -> LocalNode<'a> {
        LocalNode {
            node,
            outgoing: Vec::new(),
        }
    }
}

impl NodeApi for LocalNode<'_> {
    fn call(&mut self, request: RpcRequest) -> Result<RpcResponse, ApiError> {
        let Some(node) = self.node.as_deref_mut() else {
            return Err(ApiError::Unreachable("node is down".into()));
        };
        // Round-trip through JSON so in-process calls see the wire format.
        let body = serde_json::to_vec(&request).expect("serializable");
        let (resp, out) = handle_rpc_bytes(node, &body);
        self.outgoing.extend(out);
        Ok(resp)
    }
}
