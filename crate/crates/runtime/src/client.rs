//! HTTP client for node RPC.

use std::time::Duration;

use shiptrack_core::contracts::{ActionEvent, ReadCall, ReadResult};
use shiptrack_core::ledger::{Block, SignedTransaction};
use shiptrack_core::network::HeadInfo;
use shiptrack_core::rpc::{ApiError, NonceResult, ReceiptInfo, RpcRequest, RpcResponse, SubmitResult};
use shiptrack_core::{Address, Hash32};

#[derive(Clone, Debug)]
pub struct RpcClient {
    http: reqwest::Client,
    url: String,
}

/// `host:port` or a full `http://` URL, with or without the `/rpc` path.
pub fn rpc_url(endpoint: &str) -> String {
    let base = if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        endpoint.trim_end_matches('/').to_string()
    } else {
        format!("http://{endpoint}")
    };
    if base.ends_with("/rpc") {
        base
    } else {
        format!("{base}/rpc")
    }
}

impl RpcClient {
    pub fn new(endpoint: &str) -> RpcClient {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("http client");
        RpcClient {
            http,
            url: rpc_url(endpoint),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub async fn call(&self, request: &RpcRequest) -> Result<RpcResponse, ApiError> {
        let body = serde_json::to_vec(request).expect("serializable");
        let resp = self
            .http
            .post(&self.url)
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .map_err(|e| ApiError::Unreachable(e.to_string()))?;
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| ApiError::Unreachable(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| ApiError::Protocol(e.to_string()))
    }

    pub async fn submit_transaction(&self, tx: SignedTransaction) -> Result<Hash32, ApiError> {
        let r: SubmitResult = self.call(&RpcRequest::SubmitTransaction(tx)).await?.into_result()?;
        Ok(r.tx_hash)
    }

    pub async fn get_nonce(&self, address: Address) -> Result<u64, ApiError> {
        let r: NonceResult = self.call(&RpcRequest::GetNonce { address }).await?.into_result()?;
        Ok(r.next_nonce)
    }

    pub async fn get_head(&self) -> Result<HeadInfo, ApiError> {
        self.call(&RpcRequest::GetHead).await?.into_result()
    }

    pub async fn get_blocks(&self, from: u64, to: u64) -> Result<Vec<Block>, ApiError> {
        self.call(&RpcRequest::GetBlocks { from, to }).await?.into_result()
    }

    pub async fn get_events(&self, from_block: u64) -> Result<Vec<ActionEvent>, ApiError> {
        self.call(&RpcRequest::GetEvents { from_block }).await?.into_result()
    }

    pub async fn get_receipt(&self, tx_hash: Hash32) -> Result<ReceiptInfo, ApiError> {
        self.call(&RpcRequest::GetReceipt { tx_hash }).await?.into_result()
    }

    pub async fn call_read(&self, call: ReadCall) -> Result<ReadResult, ApiError> {
        self.call(&RpcRequest::CallRead(call)).await?.into_result()
    }

    /// Every block from genesis to the head, fetched in slices.
    pub async fn full_chain(&self) -> Result<Vec<Block>, ApiError> {
        let head = self.get_head().await?.height;
        let mut blocks = Vec::new();
        while (blocks.len() as u64) <= head {
            let from = blocks.len() as u64;
            let slice = self.get_blocks(from, head).await?;
            if slice.is_empty() {
                return Err(ApiError::Protocol(format!("no blocks from {from}")));
            }
            blocks.extend(slice);
        }
        Ok(blocks)
    }
}
