//! Action Manager HTTP server: POST /action, GET /health.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::Value;
use shiptrack_core::manager::{parse_action_body, ActionManager, Health, Reply};
use shiptrack_core::Account;
use tokio::net::TcpListener;
use tokio::sync::Mutex;
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::client::RpcClient;
use crate::RuntimeResult;

pub struct ManagerService {
    manager: Mutex<ActionManager>,
    rpc: RpcClient,
}

impl ManagerService {
    pub fn new(agent_name: &str, account: Account, node_rpc: &str) -> ManagerService {
        ManagerService {
            manager: Mutex::new(ActionManager::new(agent_name, account)),
            rpc: RpcClient::new(node_rpc),
        }
    }

    pub async fn health(&self) -> Health {
        self.manager.lock().await.health()
    }

    /// Reads the next nonce from the node, retrying with backoff until it
    /// answers or `attempts` run out.
    pub async fn startup_sync(&self, attempts: u32) -> bool {
        let mut backoff = Duration::from_millis(50);
        for _ in 0..attempts.max(1) {
            {
                let mut m = self.manager.lock().await;
                if m.next_nonce().is_some() {
                    return true;
                }
                if let Ok(n) = self.rpc.get_nonce(m.address()).await {
                    m.set_next_nonce(n);
                    return true;
                }
            }
            tokio::time::sleep(backoff).await;
            backoff = (backoff * 2).min(Duration::from_secs(1));
        }
        false
    }

    /// Signing and nonce assignment run under the lock, so concurrent posts
    /// get consecutive nonces.
    pub async fn post_action(&self, body: &[u8]) -> Reply {
        let mut m = self.manager.lock().await;
        let action = match parse_action_body(body, m.address()) {
            Ok(a) => a,
            Err(e) => return Reply::error(400, e),
        };
        for attempt in 0..2 {
            if m.next_nonce().is_none() {
                match self.rpc.get_nonce(m.address()).await {
                    Ok(n) => m.set_next_nonce(n),
                    Err(e) => return Reply::error(503, e.to_string()),
                }
            }
            let tx = m.sign(action.clone()).expect("nonce synced");
            let result = self.rpc.submit_transaction(tx.clone()).await;
            if let Some(reply) = m.after_submit(&tx, result, attempt) {
                return reply;
            }
        }
        unreachable!("second attempt always answers")
    }
}

pub fn router(service: Arc<ManagerService>) -> Router {
    Router::new()
        .route("/action", post(post_action))
        .route("/health", get(health))
        .with_state(service)
}

async fn post_action(State(s): State<Arc<ManagerService>>, body: Bytes) -> (StatusCode, Json<Value>) {
    let reply = s.post_action(&body).await;
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(reply.body))
}

async fn health(State(s): State<Arc<ManagerService>>) -> Json<Health> {
    Json(s.health().await)
}

pub struct ManagerHandle {
    pub agent_name: String,
    pub addr: SocketAddr,
    pub service: Arc<ManagerService>,
    tasks: Vec<JoinHandle<()>>,
}

impl ManagerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(&mut self) {
        for t in self.tasks.drain(..) {
            t.abort();
        }
    }
}

impl Drop for ManagerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves a manager and starts its nonce sync in the background.
pub async fn spawn_manager(
    agent_name: &str,
    account: Account,
    node_rpc: &str,
    listen: SocketAddr,
) -> RuntimeResult<ManagerHandle> {
    let listener = TcpListener::bind(listen).await?;
    let addr = listener.local_addr()?;
    let service = Arc::new(ManagerService::new(agent_name, account, node_rpc));
    let app = router(service.clone());
    let serve = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    let s = service.clone();
    let name = agent_name.to_string();
    let sync = tokio::spawn(async move {
        if !s.startup_sync(200).await {
            warn!(agent = %name, "could not read nonce from node");
        }
    });
    info!(agent = agent_name, %addr, "action manager listening");
    Ok(ManagerHandle {
        agent_name: agent_name.to_string(),
        addr,
        service,
        tasks: vec![serve, sync],
    })
}
