//! A live node: one task owns the core `Node`; network frames, RPC calls
//! and clock ticks all go through its inbox.

use std::net::SocketAddr;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use shiptrack_core::ledger::ImportedBlock;
use shiptrack_core::network::{dispatch, HeadInfo, Node, PeerInfo};
use shiptrack_core::rpc::{handle_rpc, ErrorCode, RpcError, RpcRequest, RpcResponse};
use shiptrack_core::Address;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;
use tracing::{debug, info};

use crate::bootnode;
use crate::p2p::{accept_loop, Inbound, PeerSet};
use crate::{NetClock, RuntimeError, RuntimeResult};

const INBOX: usize = 8192;
const REFRESH: Duration = Duration::from_secs(2);

pub struct LiveNodeConfig {
    pub name: String,
    pub node: Node,
    pub p2p_listen: SocketAddr,
    pub rpc_listen: SocketAddr,
    pub bootnode: String,
    pub clock: NetClock,
    pub tick_ms: u64,
    pub bootnode_attempts: u32,
}

enum Command {
    Rpc(RpcRequest, oneshot::Sender<RpcResponse>),
    Peers(Vec<PeerInfo>),
    Shutdown(oneshot::Sender<Node>),
}

pub struct NodeHandle {
    pub name: String,
    pub id: Address,
    pub p2p: SocketAddr,
    pub rpc: SocketAddr,
    commands: mpsc::Sender<Command>,
    imports: broadcast::Sender<ImportedBlock>,
    tasks: Vec<JoinHandle<()>>,
    actor: Option<JoinHandle<()>>,
}

impl NodeHandle {
    pub fn rpc_url(&self) -> String {
        format!("http://{}", self.rpc)
    }

    /// Blocks imported from now on.
    pub fn subscribe_imports(&self) -> broadcast::Receiver<ImportedBlock> {
        self.imports.subscribe()
    }

    pub async fn call(&self, request: RpcRequest) -> RuntimeResult<RpcResponse> {
        let (tx, rx) = oneshot::channel();
        self.commands
            .send(Command::Rpc(request, tx))
            .await
            .map_err(|_| RuntimeError::Protocol("node stopped".into()))?;
        rx.await.map_err(|_| RuntimeError::Protocol("node stopped".into()))
    }

    pub async fn head(&self) -> RuntimeResult<HeadInfo> {
        Ok(self.call(RpcRequest::GetHead).await?.into_result()?)
    }

    /// Stops every task and hands back the node with its chain.
    pub async fn shutdown(mut self) -> Option<Node> {
        for t in &self.tasks {
            t.abort();
        }
        let (tx, rx) = oneshot::channel();
        let node = match self.commands.send(Command::Shutdown(tx)).await {
            Ok(()) => rx.await.ok(),
            Err(_) => None,
        };
        if let Some(actor) = self.actor.take() {
            let _ = actor.await;
        }
        node
    }
}

impl Drop for NodeHandle {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
        if let Some(actor) = &self.actor {
            actor.abort();
        }
    }
}

/// Binds both listeners, registers with the bootnode and starts the node.
pub async fn spawn_node(config: LiveNodeConfig) -> RuntimeResult<NodeHandle> {
    let p2p_listener = TcpListener::bind(config.p2p_listen).await?;
    let rpc_listener = TcpListener::bind(config.rpc_listen).await?;
    let p2p = p2p_listener.local_addr()?;
    let rpc = rpc_listener.local_addr()?;
    let id = config.node.id();
    let me = PeerInfo {
        peer_id: id,
        endpoint: p2p.to_string(),
    };
    let peers = bootnode::register_and_discover(&config.bootnode, &me, config.bootnode_attempts).await?;

    let (inbound_tx, inbound_rx) = mpsc::channel(INBOX);
    let (commands_tx, commands_rx) = mpsc::channel(INBOX);
    let (imports, _) = broadcast::channel(1024);

    let mut tasks = vec![tokio::spawn(accept_loop(p2p_listener, inbound_tx))];
    let app = Router::new()
        .route("/rpc", post(rpc_handler))
        .with_state(commands_tx.clone());
    tasks.push(tokio::spawn(async move {
        let _ = axum::serve(rpc_listener, app).await;
    }));
    let refresh_tx = commands_tx.clone();
    let boot = config.bootnode.clone();
    tasks.push(tokio::spawn(async move {
        loop {
            tokio::time::sleep(REFRESH).await;
            if let Ok(list) = bootnode::list(&boot).await {
                if refresh_tx.send(Command::Peers(list)).await.is_err() {
                    return;
                }
            }
        }
    }));

    let mut peer_set = PeerSet::new(me);
    for p in peers {
        peer_set.add(p);
    }
    let actor = Actor {
        name: config.name.clone(),
        node: config.node,
        peers: peer_set,
        clock: config.clock,
        imports: imports.clone(),
    };
    let actor = tokio::spawn(actor.run(inbound_rx, commands_rx, config.tick_ms));
    info!(name = %config.name, %p2p, %rpc, "node started");
    Ok(NodeHandle {
        name: config.name,
        id,
        p2p,
        rpc,
        commands: commands_tx,
        imports,
        tasks,
        actor: Some(actor),
    })
}

struct Actor {
    name: String,
    node: Node,
    peers: PeerSet,
    clock: NetClock,
    imports: broadcast::Sender<ImportedBlock>,
}

impl Actor {
    async fn run(
        mut self,
        mut inbound: mpsc::Receiver<Inbound>,
        mut commands: mpsc::Receiver<Command>,
        tick_ms: u64,
    ) {
        if let Some(first) = self.peers.first() {
            let out = self.node.request_sync(first, self.clock.now_ms());
            dispatch(&mut self.peers, out);
        }
        let mut ticker = tokio::time::interval(Duration::from_millis(tick_ms.max(1)));
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                msg = inbound.recv() => match msg {
                    Some(Inbound::Hello(peer)) => self.add_peers(vec![peer]),
                    Some(Inbound::Frame { from, payload }) => {
                        let out = self.node.handle_frame(from, &payload, self.clock.now_ms());
                        dispatch(&mut self.peers, out);
                    }
                    None => return,
                },
                cmd = commands.recv() => match cmd {
                    Some(Command::Rpc(req, reply)) => {
                        let (resp, out) = handle_rpc(&mut self.node, req);
                        dispatch(&mut self.peers, out);
                        let _ = reply.send(resp);
                    }
                    Some(Command::Peers(list)) => self.add_peers(list),
                    Some(Command::Shutdown(reply)) => {
                        self.peers.shutdown();
                        let _ = reply.send(self.node);
                        return;
                    }
                    None => return,
                },
                _ = ticker.tick() => self.tick(),
            }
        }
    }

    fn add_peers(&mut self, list: Vec<PeerInfo>) {
        for p in list {
            let id = p.peer_id;
            if self.peers.add(p) {
                debug!(name = %self.name, peer = %id, "new peer");
            }
        }
    }

    fn tick(&mut self) {
        let now = self.clock.now_ms();
        if let Some(stalled) = self.node.stalled_sync(now) {
            self.node.cancel_sync();
            if let Some(next) = self.peers.next_after(&stalled) {
                let out = self.node.request_sync(next, now);
                dispatch(&mut self.peers, out);
            }
            return;
        }
        let out = self.node.tick(now);
        dispatch(&mut self.peers, out);
        for imported in self.node.drain_imports() {
            debug!(name = %self.name, "{}", imported.console_line());
            let _ = self.imports.send(imported);
        }
    }
}

async fn rpc_handler(
    State(commands): State<mpsc::Sender<Command>>,
    body: Bytes,
) -> (StatusCode, Json<RpcResponse>) {
    let request = match serde_json::from_slice::<RpcRequest>(&body) {
        Ok(r) => r,
        Err(e) => {
            let err = RpcResponse::Error(RpcError {
                code: ErrorCode::InvalidRequest,
                message: e.to_string(),
            });
            return (StatusCode::BAD_REQUEST, Json(err));
        }
    };
    let (tx, rx) = oneshot::channel();
    if commands.send(Command::Rpc(request, tx)).await.is_err() {
        return unavailable();
    }
    match rx.await {
        Ok(resp) => (StatusCode::OK, Json(resp)),
        Err(_) => unavailable(),
    }
}

fn unavailable() -> (StatusCode, Json<RpcResponse>) {
    let err = RpcResponse::Error(RpcError {
        code: ErrorCode::Syncing,
        message: "node is shutting down".into(),
    });
    (StatusCode::SERVICE_UNAVAILABLE, Json(err))
}
