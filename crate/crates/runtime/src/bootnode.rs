//! Bootnode: a peer registry served over framed TCP.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use shiptrack_core::network::{BootRequest, BootResponse, PeerInfo, Registry};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::Mutex;
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

use crate::p2p::{read_frame, write_frame};
use crate::{RuntimeError, RuntimeResult};

pub struct Bootnode {
    pub addr: SocketAddr,
    registry: Arc<Mutex<Registry>>,
    task: JoinHandle<()>,
}

impl Bootnode {
    pub async fn start(listen: SocketAddr) -> RuntimeResult<Bootnode> {
        let listener = TcpListener::bind(listen).await?;
        let addr = listener.local_addr()?;
        let registry = Arc::new(Mutex::new(Registry::new()));
        let task = tokio::spawn(serve(listener, registry.clone()));
        info!(%addr, "bootnode listening");
        Ok(Bootnode { addr, registry, task })
    }

    pub async fn peers(&self) -> Vec<PeerInfo> {
        self.registry.lock().await.list()
    }

    pub fn stop(&self) {
        self.task.abort();
    }
}

impl Drop for Bootnode {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn serve(listener: TcpListener, registry: Arc<Mutex<Registry>>) {
    loop {
        let Ok((stream, addr)) = listener.accept().await else {
            continue;
        };
        let registry = registry.clone();
        tokio::spawn(async move {
            if let Err(e) = session(stream, registry).await {
                debug!(%addr, error = %e, "bootnode session ended");
            }
        });
    }
}

async fn session(mut stream: TcpStream, registry: Arc<Mutex<Registry>>) -> std::io::Result<()> {
    while let Some(frame) = read_frame(&mut stream).await? {
        let resp = match serde_json::from_slice::<BootRequest>(&frame) {
            Ok(req) => registry.lock().await.handle(req),
            Err(e) => {
                return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, e));
            }
        };
        write_frame(&mut stream, &serde_json::to_vec(&resp).expect("serializable")).await?;
    }
    Ok(())
}

async fn request(stream: &mut TcpStream, req: &BootRequest) -> std::io::Result<BootResponse> {
    write_frame(stream, &serde_json::to_vec(req).expect("serializable")).await?;
    let frame = read_frame(stream)
        .await?
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "bootnode hung up"))?;
    serde_json::from_slice(&frame).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// One REGISTER then LIST exchange.
pub async fn register_once(bootnode: &str, me: &PeerInfo) -> std::io::Result<Vec<PeerInfo>> {
    let mut stream = TcpStream::connect(bootnode).await?;
    request(&mut stream, &BootRequest::Register(me.clone())).await?;
    match request(&mut stream, &BootRequest::List).await? {
        BootResponse::Peers(peers) => Ok(peers.into_iter().filter(|p| p.peer_id != me.peer_id).collect()),
        BootResponse::Ack => Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "expected peer list")),
    }
}

pub async fn list(bootnode: &str) -> std::io::Result<Vec<PeerInfo>> {
    let mut stream = TcpStream::connect(bootnode).await?;
    match request(&mut stream, &BootRequest::List).await? {
        BootResponse::Peers(peers) => Ok(peers),
        BootResponse::Ack => Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "expected peer list")),
    }
}

/// Registers `me` and returns every other peer, retrying with exponential
/// backoff for `attempts` tries.
pub async fn register_and_discover(
    bootnode: &str,
    me: &PeerInfo,
    attempts: u32,
) -> RuntimeResult<Vec<PeerInfo>> {
    let mut backoff = Duration::from_millis(100);
    let mut last = String::new();
    for attempt in 0..attempts.max(1) {
        match register_once(bootnode, me).await {
            Ok(peers) => return Ok(peers),
            Err(e) => {
                warn!(bootnode, attempt, error = %e, "bootnode unreachable, retrying");
                last = e.to_string();
            }
        }
        tokio::time::sleep(backoff).await;
        backoff = (backoff * 2).min(Duration::from_secs(2));
    }
    Err(RuntimeError::Bootnode {
        endpoint: bootnode.to_string(),
        reason: last,
    })
}
