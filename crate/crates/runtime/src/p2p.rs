//! TCP transport. Every node dials each known peer once and uses that
//! connection only for sending; frames arriving on accepted connections go
//! to the node's inbox. The first frame on a connection is a `Hello`.

use std::collections::BTreeMap;
use std::io;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use shiptrack_core::network::{frame, Payload, PeerInfo, Transport, TransportError, MAX_FRAME_LEN};
use shiptrack_core::Address;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tracing::{debug, trace};

/// Frames queued for one peer beyond this are dropped.
pub const PEER_QUEUE: usize = 4096;
const MAX_BACKOFF: Duration = Duration::from_secs(2);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Handshake {
    Hello(PeerInfo),
}

pub async fn read_frame<R: AsyncRead + Unpin>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).await?;
    Ok(Some(buf))
}

pub async fn write_frame<W: AsyncWrite + Unpin>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    w.write_all(&frame(payload)).await
}

/// Something received from the network.
#[derive(Debug)]
pub enum Inbound {
    Hello(PeerInfo),
    Frame { from: Address, payload: Payload },
}

struct Link {
    endpoint: String,
    tx: mpsc::Sender<Payload>,
    task: JoinHandle<()>,
}

/// Outbound side: one writer task per known peer.
pub struct PeerSet {
    me: PeerInfo,
    links: BTreeMap<Address, Link>,
}

impl PeerSet {
    pub fn new(me: PeerInfo) -> PeerSet {
        PeerSet {
            me,
            links: BTreeMap::new(),
        }
    }

    pub fn me(&self) -> &PeerInfo {
        &self.me
    }

    pub fn contains(&self, id: &Address) -> bool {
        self.links.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Starts dialing `peer` unless it is us or already known at the same
    /// endpoint. Returns true if the peer is new.
    pub fn add(&mut self, peer: PeerInfo) -> bool {
        if peer.peer_id == self.me.peer_id {
            return false;
        }
        if let Some(link) = self.links.get(&peer.peer_id) {
            if link.endpoint == peer.endpoint {
                return false;
            }
            link.task.abort();
        }
        let (tx, rx) = mpsc::channel(PEER_QUEUE);
        let task = tokio::spawn(writer(self.me.clone(), peer.endpoint.clone(), rx));
        self.links
            .insert(
                peer.peer_id,
                Link {
                    endpoint: peer.endpoint,
                    tx,
                    task,
                },
            )
            .is_none()
    }

    /// Known peers after `after` in id order, wrapping around.
    pub fn next_after(&self, after: &Address) -> Option<Address> {
        self.links
            .range((std::ops::Bound::Excluded(*after), std::ops::Bound::Unbounded))
            .map(|(id, _)| *id)
            .next()
            .or_else(|| self.links.keys().copied().find(|id| id != after))
    }

    pub fn first(&self) -> Option<Address> {
        self.links.keys().next().copied()
    }

    pub fn shutdown(&mut self) {
        for link in self.links.values() {
            link.task.abort();
        }
        self.links.clear();
    }
}

impl Drop for PeerSet {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl Transport for PeerSet {
    fn local_id(&self) -> Address {
        self.me.peer_id
    }

    fn peers(&self) -> Vec<Address> {
        self.links.keys().copied().collect()
    }

    fn send(&mut self, to: &Address, payload: Payload) -> Result<(), TransportError> {
        let link = self.links.get(to).ok_or(TransportError::UnknownPeer(*to))?;
        link.tx
            .try_send(payload)
            .map_err(|e| TransportError::Unreachable(*to, e.to_string()))
    }
}

async fn writer(me: PeerInfo, endpoint: String, mut rx: mpsc::Receiver<Payload>) {
    let hello = serde_json::to_vec(&Handshake::Hello(me)).expect("serializable");
    let mut backoff = Duration::from_millis(50);
    loop {
        let mut stream = match TcpStream::connect(&endpoint).await {
            Ok(s) => s,
            Err(e) => {
                trace!(%endpoint, error = %e, "dial failed");
                // The peer is down: what was queued for it is lost.
                while rx.try_recv().is_ok() {}
                if rx.is_closed() {
                    return;
                }
                tokio::time::sleep(backoff).await;
                backoff = (backoff * 2).min(MAX_BACKOFF);
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        if write_frame(&mut stream, &hello).await.is_err() {
            continue;
        }
        backoff = Duration::from_millis(50);
        loop {
            let Some(payload) = rx.recv().await else {
                return;
            };
            if let Err(e) = write_frame(&mut stream, &payload).await {
                debug!(%endpoint, error = %e, "peer connection lost");
                break;
            }
        }
    }
}

/// Accepts peer connections and forwards what they send to `inbox`.
pub async fn accept_loop(listener: TcpListener, inbox: mpsc::Sender<Inbound>) {
    loop {
        let Ok((stream, addr)) = listener.accept().await else {
            continue;
        };
        let _ = stream.set_nodelay(true);
        let inbox = inbox.clone();
        tokio::spawn(async move {
            if let Err(e) = read_peer(stream, inbox).await {
                debug!(%addr, error = %e, "inbound connection closed");
            }
        });
    }
}

async fn read_peer(mut stream: TcpStream, inbox: mpsc::Sender<Inbound>) -> io::Result<()> {
    let Some(first) = read_frame(&mut stream).await? else {
        return Ok(());
    };
    let Ok(Handshake::Hello(peer)) = serde_json::from_slice(&first) else {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "expected hello"));
    };
    let from = peer.peer_id;
    if inbox.send(Inbound::Hello(peer)).await.is_err() {
        return Ok(());
    }
    while let Some(payload) = read_frame(&mut stream).await? {
        let msg = Inbound::Frame {
            from,
            payload: Payload::new(payload),
        };
        if inbox.send(msg).await.is_err() {
            break;
        }
    }
    Ok(())
}
