use std::cell::RefCell;
use std::collections::{BTreeSet, VecDeque};
use std::rc::Rc;
use std::sync::Arc;

use thiserror::Error;
use tracing::debug;

use super::node::Outgoing;
use super::registry::{PeerInfo, Registry};
use crate::crypto::Address;

/// An encoded message shared between all its recipients.
pub type Payload = Arc<Vec<u8>>;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("unknown peer {0}")]
    UnknownPeer(Address),
    #[error("peer {0} unreachable: {1}")]
    Unreachable(Address, String),
}

/// Point-to-point delivery of encoded messages to known peers.
pub trait Transport {
    fn local_id(&self) -> Address;
    fn peers(&self) -> Vec<Address>;
    fn send(&mut self, to: &Address, payload: Payload) -> Result<(), TransportError>;
}

/// Sends `payload` to every known peer except ourselves and `except`.
/// Per-peer failures are logged and skipped.
pub fn broadcast<T: Transport + ?Sized>(
    transport: &mut T,
    payload: &Payload,
    except: Option<&Address>,
) -> usize {
    let me = transport.local_id();
    let mut sent = 0;
    for peer in transport.peers() {
        if peer == me || Some(&peer) == except {
            continue;
        }
        match transport.send(&peer, payload.clone()) {
            Ok(()) => sent += 1,
            Err(e) => debug!(%peer, error = %e, "send failed"),
        }
    }
    sent
}

pub fn dispatch<T: Transport + ?Sized>(transport: &mut T, outgoing: Vec<Outgoing>) {
    for out in outgoing {
        match out {
            Outgoing::Broadcast { payload, except } => {
                broadcast(transport, &payload, except.as_ref());
            }
            Outgoing::Direct { to, payload } => {
                if let Err(e) = transport.send(&to, payload) {
                    debug!(peer = %to, error = %e, "direct send failed");
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Delivery {
    pub at_ms: u64,
    pub from: Address,
    pub to: Address,
    pub payload: Payload,
}

struct HubInner {
    registry: Registry,
    online: BTreeSet<Address>,
    queue: VecDeque<Delivery>,
    now_ms: u64,
    latency_ms: u64,
    delivered: u64,
    dropped: u64,
}

/// Single-threaded in-memory network with a fixed per-hop latency.
/// Deliveries come out in send order, so a run is a pure function of its
/// inputs.
#[derive(Clone)]
pub struct LoopbackHub {
    inner: Rc<RefCell<HubInner>>,
}

impl LoopbackHub {
    pub fn new(latency_ms: u64) -> LoopbackHub {
        LoopbackHub {
            inner: Rc::new(RefCell::new(HubInner {
                registry: Registry::new(),
                online: BTreeSet::new(),
                queue: VecDeque::new(),
                now_ms: 0,
                latency_ms,
                delivered: 0,
                dropped: 0,
            })),
        }
    }

    /// Bootnode registration; the peer is marked online.
    pub fn register(&self, me: PeerInfo) -> Vec<PeerInfo> {
        let mut inner = self.inner.borrow_mut();
        inner.online.insert(me.peer_id);
        inner.registry.register_and_discover(me)
    }

    pub fn transport(&self, id: Address) -> LoopbackTransport {
        LoopbackTransport {
            hub: self.clone(),
            id,
        }
    }

    /// Offline peers neither receive nor keep in-flight messages.
    pub fn set_online(&self, id: Address, online: bool) {
        let mut inner = self.inner.borrow_mut();
        if online {
            inner.online.insert(id);
        } else {
            inner.online.remove(&id);
        }
    }

    pub fn is_online(&self, id: &Address) -> bool {
        self.inner.borrow().online.contains(id)
    }

    pub fn set_now(&self, now_ms: u64) {
        self.inner.borrow_mut().now_ms = now_ms;
    }

    /// Injects a message as if `from` had sent it.
    pub fn inject(&self, from: Address, to: Address, payload: Payload) {
        let mut inner = self.inner.borrow_mut();
        let at_ms = inner.now_ms + inner.latency_ms;
        inner.queue.push_back(Delivery {
            at_ms,
            from,
            to,
            payload,
        });
    }

    /// Next delivery due at or before `now_ms` whose recipient is online.
    pub fn pop_due(&self, now_ms: u64) -> Option<Delivery> {
        let mut inner = self.inner.borrow_mut();
        while inner.queue.front().is_some_and(|d| d.at_ms <= now_ms) {
            let d = inner.queue.pop_front().expect("front exists");
            if inner.online.contains(&d.to) {
                inner.delivered += 1;
                return Some(d);
            }
            inner.dropped += 1;
        }
        None
    }

    pub fn in_flight(&self) -> usize {
        self.inner.borrow().queue.len()
    }

    pub fn delivered(&self) -> u64 {
        self.inner.borrow().delivered
    }

    pub fn peers(&self) -> Vec<PeerInfo> {
        self.inner.borrow().registry.list()
    }
}

pub struct LoopbackTransport {
    hub: LoopbackHub,
    id: Address,
}

impl Transport for LoopbackTransport {
    fn local_id(&self) -> Address {
        self.id
    }

    fn peers(&self) -> Vec<Address> {
        self.hub
            .inner
            .borrow()
            .registry
            .list()
            .into_iter()
            .map(|p| p.peer_id)
            .collect()
    }

    fn send(&mut self, to: &Address, payload: Payload) -> Result<(), TransportError> {
        let known = self.hub.inner.borrow().registry.get(to).is_some();
        if !known {
            return Err(TransportError::UnknownPeer(*to));
        }
        self.hub.inject(self.id, *to, payload);
        Ok(())
    }
}
