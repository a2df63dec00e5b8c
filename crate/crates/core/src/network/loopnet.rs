use std::collections::HashMap;

use super::node::{HeadInfo, Node, Outgoing, SubmitError};
use super::registry::PeerInfo;
use super::transport::{dispatch, LoopbackHub, LoopbackTransport, Payload};
use crate::crypto::{Address, Hash32};
use crate::ledger::SignedTransaction;

struct Slot {
    id: Address,
    node: Option<Node>,
    transport: LoopbackTransport,
}

/// A set of nodes on one loopback hub, driven by a virtual millisecond clock.
pub struct LoopbackNet {
    hub: LoopbackHub,
    slots: Vec<Slot>,
    index: HashMap<Address, usize>,
    now_ms: u64,
    tick_ms: u64,
}

impl LoopbackNet {
    pub fn new(latency_ms: u64, tick_ms: u64) -> LoopbackNet {
        assert!(tick_ms > 0);
        LoopbackNet {
            hub: LoopbackHub::new(latency_ms),
            slots: Vec::new(),
            index: HashMap::new(),
            now_ms: 0,
            tick_ms,
        }
    }

    pub fn hub(&self) -> &LoopbackHub {
        &self.hub
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn index_of(&self, id: &Address) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Registers the node with the bootnode and, if it has peers, asks the
    /// first of them for missing blocks.
    pub fn add_node(&mut self, node: Node) -> usize {
        let id = node.id();
        let i = self.slots.len();
        self.slots.push(Slot {
            id,
            node: Some(node),
            transport: self.hub.transport(id),
        });
        self.index.insert(id, i);
        let peers = self.hub.register(PeerInfo {
            peer_id: id,
            endpoint: format!("loopback:{i}"),
        });
        if let Some(first) = peers.first() {
            self.sync_from(i, first.peer_id);
        }
        i
    }

    pub fn node(&self, i: usize) -> Option<&Node> {
        self.slots[i].node.as_ref()
    }

    pub fn node_mut(&mut self, i: usize) -> Option<&mut Node> {
        self.slots[i].node.as_mut()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.slots.iter().filter_map(|s| s.node.as_ref())
    }

    pub fn is_up(&self, i: usize) -> bool {
        self.slots[i].node.is_some()
    }

    pub fn send(&mut self, i: usize, outgoing: Vec<Outgoing>) {
        dispatch(&mut self.slots[i].transport, outgoing);
    }

    /// Submits through node `i` as its RPC would.
    pub fn submit(&mut self, i: usize, tx: SignedTransaction) -> Result<Hash32, SubmitError> {
        let Some(node) = self.slots[i].node.as_mut() else {
            return Err(SubmitError::Syncing);
        };
        let (hash, out) = node.submit_transaction(tx)?;
        self.send(i, out);
        Ok(hash)
    }

    /// Delivers a payload to `to` as if sent by `from`.
    pub fn inject(&mut self, from: Address, to: Address, payload: Payload) {
        self.hub.set_now(self.now_ms);
        self.hub.inject(from, to, payload);
    }

    /// Stops node `i`. Messages in flight to it are lost.
    pub fn kill(&mut self, i: usize) -> Option<Node> {
        self.hub.set_online(self.slots[i].id, false);
        self.slots[i].node.take()
    }

    /// Brings node `i` back (same id) and starts a sync.
    pub fn restart(&mut self, i: usize, node: Node) {
        assert_eq!(node.id(), self.slots[i].id, "restart must keep the node id");
        self.slots[i].node = Some(node);
        self.hub.set_online(self.slots[i].id, true);
        if let Some(peer) = self.live_peer_after(i) {
            self.sync_from(i, peer);
        }
    }

    fn sync_from(&mut self, i: usize, peer: Address) {
        let now = self.now_ms;
        if let Some(node) = self.slots[i].node.as_mut() {
            let out = node.request_sync(peer, now);
            self.send(i, out);
        }
    }

    fn live_peer_after(&self, i: usize) -> Option<Address> {
        let n = self.slots.len();
        (1..n)
            .map(|k| (i + k) % n)
            .find(|j| self.slots[*j].node.is_some())
            .map(|j| self.slots[j].id)
    }

    /// Delivers everything due now, including replies sent in response.
    pub fn deliver_due(&mut self) {
        let now = self.now_ms;
        self.hub.set_now(now);
        while let Some(d) = self.hub.pop_due(now) {
            let Some(&i) = self.index.get(&d.to) else {
                continue;
            };
            let Some(node) = self.slots[i].node.as_mut() else {
                continue;
            };
            let out = node.handle_frame(d.from, &d.payload, now);
            self.send(i, out);
        }
    }

    /// Lets every live node seal if it is in turn and retries stalled syncs
    /// against another peer.
    pub fn tick_nodes(&mut self) {
        let now = self.now_ms;
        self.hub.set_now(now);
        for i in 0..self.slots.len() {
            let Some(node) = self.slots[i].node.as_mut() else {
                continue;
            };
            if let Some(stalled) = node.stalled_sync(now) {
                node.cancel_sync();
                let n = self.slots.len();
                let start = self.index[&stalled];
                let next = (1..=n)
                    .map(|k| (start + k) % n)
                    .find(|j| *j != i && self.slots[*j].node.is_some())
                    .map(|j| self.slots[j].id);
                if let Some(peer) = next {
                    self.sync_from(i, peer);
                }
                continue;
            }
            let out = node.tick(now);
            self.send(i, out);
        }
    }

    pub fn tick_ms(&self) -> u64 {
        self.tick_ms
    }

    pub fn advance_clock(&mut self) {
        self.now_ms += self.tick_ms;
        self.hub.set_now(self.now_ms);
    }

    /// One clock tick: advance, deliver, seal.
    pub fn step(&mut self) {
        self.advance_clock();
        self.deliver_due();
        self.tick_nodes();
    }

    pub fn run_for(&mut self, ms: u64) {
        let end = self.now_ms + ms;
        while self.now_ms < end {
            self.step();
        }
    }

    /// Heads of the live nodes.
    pub fn heads(&self) -> Vec<HeadInfo> {
        self.nodes().map(Node::head).collect()
    }

    /// All live nodes agree on height, head hash and state hash, nothing is
    /// pending or in flight, and no one is syncing.
    pub fn converged(&self) -> bool {
        let heads = self.heads();
        let Some(first) = heads.first() else {
            return true;
        };
        self.hub.in_flight() == 0
            && heads.iter().all(|h| {
                h.height == first.height
                    && h.hash == first.hash
                    && h.state_hash == first.state_hash
                    && h.pending == 0
                    && !h.syncing
            })
    }

    /// Steps until converged or `max_ms` elapses; returns the time taken.
    pub fn run_until_converged(&mut self, max_ms: u64) -> Option<u64> {
        let start = self.now_ms;
        loop {
            if self.converged() {
                return Some(self.now_ms - start);
            }
            if self.now_ms - start >= max_ms {
                return None;
            }
            self.step();
        }
    }
}
