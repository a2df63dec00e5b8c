//! Peer discovery, gossip and chain sync.

mod dedup;
mod loopnet;
mod message;
mod node;
mod registry;
mod transport;

pub use dedup::{DedupCache, DEDUP_CAPACITY};
pub use loopnet::LoopbackNet;
pub use message::{
    frame, is_gossip_frame, message_hash, read_frame, write_frame, Message, MAX_FRAME_LEN,
};
pub use node::{
    HeadInfo, Node, Outgoing, RejectionRecord, SubmitError, SLICE_LIMIT, SYNC_TIMEOUT_MS,
};
pub use registry::{BootRequest, BootResponse, PeerInfo, Registry};
pub use transport::{
    broadcast, dispatch, Delivery, LoopbackHub, LoopbackTransport, Payload, Transport,
    TransportError,
};
