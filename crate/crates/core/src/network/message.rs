use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::crypto::{sha256, Hash32};
use crate::encoding::{canonical_decode, canonical_encode};
use crate::error::Result;
use crate::ledger::{Block, SignedTransaction};

/// Frames larger than this are refused on read.
pub const MAX_FRAME_LEN: usize = 64 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Message {
    NewTransaction(SignedTransaction),
    NewBlock(Block),
    GetChainFrom(u64),
    ChainSlice(Vec<Block>),
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        canonical_encode(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<Message> {
        canonical_decode(bytes)
    }

    /// Gossip kinds are deduplicated and re-forwarded; request/response
    /// kinds are point-to-point.
    pub fn is_gossip(&self) -> bool {
        matches!(self, Message::NewTransaction(_) | Message::NewBlock(_))
    }
}

/// Cheap gossip check on an encoded message. Canonical key order puts
/// `"kind"` first, so the prefix is fixed.
pub fn is_gossip_frame(payload: &[u8]) -> bool {
    payload.starts_with(br#"{"kind":"New"#)
}

/// Dedup key for a gossip payload.
pub fn message_hash(payload: &[u8]) -> Hash32 {
    sha256(payload)
}

/// Writes `payload` with its 4-byte big-endian length prefix.
pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)
}

pub fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 4);
    write_frame(&mut out, payload).expect("vec write");
    out
}

/// Reads one length-prefixed frame; `Ok(None)` on clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
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
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}
