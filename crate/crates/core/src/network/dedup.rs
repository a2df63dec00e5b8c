use std::num::NonZeroUsize;

use lru::LruCache;

use crate::crypto::Hash32;

pub const DEDUP_CAPACITY: usize = 65_536;

/// Fixed-size LRU of gossip message hashes.
pub struct DedupCache {
    seen: LruCache<Hash32, ()>,
}

impl DedupCache {
    pub fn new(capacity: usize) -> DedupCache {
        DedupCache {
            seen: LruCache::new(NonZeroUsize::new(capacity.max(1)).expect("non-zero")),
        }
    }

    /// Records `hash`; returns false if it was already present.
    pub fn insert(&mut self, hash: Hash32) -> bool {
        self.seen.put(hash, ()).is_none()
    }

    pub fn contains(&self, hash: &Hash32) -> bool {
        self.seen.contains(hash)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

impl Default for DedupCache {
    fn default() -> Self {
        DedupCache::new(DEDUP_CAPACITY)
    }
}
