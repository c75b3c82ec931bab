//! Block cache with recency (LRU) eviction, keyed by (run id, block index).
//!
//! Capacity is counted in blocks. Zero capacity disables caching. Entries of
//! deleted runs are purged eagerly so dead blocks never displace live ones.

use std::collections::{BTreeMap, HashMap};

type Key = (u64, u64);

pub struct BlockCache {
    cap: usize,
    map: HashMap<Key, (Vec<u8>, u64)>,
    order: BTreeMap<u64, Key>,
    clock: u64,
}

impl BlockCache {
    pub fn new(cap_blocks: usize) -> BlockCache {
        BlockCache {
            cap: cap_blocks,
            map: HashMap::new(),
            order: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn get(&mut self, key: Key) -> Option<Vec<u8>> {
        self.clock += 1;
        let clock = self.clock;
        let (data, stamp) = self.map.get_mut(&key)?;
        self.order.remove(&*stamp);
        *stamp = clock;
        self.order.insert(clock, key);
        Some(data.clone())
    }

    pub fn insert(&mut self, key: Key, data: Vec<u8>) {
        if self.cap == 0 {
            return;
        }
        self.clock += 1;
        if let Some((_, stamp)) = self.map.remove(&key) {
            self.order.remove(&stamp);
        }
        self.map.insert(key, (data, self.clock));
        self.order.insert(self.clock, key);
        while self.map.len() > self.cap {
            let (&oldest, &victim) = self.order.iter().next().unwrap();
            self.order.remove(&oldest);
            self.map.remove(&victim);
        }
    }

    /// Shrinks or grows capacity, evicting the least recent overflow.
    pub fn resize(&mut self, cap_blocks: usize) {
        self.cap = cap_blocks;
        while self.map.len() > self.cap {
            let (&oldest, &victim) = self.order.iter().next().unwrap();
            self.order.remove(&oldest);
            self.map.remove(&victim);
        }
    }

    /// Drops every block of a run (called when a compaction deletes it).
    pub fn purge_run(&mut self, run_seq: u64) {
        let dead: Vec<Key> = self
            .map
            .keys()
            .copied()
            .filter(|&(seq, _)| seq == run_seq)
            .collect();
        for key in dead {
            if let Some((_, stamp)) = self.map.remove(&key) {
                self.order.remove(&stamp);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_evicts_least_recent() {
        let mut c = BlockCache::new(2);
        c.insert((1, 0), vec![0]);
        c.insert((1, 1), vec![1]);
        assert!(c.get((1, 0)).is_some()); // bump 0 ahead of 1
        c.insert((1, 2), vec![2]);
        assert!(c.get((1, 1)).is_none());
        assert!(c.get((1, 0)).is_some());
        assert!(c.get((1, 2)).is_some());
    }

    #[test]
    fn zero_capacity_caches_nothing() {
        let mut c = BlockCache::new(0);
        c.insert((1, 0), vec![0]);
        assert!(c.get((1, 0)).is_none());
        assert_eq!(c.len(), 0);
    }

    #[test]
    fn resize_and_purge() {
        let mut c = BlockCache::new(4);
        for i in 0..4 {
            c.insert((i % 2, i), vec![i as u8]);
        }
        c.resize(1);
        assert_eq!(c.len(), 1);
        assert!(c.get((1, 3)).is_some()); // most recent survives
        c.insert((7, 0), vec![9]);
        c.purge_run(7);
        assert!(c.get((7, 0)).is_none());
    }
}
