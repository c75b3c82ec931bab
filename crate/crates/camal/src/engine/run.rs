//! Sorted runs: immutable block sequences with in-memory fence keys and a
//! Bloom filter.
//!
//! A builder streams already-sorted records into fixed-size blocks of at most
//! B entries each, collecting fences (each block's first key) and key hashes;
//! the filter is sized at finish time when the deduplicated entry count is
//! known. Fences are held in memory and charged zero I/O; reopening a run
//! rebuilds them with one scan.

use crate::engine::block::{decode_block, encode_block, record_size, Record};
use crate::engine::bloom::{hash_pair, BloomFilter};
use crate::engine::storage::Storage;
use crate::error::{Error, Result};

/// Deterministic per-run filter seed derived from the run id.
pub fn filter_seed(seq: u64) -> u64 {
    let mut x = seq.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone)]
pub struct Run {
    pub seq: u64,
    pub level: u32,
    pub entries: u64,
    pub blocks: u64,
    pub min_key: Vec<u8>,
    pub max_key: Vec<u8>,
    /// Width the filter was built with; retained across retargets.
    pub bits_per_key: f64,
    pub filter: BloomFilter,
    fences: Vec<Vec<u8>>,
}

impl Run {
    pub fn data_name(level: u32, seq: u64) -> String {
        format!("run-{level}-{seq}.dat")
    }

    pub fn filter_name(level: u32, seq: u64) -> String {
        format!("run-{level}-{seq}.flt")
    }

    pub fn file_name(&self) -> String {
        Run::data_name(self.level, self.seq)
    }

    /// The single block that can hold `key`: the last fence ≤ key. `None`
    /// when the key sorts before the run's first key.
    pub fn candidate_block(&self, key: &[u8]) -> Option<u64> {
        let after = self.fences.partition_point(|f| f.as_slice() <= key);
        after.checked_sub(1).map(|i| i as u64)
    }

    /// First block a scan starting at `key` must touch.
    pub fn scan_start_block(&self, key: &[u8]) -> u64 {
        self.candidate_block(key).unwrap_or(0)
    }

    /// Rebuilds run metadata from storage (one full scan plus the filter
    /// blob). The caller resets I/O counters afterwards; a reopen is not a
    /// measured workload.
    pub fn restore(
        storage: &mut dyn Storage,
        level: u32,
        seq: u64,
        bits_per_key: f64,
    ) -> Result<Run> {
        let data_name = Run::data_name(level, seq);
        let filter_bytes = storage
            .get_blob(&Run::filter_name(level, seq))?
            .ok_or_else(|| Error::engine(format!("missing filter for {data_name}")))?;
        let filter = BloomFilter::decode(&filter_bytes)?;
        let blocks = storage.block_count(&data_name)?;
        let mut fences = Vec::with_capacity(blocks as usize);
        let mut entries = 0u64;
        let mut min_key = Vec::new();
        let mut max_key = Vec::new();
        for idx in 0..blocks {
            let block = storage.read_block(&data_name, idx)?;
            let records = decode_block(&block)?;
            let first = records
                .first()
                .ok_or_else(|| Error::engine(format!("empty block {idx} in {data_name}")))?;
            if idx == 0 {
                min_key = first.0.clone();
            }
            if let Some(last) = records.last() {
                max_key = last.0.clone();
            }
            fences.push(first.0.clone());
            entries += records.len() as u64;
        }
        if fences.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::engine(format!("fences out of order in {data_name}")));
        }
        Ok(Run {
            seq,
            level,
            entries,
            blocks,
            min_key,
            max_key,
            bits_per_key,
            filter,
            fences,
        })
    }
}

pub struct RunBuilder {
    name: String,
    level: u32,
    seq: u64,
    block_bytes: usize,
    per_block: usize,
    bits_per_key: f64,
    cur: Vec<Record>,
    cur_bytes: usize,
    fences: Vec<Vec<u8>>,
    hashes: Vec<(u64, u64)>,
    entries: u64,
    blocks: u64,
    min_key: Vec<u8>,
    max_key: Vec<u8>,
    last_key: Option<Vec<u8>>,
}

impl RunBuilder {
    /// Starts a run at `level`. `per_block` is B, the nominal entries per
    /// block; blocks close early if odd-sized records would overflow.
    pub fn begin(
        storage: &mut dyn Storage,
        level: u32,
        seq: u64,
        block_bytes: usize,
        per_block: usize,
        bits_per_key: f64,
    ) -> Result<RunBuilder> {
        let name = Run::data_name(level, seq);
        storage.begin_run(&name)?;
        Ok(RunBuilder {
            name,
            level,
            seq,
            block_bytes,
            per_block: per_block.max(1),
            bits_per_key,
            cur: Vec::new(),
            cur_bytes: 4,
            fences: Vec::new(),
            hashes: Vec::new(),
            entries: 0,
            blocks: 0,
            min_key: Vec::new(),
            max_key: Vec::new(),
            last_key: None,
        })
    }

    fn emit_block(&mut self, storage: &mut dyn Storage) -> Result<()> {
        if self.cur.is_empty() {
            return Ok(());
        }
        self.fences.push(self.cur[0].0.clone());
        let encoded = encode_block(&self.cur, self.block_bytes)?;
        storage.append_block(&self.name, &encoded)?;
        self.blocks += 1;
        self.cur.clear();
        self.cur_bytes = 4;
        Ok(())
    }

    /// Appends the next record; keys must arrive strictly increasing.
    pub fn push(
        &mut self,
        storage: &mut dyn Storage,
        key: Vec<u8>,
        value: Option<Vec<u8>>,
    ) -> Result<()> {
        if let Some(last) = &self.last_key {
            if *last >= key {
                return Err(Error::engine("run records must be strictly increasing"));
            }
        }
        let rec = (key, value);
        let size = record_size(&rec);
        if 4 + size > self.block_bytes {
            return Err(Error::engine(format!(
                "record of {size} bytes cannot fit a {}-byte block",
                self.block_bytes
            )));
        }
        if self.cur.len() >= self.per_block || self.cur_bytes + size > self.block_bytes {
            self.emit_block(storage)?;
        }
        if self.entries == 0 {
            self.min_key = rec.0.clone();
        }
        self.max_key = rec.0.clone();
        self.last_key = Some(rec.0.clone());
        self.hashes.push(hash_pair(&rec.0, filter_seed(self.seq)));
        self.cur_bytes += size;
        self.cur.push(rec);
        self.entries += 1;
        Ok(())
    }

    /// Closes the run, sizes and writes its filter, and returns metadata.
    /// An empty run leaves no files and yields `None`. The second return
    /// value is the number of blocks written (for the caller's accounting).
    pub fn finish(mut self, storage: &mut dyn Storage) -> Result<(Option<Run>, u64)> {
        self.emit_block(storage)?;
        if self.entries == 0 {
            storage.remove(&self.name)?;
            return Ok((None, 0));
        }
        storage.finish_run(&self.name)?;
        let mut filter = BloomFilter::new(self.entries, self.bits_per_key, filter_seed(self.seq));
        for pair in &self.hashes {
            filter.insert_pair(*pair);
        }
        storage.put_blob(&Run::filter_name(self.level, self.seq), &filter.encode())?;
        let blocks = self.blocks;
        let run = Run {
            seq: self.seq,
            level: self.level,
            entries: self.entries,
            blocks,
            min_key: self.min_key,
            max_key: self.max_key,
            bits_per_key: self.bits_per_key,
            filter,
            fences: self.fences,
        };
        Ok((Some(run), blocks))
    }
}
