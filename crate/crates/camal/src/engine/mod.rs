//! The LSM-tree storage engine: a sorted write buffer in front of levels of
//! immutable sorted runs, per-run Bloom filters budgeted across levels, a
//! block cache, and exact I/O accounting.
//!
//! Structure follows the active compaction policy: leveling keeps one run
//! per level and merges on every spill; tiering accumulates up to T runs and
//! merges them together one level down. Level i (1-based) holds up to
//! `(M_b/E)·(T−1)·T^{i−1}` entries; a level exceeding that after a flush
//! compacts into the next. Tombstones are dropped when a merge writes the
//! deepest data.
//!
//! Reconfiguration is lazy: [`LsmTree::set_target_config`] records the target
//! and resizes the cache; capacities, flush sizes, merge shape, and new-run
//! filter widths all follow the target immediately, while existing runs keep
//! their recorded filter widths until natural compactions rewrite them. The
//! active config catches up once the layout conforms.
//!
//! One instance is single-threaded; distinct instances are independent.
//! Durability is manifest-on-close (no WAL): drop without close loses the
//! buffer.

pub mod block;
pub mod bloom;
pub mod cache;
pub mod manifest;
pub mod run;
pub mod stats;
pub mod storage;

use std::collections::BTreeMap;
use std::collections::BinaryHeap;
use std::path::Path;
use std::time::Instant;

use crate::analytic::{level_count, Environment, LsmConfig, Policy};
use crate::error::{Error, Result};
use crate::workload::{Operation, OperationStream, RankScrambler};

use block::{decode_block, Record};
use bloom::monkey_allocate;
use cache::BlockCache;
use manifest::{parse_manifest, serialize_manifest, ManifestData, ManifestRun};
use run::{Run, RunBuilder};
use stats::IoStats;
use storage::{FileStorage, MemStorage, Storage};

pub use stats::OpCounts;

/// Keys are stored big-endian so byte order matches numeric order.
pub fn encode_key(key: u64) -> [u8; 8] {
    key.to_be_bytes()
}

/// Deterministic value payload sized so a full record occupies the nominal
/// entry footprint (key framing plus `E − 24` value bytes).
pub fn value_payload(env: &Environment, seed: u64) -> Vec<u8> {
    let len = env.entry_bytes.saturating_sub(24) as usize;
    let mut out = vec![0u8; len];
    let mut state = seed;
    for chunk in out.chunks_mut(8) {
        state = state
            .wrapping_add(0x9e3779b97f4a7c15)
            .rotate_left(17)
            .wrapping_mul(0xbf58476d1ce4e5b9);
        let bytes = state.to_le_bytes();
        chunk.copy_from_slice(&bytes[..chunk.len()]);
    }
    out
}

/// One capacity-triggered compaction, recorded for convergence analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompactionEvent {
    /// Source level that spilled.
    pub level: u32,
    /// Entries at the source when the trigger fired.
    pub entries_before: u64,
    /// The target-config capacity it exceeded.
    pub trigger_capacity: u64,
}

/// Per-run summary for layout inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunInfo {
    pub seq: u64,
    pub entries: u64,
    pub blocks: u64,
    pub bits_per_key: f64,
}

/// Measured outcome of executing one operation stream.
#[derive(Debug, Clone, Copy)]
pub struct WorkloadReport {
    pub ops: u64,
    /// Counter deltas over the stream.
    pub io: IoStats,
    pub mean_latency_ns: f64,
    pub p90_latency_ns: u64,
    /// `(blocks_read + blocks_written) / ops`, compaction traffic included.
    pub io_per_op: f64,
}

impl WorkloadReport {
    pub(crate) fn from_measured(io: IoStats, latencies: Vec<u64>) -> WorkloadReport {
        let ops = latencies.len() as u64;
        let mean_latency_ns = if ops == 0 {
            0.0
        } else {
            latencies.iter().sum::<u64>() as f64 / ops as f64
        };
        let p90_latency_ns = if ops == 0 {
            0
        } else {
            let mut sorted = latencies;
            sorted.sort_unstable();
            sorted[(ops as usize * 9).div_ceil(10).saturating_sub(1)]
        };
        WorkloadReport {
            ops,
            io,
            mean_latency_ns,
            p90_latency_ns,
            io_per_op: if ops == 0 {
                0.0
            } else {
                io.total_blocks() as f64 / ops as f64
            },
        }
    }
}

struct LevelState {
    /// Oldest first; reads walk newest to oldest.
    runs: Vec<Run>,
}

enum MergeCursor {
    Mem(std::vec::IntoIter<Record>),
    Run {
        name: String,
        blocks: u64,
        next_block: u64,
        pending: std::vec::IntoIter<Record>,
    },
}

impl MergeCursor {
    fn next(
        &mut self,
        storage: &mut dyn Storage,
        io: &mut IoStats,
        compaction: bool,
    ) -> Result<Option<Record>> {
        match self {
            MergeCursor::Mem(iter) => Ok(iter.next()),
            MergeCursor::Run {
                name,
                blocks,
                next_block,
                pending,
            } => loop {
                if let Some(rec) = pending.next() {
                    return Ok(Some(rec));
                }
                if *next_block >= *blocks {
                    return Ok(None);
                }
                let raw = storage.read_block(name, *next_block)?;
                *next_block += 1;
                io.blocks_read += 1;
                if compaction {
                    io.compaction_blocks_read += 1;
                }
                *pending = decode_block(&raw)?.into_iter();
            },
        }
    }
}

pub struct LsmTree {
    env: Environment,
    active: LsmConfig,
    target: LsmConfig,
    buffer: BTreeMap<Vec<u8>, Option<Vec<u8>>>,
    levels: Vec<LevelState>,
    storage: Box<dyn Storage>,
    cache: BlockCache,
    stats: IoStats,
    next_seq: u64,
    history: Vec<CompactionEvent>,
}

impl LsmTree {
    /// Volatile engine for measurements and tests.
    pub fn open_memory(env: Environment, cfg: LsmConfig) -> Result<LsmTree> {
        LsmTree::open_with(env, cfg, Box::new(MemStorage::new()))
    }

    /// Durable engine in a directory. An existing manifest restores the tree
    /// (env must match); the passed config becomes the new target.
    pub fn open_dir(env: Environment, cfg: LsmConfig, dir: &Path) -> Result<LsmTree> {
        let storage = FileStorage::open(dir.to_path_buf(), env.block_bytes)?;
        LsmTree::open_with(env, cfg, Box::new(storage))
    }

    pub fn open_with(
        env: Environment,
        cfg: LsmConfig,
        mut storage: Box<dyn Storage>,
    ) -> Result<LsmTree> {
        env.validate()?;
        cfg.validate(&env)?;
        let restored = match storage.get_blob("MANIFEST")? {
            Some(bytes) => {
                let text = String::from_utf8(bytes).map_err(|_| Error::Decode {
                    what: "manifest",
                    msg: "not valid UTF-8".to_string(),
                })?;
                Some(parse_manifest(&text)?)
            }
            None => None,
        };
        let mut tree = LsmTree {
            env,
            active: cfg,
            target: cfg,
            buffer: BTreeMap::new(),
            levels: Vec::new(),
            storage,
            cache: BlockCache::new((cfg.cache_bytes / env.block_bytes) as usize),
            stats: IoStats::default(),
            next_seq: 1,
            history: Vec::new(),
        };
        if let Some(m) = restored {
            if m.env != env {
                return Err(Error::config(
                    "stored manifest was created under a different environment",
                ));
            }
            m.active.validate(&env)?;
            tree.active = m.active;
            tree.next_seq = m.next_seq;
            for row in &m.runs {
                if row.level == 0 {
                    return Err(Error::engine("manifest run at level 0"));
                }
                let run = Run::restore(
                    tree.storage.as_mut(),
                    row.level,
                    row.seq,
                    row.bits_per_key,
                )?;
                tree.ensure_level(row.level);
                tree.levels[(row.level - 1) as usize].runs.push(run);
            }
            // The restore scan is not a measured workload.
            tree.stats.reset();
            tree.storage.reset_counters();
        }
        if tree.storage.persistent() {
            tree.write_manifest()?;
        }
        Ok(tree)
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn active_config(&self) -> &LsmConfig {
        &self.active
    }

    pub fn target_config(&self) -> &LsmConfig {
        &self.target
    }

    pub fn stats(&self) -> &IoStats {
        &self.stats
    }

    /// Starts a new measurement window (engine and backend counters).
    pub fn reset_stats(&mut self) {
        self.stats.reset();
        self.storage.reset_counters();
    }

    /// Raw backend counters `(block fetches, block writes)` for accounting
    /// cross-checks.
    pub fn storage_counters(&self) -> (u64, u64) {
        (self.storage.block_fetches(), self.storage.block_writes())
    }

    pub fn compaction_events(&self) -> &[CompactionEvent] {
        &self.history
    }

    /// Entries per level, index 0 = level 1.
    pub fn level_entry_counts(&self) -> Vec<u64> {
        self.levels
            .iter()
            .map(|l| l.runs.iter().map(|r| r.entries).sum())
            .collect()
    }

    pub fn buffered_entries(&self) -> u64 {
        self.buffer.len() as u64
    }

    pub fn run_layout(&self) -> Vec<Vec<RunInfo>> {
        self.levels
            .iter()
            .map(|l| {
                l.runs
                    .iter()
                    .map(|r| RunInfo {
                        seq: r.seq,
                        entries: r.entries,
                        blocks: r.blocks,
                        bits_per_key: r.bits_per_key,
                    })
                    .collect()
            })
            .collect()
    }

    /// Entries the write buffer holds before flushing, under the target.
    pub fn buffer_capacity(&self) -> u64 {
        (self.target.buf_bytes / self.env.entry_bytes).max(1)
    }

    /// Entry capacity of 1-based `level` under the target config.
    pub fn level_capacity(&self, level: u32) -> u64 {
        let t = self.target.size_ratio as u128;
        let cap = (self.buffer_capacity() as u128)
            .saturating_mul(t - 1)
            .saturating_mul(t.saturating_pow(level - 1));
        cap.min(u64::MAX as u128) as u64
    }

    fn ensure_level(&mut self, level: u32) {
        while self.levels.len() < level as usize {
            self.levels.push(LevelState { runs: Vec::new() });
        }
    }

    /// Bits per key a new run at `level` receives: the filter budget spread
    /// by the Monkey rule over the live level occupancies as they will stand
    /// once the run lands (`incoming` entries joining `level`, detached
    /// merge inputs already gone).
    fn alloc_bits_per_key(&self, level: u32, incoming: u64) -> f64 {
        let deepest_live = self
            .levels
            .iter()
            .rposition(|l| !l.runs.is_empty())
            .map(|i| i as u32 + 1)
            .unwrap_or(0);
        let depth = deepest_live.max(level);
        let mut sizes: Vec<u64> = (1..=depth)
            .map(|i| {
                self.levels
                    .get((i - 1) as usize)
                    .map_or(0, |l| l.runs.iter().map(|r| r.entries).sum())
            })
            .collect();
        sizes[(level - 1) as usize] += incoming;
        let alloc = monkey_allocate(8.0 * self.target.filter_bytes as f64, &sizes);
        alloc[(level - 1) as usize]
    }

    pub fn put(&mut self, key: &[u8], value: &[u8]) -> Result<()> {
        self.stats.ops.puts += 1;
        self.buffer.insert(key.to_vec(), Some(value.to_vec()));
        self.maybe_flush()
    }

    pub fn delete(&mut self, key: &[u8]) -> Result<()> {
        self.stats.ops.deletes += 1;
        self.buffer.insert(key.to_vec(), None);
        self.maybe_flush()
    }

    fn maybe_flush(&mut self) -> Result<()> {
        if self.buffer.len() as u64 >= self.buffer_capacity() {
            self.flush()?;
        }
        Ok(())
    }

    /// Drains the write buffer into level 1 (merging with the resident run
    /// under leveling) and cascades capacity overflows.
    pub fn flush(&mut self) -> Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        self.ensure_level(1);
        let records: Vec<Record> = std::mem::take(&mut self.buffer).into_iter().collect();
        let inputs: Vec<Run> = match self.target.policy {
            Policy::Leveling => self.levels[0].runs.drain(..).rev().collect(),
            Policy::Tiering => Vec::new(),
        };
        self.build_merged(Some(records), inputs, 1, false)?;
        self.cascade()
    }

    fn cascade(&mut self) -> Result<()> {
        let mut li = 0;
        while li < self.levels.len() {
            let level = li as u32 + 1;
            let entries: u64 = self.levels[li].runs.iter().map(|r| r.entries).sum();
            let capacity = self.level_capacity(level);
            if entries > capacity {
                self.history.push(CompactionEvent {
                    level,
                    entries_before: entries,
                    trigger_capacity: capacity,
                });
                self.compact_level(level)?;
            }
            li += 1;
        }
        if self.conforms_to_target() {
            self.active = self.target;
        }
        Ok(())
    }

    fn compact_level(&mut self, level: u32) -> Result<()> {
        self.ensure_level(level + 1);
        let li = (level - 1) as usize;
        let mut inputs: Vec<Run> = self.levels[li].runs.drain(..).rev().collect();
        if self.target.policy == Policy::Leveling {
            inputs.extend(self.levels[li + 1].runs.drain(..).rev());
        }
        self.build_merged(None, inputs, level + 1, true)
    }

    /// Merges `mem` (newest) and `inputs` (already detached, newest first)
    /// into one new run at `out_level`, then deletes the inputs. Tombstones
    /// are dropped when the output holds the deepest data.
    fn build_merged(
        &mut self,
        mem: Option<Vec<Record>>,
        inputs: Vec<Run>,
        out_level: u32,
        compaction: bool,
    ) -> Result<()> {
        self.ensure_level(out_level);
        let drop_tombstones = self.levels[(out_level - 1) as usize..]
            .iter()
            .all(|l| l.runs.is_empty());
        let incoming = mem.as_ref().map_or(0, |m| m.len() as u64)
            + inputs.iter().map(|r| r.entries).sum::<u64>();
        let bits_per_key = self.alloc_bits_per_key(out_level, incoming);
        let seq = self.next_seq;
        self.next_seq += 1;

        let mut cursors: Vec<MergeCursor> = Vec::new();
        if let Some(records) = mem {
            cursors.push(MergeCursor::Mem(records.into_iter()));
        }
        for r in &inputs {
            cursors.push(MergeCursor::Run {
                name: r.file_name(),
                blocks: r.blocks,
                next_block: 0,
                pending: Vec::new().into_iter(),
            });
        }

        let mut builder = RunBuilder::begin(
            self.storage.as_mut(),
            out_level,
            seq,
            self.env.block_bytes as usize,
            self.env.block_entries().max(1) as usize,
            bits_per_key,
        )?;

        // K-way merge; on equal keys the lowest cursor index is newest and
        // wins, later duplicates are skipped.
        let mut heap: BinaryHeap<std::cmp::Reverse<(Vec<u8>, usize)>> = BinaryHeap::new();
        let mut current: Vec<Option<Record>> = Vec::with_capacity(cursors.len());
        for (i, cursor) in cursors.iter_mut().enumerate() {
            let rec = cursor.next(self.storage.as_mut(), &mut self.stats, compaction)?;
            if let Some(rec) = &rec {
                heap.push(std::cmp::Reverse((rec.0.clone(), i)));
            }
            current.push(rec);
        }
        let mut last_key: Option<Vec<u8>> = None;
        while let Some(std::cmp::Reverse((key, idx))) = heap.pop() {
            let (_, value) = current[idx].take().expect("cursor out of sync");
            if let Some(rec) =
                cursors[idx].next(self.storage.as_mut(), &mut self.stats, compaction)?
            {
                heap.push(std::cmp::Reverse((rec.0.clone(), idx)));
                current[idx] = Some(rec);
            }
            if last_key.as_deref() == Some(key.as_slice()) {
                continue; // older version of an emitted key
            }
            last_key = Some(key.clone());
            if value.is_none() && drop_tombstones {
                continue;
            }
            builder.push(self.storage.as_mut(), key, value)?;
        }

        let (new_run, written) = builder.finish(self.storage.as_mut())?;
        self.stats.blocks_written += written;
        if compaction {
            self.stats.compaction_blocks_written += written;
        }
        if let Some(run) = new_run {
            self.levels[(out_level - 1) as usize].runs.push(run);
        }
        for r in inputs {
            self.storage.remove(&Run::data_name(r.level, r.seq))?;
            self.storage.remove(&Run::filter_name(r.level, r.seq))?;
            self.cache.purge_run(r.seq);
        }
        Ok(())
    }

    fn read_cached(
        storage: &mut dyn Storage,
        cache: &mut BlockCache,
        io: &mut IoStats,
        run_seq: u64,
        name: &str,
        idx: u64,
    ) -> Result<Vec<u8>> {
        if let Some(block) = cache.get((run_seq, idx)) {
            io.cache_hits += 1;
            return Ok(block);
        }
        let block = storage.read_block(name, idx)?;
        io.blocks_read += 1;
        cache.insert((run_seq, idx), block.clone());
        Ok(block)
    }

    /// Most recent value for `key`. Probes the buffer, then runs newest to
    /// deepest; each filter-passing run costs at most one block fetch through
    /// the cache.
    pub fn get(&mut self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        if let Some(buffered) = self.buffer.get(key) {
            return Ok(match buffered {
                Some(v) => {
                    self.stats.ops.gets_found += 1;
                    Some(v.clone())
                }
                None => {
                    self.stats.ops.gets_missed += 1;
                    None
                }
            });
        }
        for li in 0..self.levels.len() {
            for ri in (0..self.levels[li].runs.len()).rev() {
                self.stats.filter_probes += 1;
                let (candidate, name, seq) = {
                    let run = &self.levels[li].runs[ri];
                    if !run.filter.maybe_contains(key) {
                        continue;
                    }
                    (run.candidate_block(key), run.file_name(), run.seq)
                };
                let Some(idx) = candidate else {
                    self.stats.filter_false_positives += 1;
                    continue;
                };
                let block = Self::read_cached(
                    self.storage.as_mut(),
                    &mut self.cache,
                    &mut self.stats,
                    seq,
                    &name,
                    idx,
                )?;
                let records = decode_block(&block)?;
                match records.binary_search_by(|r| r.0.as_slice().cmp(key)) {
                    Ok(pos) => {
                        return Ok(match &records[pos].1 {
                            Some(v) => {
                                self.stats.ops.gets_found += 1;
                                Some(v.clone())
                            }
                            None => {
                                self.stats.ops.gets_missed += 1;
                                None
                            }
                        });
                    }
                    Err(_) => self.stats.filter_false_positives += 1,
                }
            }
        }
        self.stats.ops.gets_missed += 1;
        Ok(None)
    }

    /// Up to `limit` live entries with keys ≥ `start`, ascending, newest
    /// version winning, tombstones filtered. Touches each overlapping run's
    /// overlapping blocks at most once, through the cache.
    pub fn range(&mut self, start: &[u8], limit: usize) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        self.stats.ops.ranges += 1;
        if limit == 0 {
            return Ok(Vec::new());
        }
        struct RangeCursor {
            seq: u64,
            name: String,
            blocks: u64,
            next_block: u64,
            pending: std::collections::VecDeque<Record>,
            mem: Option<std::vec::IntoIter<Record>>,
        }
        let mut cursors: Vec<RangeCursor> = Vec::new();
        let buffered: Vec<Record> = self
            .buffer
            .range(start.to_vec()..)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        cursors.push(RangeCursor {
            seq: 0,
            name: String::new(),
            blocks: 0,
            next_block: 0,
            pending: Default::default(),
            mem: Some(buffered.into_iter()),
        });
        for level in &self.levels {
            for run in level.runs.iter().rev() {
                if run.entries == 0 || run.max_key.as_slice() < start {
                    continue;
                }
                cursors.push(RangeCursor {
                    seq: run.seq,
                    name: run.file_name(),
                    blocks: run.blocks,
                    next_block: run.scan_start_block(start),
                    pending: Default::default(),
                    mem: None,
                });
            }
        }

        let mut heap: BinaryHeap<std::cmp::Reverse<(Vec<u8>, usize)>> = BinaryHeap::new();
        let mut current: Vec<Option<Record>> = (0..cursors.len()).map(|_| None).collect();
        let advance = |cursor: &mut RangeCursor,
                           storage: &mut dyn Storage,
                           cache: &mut BlockCache,
                           io: &mut IoStats|
         -> Result<Option<Record>> {
            loop {
                if let Some(iter) = &mut cursor.mem {
                    return Ok(iter.next());
                }
                if let Some(rec) = cursor.pending.pop_front() {
                    if rec.0.as_slice() < start {
                        continue; // head of the start block, before the range
                    }
                    return Ok(Some(rec));
                }
                if cursor.next_block >= cursor.blocks {
                    return Ok(None);
                }
                let block = Self::read_cached(
                    storage,
                    cache,
                    io,
                    cursor.seq,
                    &cursor.name,
                    cursor.next_block,
                )?;
                cursor.next_block += 1;
                cursor.pending = decode_block(&block)?.into();
            }
        };

        for i in 0..cursors.len() {
            if let Some(rec) = advance(
                &mut cursors[i],
                self.storage.as_mut(),
                &mut self.cache,
                &mut self.stats,
            )? {
                heap.push(std::cmp::Reverse((rec.0.clone(), i)));
                current[i] = Some(rec);
            }
        }

        let mut out = Vec::new();
        let mut last_key: Option<Vec<u8>> = None;
        while let Some(std::cmp::Reverse((key, idx))) = heap.pop() {
            if out.len() >= limit {
                break;
            }
            let (_, value) = current[idx].take().expect("cursor out of sync");
            if let Some(rec) = advance(
                &mut cursors[idx],
                self.storage.as_mut(),
                &mut self.cache,
                &mut self.stats,
            )? {
                heap.push(std::cmp::Reverse((rec.0.clone(), idx)));
                current[idx] = Some(rec);
            }
            if last_key.as_deref() == Some(key.as_slice()) {
                continue;
            }
            last_key = Some(key.clone());
            if let Some(v) = value {
                out.push((key, v));
            }
        }
        Ok(out)
    }

    /// Records the reconfiguration target. No data moves now: capacities,
    /// flush sizing, and new-run filter widths follow the target from here
    /// on, and the cache is resized immediately.
    pub fn set_target_config(&mut self, cfg: LsmConfig) -> Result<()> {
        cfg.validate(&self.env)?;
        self.target = cfg;
        self.cache
            .resize((cfg.cache_bytes / self.env.block_bytes) as usize);
        if self.conforms_to_target() {
            self.active = self.target;
        }
        Ok(())
    }

    fn conforms_to_target(&self) -> bool {
        if self.buffer.len() as u64 > self.buffer_capacity() {
            return false;
        }
        let max_runs = match self.target.policy {
            Policy::Leveling => 1,
            Policy::Tiering => self.target.size_ratio as usize,
        };
        for (li, level) in self.levels.iter().enumerate() {
            let entries: u64 = level.runs.iter().map(|r| r.entries).sum();
            if entries > self.level_capacity(li as u32 + 1) || level.runs.len() > max_runs {
                return false;
            }
        }
        true
    }

    /// Inserts the dense key universe `0..n_keys` in a scrambled order with
    /// deterministic payloads; the standard preload before measurements.
    pub fn preload(&mut self, n_keys: u64, shuffle_seed: u64) -> Result<()> {
        let scrambler = RankScrambler::new(n_keys.max(1), shuffle_seed);
        for i in 0..n_keys {
            let key = scrambler.apply(i);
            self.put(&encode_key(key), &value_payload(&self.env, key))?;
        }
        Ok(())
    }

    /// Executes a stream and reports measured latency and I/O deltas.
    pub fn run_workload(&mut self, stream: &OperationStream) -> Result<WorkloadReport> {
        let before = self.stats;
        let mut latencies: Vec<u64> = Vec::with_capacity(stream.len());
        self.execute_ops(&stream.ops, &mut latencies)?;
        Ok(WorkloadReport::from_measured(
            self.stats.delta_since(&before),
            latencies,
        ))
    }

    /// Executes operations, appending per-operation latencies, so callers can
    /// interleave work between chunks and still summarize the whole exactly.
    pub(crate) fn execute_ops(&mut self, ops: &[Operation], latencies: &mut Vec<u64>) -> Result<()> {
        let started = Instant::now();
        for op in ops {
            let op_start = Instant::now();
            match op {
                Operation::PointGetExisting(k) | Operation::PointGetAbsent(k) => {
                    self.get(&encode_key(*k))?;
                }
                Operation::RangeGet { start, len } => {
                    self.range(&encode_key(*start), *len as usize)?;
                }
                Operation::Put { key, value_seed } => {
                    let value = value_payload(&self.env, *value_seed);
                    self.put(&encode_key(*key), &value)?;
                }
                Operation::Delete(k) => {
                    self.delete(&encode_key(*k))?;
                }
            }
            latencies.push(op_start.elapsed().as_nanos() as u64);
        }
        self.stats.wall_ns += started.elapsed().as_nanos() as u64;
        Ok(())
    }

    fn write_manifest(&mut self) -> Result<()> {
        let runs: Vec<ManifestRun> = self
            .levels
            .iter()
            .flat_map(|l| l.runs.iter())
            .map(|r| ManifestRun {
                level: r.level,
                seq: r.seq,
                bits_per_key: r.bits_per_key,
            })
            .collect();
        let manifest = ManifestData {
            env: self.env,
            active: self.active,
            target: self.target,
            next_seq: self.next_seq,
            runs,
        };
        self.storage
            .put_blob("MANIFEST", serialize_manifest(&manifest).as_bytes())
    }

    /// Flushes the buffer and persists the manifest. Without a close, a
    /// durable tree reopens to its last closed state.
    pub fn close(mut self) -> Result<()> {
        self.flush()?;
        self.write_manifest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{generate_stream, KeyDistribution, KeyUniverse, WorkloadMix};
    use proptest::prelude::*;

    fn env_small() -> Environment {
        Environment::new(4096, 32, 128, 4096, 512).unwrap()
    }

    fn cfg(policy: Policy, t: u32, buf: u64, filter: u64, cache: u64) -> LsmConfig {
        LsmConfig {
            policy,
            size_ratio: t,
            buf_bytes: buf,
            filter_bytes: filter,
            cache_bytes: cache,
        }
    }

    fn leveling_small() -> LsmConfig {
        cfg(Policy::Leveling, 4, 512, 2048, 1536)
    }

    #[test]
    fn empty_tree_and_invalid_config() {
        let env = env_small();
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        assert_eq!(tree.get(&encode_key(7)).unwrap(), None);
        assert_eq!(tree.stats().ops.gets_missed, 1);
        assert_eq!(tree.stats().blocks_read, 0);

        let bad_split = cfg(Policy::Leveling, 4, 512, 2048, 1537);
        assert!(LsmTree::open_memory(env, bad_split).is_err());
        let bad_ratio = cfg(Policy::Leveling, 1, 512, 2048, 1536);
        assert!(LsmTree::open_memory(env, bad_ratio).is_err());
    }

    #[test]
    fn recency_and_tombstones() {
        let env = env_small();
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        tree.put(&encode_key(5), b"v1").unwrap();
        tree.flush().unwrap();
        tree.put(&encode_key(5), b"v2").unwrap();
        assert_eq!(tree.get(&encode_key(5)).unwrap().unwrap(), b"v2");
        tree.flush().unwrap();
        assert_eq!(tree.get(&encode_key(5)).unwrap().unwrap(), b"v2");

        tree.delete(&encode_key(5)).unwrap();
        assert_eq!(tree.get(&encode_key(5)).unwrap(), None);
        tree.flush().unwrap();
        assert_eq!(tree.get(&encode_key(5)).unwrap(), None);
        // The lone level holds the deepest data, so the tombstone is gone.
        let layout = tree.run_layout();
        let total: u64 = layout.iter().flatten().map(|r| r.entries).sum();
        assert_eq!(total, 0);
    }

    #[test]
    fn preload_contents_are_retrievable() {
        let env = Environment::new(64, 32, 128, 4096, 512).unwrap();
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        tree.preload(64, 42).unwrap();
        for k in 0..64u64 {
            let got = tree.get(&encode_key(k)).unwrap();
            assert_eq!(got.unwrap(), value_payload(&env, k), "key {k}");
        }
        assert_eq!(tree.get(&encode_key(64 | 1 << 63)).unwrap(), None);
    }

    #[test]
    fn level_structure_after_preload() {
        let env = env_small();
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        tree.preload(4096, 7).unwrap();
        assert_eq!(tree.buffered_entries(), 0);

        let counts = tree.level_entry_counts();
        let deepest = counts.iter().rposition(|&c| c > 0).unwrap() as u32 + 1;
        assert_eq!(deepest, level_count(&env, 4, 512).unwrap());
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                c <= tree.level_capacity(i as u32 + 1),
                "level {} over capacity",
                i + 1
            );
        }
        // Leveling keeps at most one run per level.
        assert!(tree.run_layout().iter().all(|l| l.len() <= 1));
        assert_eq!(counts.iter().sum::<u64>(), 4096);
    }

    #[test]
    fn tiering_zero_result_reads_equal_run_count() {
        let env = Environment::new(4096, 32, 128, 512, 512).unwrap();
        let mut tree =
            LsmTree::open_memory(env, cfg(Policy::Tiering, 4, 512, 0, 0)).unwrap();
        tree.preload(3000, 3).unwrap();
        let runs: usize = tree.run_layout().iter().map(|l| l.len()).sum();
        assert!(runs >= 3, "want several runs, got {runs}");

        let before = *tree.stats();
        for i in 0..10u64 {
            assert_eq!(tree.get(&encode_key(i | 1 << 63)).unwrap(), None);
        }
        let delta = tree.stats().delta_since(&before);
        // No filters and no cache: every run costs exactly one block probe.
        assert_eq!(delta.blocks_read, 10 * runs as u64);
        assert_eq!(delta.filter_false_positives, 10 * runs as u64);
        // Tiering keeps at most T runs per level.
        assert!(tree.run_layout().iter().all(|l| l.len() <= 4));
    }

    #[test]
    fn range_scans() {
        let env = env_small();
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        assert!(tree.range(&encode_key(0), 4).unwrap().is_empty());

        tree.preload(4096, 11).unwrap();
        let before = *tree.stats();
        let got = tree.range(&encode_key(100), 4).unwrap();
        let keys: Vec<u64> = got
            .iter()
            .map(|(k, _)| u64::from_be_bytes(k.as_slice().try_into().unwrap()))
            .collect();
        assert_eq!(keys, vec![100, 101, 102, 103]);
        for (k, v) in &got {
            let key = u64::from_be_bytes(k.as_slice().try_into().unwrap());
            assert_eq!(v, &value_payload(&env, key));
        }
        let delta = tree.stats().delta_since(&before);
        let runs: u64 = tree.run_layout().iter().map(|l| l.len() as u64).sum();
        // s = B touches at most two blocks per overlapping run.
        assert!(delta.blocks_read + delta.cache_hits <= 2 * runs);

        // Past the top of the key space: nothing.
        assert!(tree.range(&encode_key(1 << 62), 4).unwrap().is_empty());
    }

    #[test]
    fn oracle_equivalence_medium() {
        use rand::Rng;
        use rand::SeedableRng;
        let env = env_small();
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        let mut oracle: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1234);
        for i in 0..20_000u64 {
            match rng.gen_range(0..10) {
                0..=3 => {
                    let k = rng.gen_range(0..600u64);
                    let v = value_payload(&env, k.wrapping_add(i << 32));
                    tree.put(&encode_key(k), &v).unwrap();
                    oracle.insert(k, v);
                }
                4 => {
                    let k = rng.gen_range(0..600u64);
                    tree.delete(&encode_key(k)).unwrap();
                    oracle.remove(&k);
                }
                5..=7 => {
                    let k = rng.gen_range(0..700u64);
                    assert_eq!(
                        tree.get(&encode_key(k)).unwrap(),
                        oracle.get(&k).cloned(),
                        "get {k} at op {i}"
                    );
                }
                8 => {
                    let k = rng.gen_range(0..64u64) | 1 << 63;
                    assert_eq!(tree.get(&encode_key(k)).unwrap(), None);
                }
                _ => {
                    let start = rng.gen_range(0..700u64);
                    let limit = rng.gen_range(1..8usize);
                    let got = tree.range(&encode_key(start), limit).unwrap();
                    let want: Vec<(Vec<u8>, Vec<u8>)> = oracle
                        .range(start..)
                        .take(limit)
                        .map(|(k, v)| (encode_key(*k).to_vec(), v.clone()))
                        .collect();
                    assert_eq!(got, want, "range {start}+{limit} at op {i}");
                }
            }
        }
    }

    #[test]
    fn file_backend_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let env = env_small();
        let config = leveling_small();
        let layout_before;
        {
            let mut tree = LsmTree::open_dir(env, config, dir.path()).unwrap();
            tree.preload(500, 9).unwrap();
            tree.flush().unwrap();
            layout_before = tree.run_layout();
            tree.close().unwrap();
        }
        let other = cfg(Policy::Leveling, 8, 512, 1024, 2560);
        let mut tree = LsmTree::open_dir(env, other, dir.path()).unwrap();
        assert_eq!(tree.run_layout(), layout_before);
        assert_eq!(tree.active_config(), &config);
        assert_eq!(tree.target_config(), &other);
        assert_eq!(tree.stats().blocks_read, 0);
        for k in [0u64, 17, 123, 499] {
            assert_eq!(
                tree.get(&encode_key(k)).unwrap().unwrap(),
                value_payload(&env, k)
            );
        }

        let bad_env = Environment::new(4096, 32, 128, 8192, 512).unwrap();
        assert!(LsmTree::open_dir(bad_env, cfg(Policy::Leveling, 4, 512, 2048, 5632), dir.path()).is_err());
    }

    #[test]
    fn workload_report_empty_and_deterministic() {
        let env = env_small();
        let empty = OperationStream { ops: Vec::new() };
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        let report = tree.run_workload(&empty).unwrap();
        assert_eq!(report.ops, 0);
        assert_eq!(report.io_per_op, 0.0);
        assert_eq!(report.mean_latency_ns, 0.0);

        let mix = WorkloadMix::from_fractions(0.2, 0.3, 0.1, 0.4).unwrap();
        let dist = KeyDistribution::zipfian(0.5, 77);
        let universe = KeyUniverse::new(4096);
        let stream = generate_stream(&mix, &dist, 4000, &universe).unwrap();

        let mut reports = Vec::new();
        for _ in 0..2 {
            let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
            tree.preload(4096, 1).unwrap();
            tree.reset_stats();
            let r = tree.run_workload(&stream).unwrap();
            reports.push((r.io, tree.run_layout(), r.ops));
        }
        assert_eq!(reports[0].0.blocks_read, reports[1].0.blocks_read);
        assert_eq!(reports[0].0.blocks_written, reports[1].0.blocks_written);
        assert_eq!(reports[0].0.filter_probes, reports[1].0.filter_probes);
        assert_eq!(reports[0].0.cache_hits, reports[1].0.cache_hits);
        assert_eq!(reports[0].1, reports[1].1);
        assert_eq!(reports[0].2, 4000);
    }

    #[test]
    fn write_io_near_model() {
        let env = env_small();
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        tree.preload(4096, 5).unwrap();
        tree.reset_stats();
        for k in 4096..12288u64 {
            tree.put(&encode_key(k), &value_payload(&env, k)).unwrap();
        }
        let per_op = tree.stats().blocks_written as f64 / 8192.0;
        let levels = level_count(&env, 4, 512).unwrap() as f64;
        let model = levels * 4.0 / env.block_entries() as f64;
        let ratio = per_op / model;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "measured/model = {per_op}/{model} = {ratio}"
        );
    }

    #[test]
    fn counting_shim_matches_backend() {
        let env = env_small();
        let mix = WorkloadMix::from_fractions(0.25, 0.25, 0.1, 0.4).unwrap();
        let dist = KeyDistribution::uniform(3);
        let stream = generate_stream(&mix, &dist, 5000, &KeyUniverse::new(4096)).unwrap();
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        tree.preload(4096, 2).unwrap();
        tree.reset_stats();
        tree.run_workload(&stream).unwrap();
        let (fetches, writes) = tree.storage_counters();
        assert_eq!(tree.stats().blocks_read, fetches);
        assert_eq!(tree.stats().blocks_written, writes);
        assert!(tree.stats().compaction_blocks_read <= tree.stats().blocks_read);
        tree.reset_stats();
        assert_eq!(tree.storage_counters(), (0, 0));
        assert_eq!(tree.stats().blocks_read, 0);
    }

    #[test]
    fn lazy_retarget_converges() {
        let env = env_small();
        let wide = cfg(Policy::Leveling, 8, 512, 2048, 1536);
        let narrow = cfg(Policy::Leveling, 3, 512, 2048, 1536);
        let mut tree = LsmTree::open_memory(env, wide).unwrap();
        tree.preload(4096, 13).unwrap();

        // Same config back: already conforming, applies at once.
        tree.set_target_config(wide).unwrap();
        assert_eq!(tree.active_config(), &wide);

        tree.set_target_config(narrow).unwrap();
        assert_eq!(tree.target_config(), &narrow);
        assert_eq!(tree.active_config(), &wide, "narrower tree cannot conform yet");
        assert_eq!(tree.cache.capacity(), (1536 / 128) as usize);

        let events_before = tree.compaction_events().len();
        let mut k = 50_000u64;
        while tree.active_config() != &narrow {
            tree.put(&encode_key(k), &value_payload(&env, k)).unwrap();
            k += 1;
            assert!(k < 80_000, "no convergence after {} puts", k - 50_000);
        }
        assert!(tree.compaction_events().len() > events_before);
        let counts = tree.level_entry_counts();
        for (i, &c) in counts.iter().enumerate() {
            assert!(c <= tree.level_capacity(i as u32 + 1));
        }
    }

    #[test]
    fn retarget_widens_new_run_filters() {
        let env = env_small();
        let mut tree = LsmTree::open_memory(env, leveling_small()).unwrap();
        tree.preload(4096, 21).unwrap();

        let fat_filters = cfg(Policy::Leveling, 4, 512, 3072, 512);
        tree.set_target_config(fat_filters).unwrap();

        let fill = tree.buffer_capacity();
        let mut sizes = tree.level_entry_counts();
        let incoming = fill + sizes[0];
        sizes[0] = incoming;
        let want = monkey_allocate(8.0 * 3072.0, &sizes)[0];
        for k in 0..fill {
            tree.put(&encode_key(k), &value_payload(&env, k)).unwrap();
        }
        let l1 = &tree.run_layout()[0];
        assert_eq!(l1.len(), 1);
        assert!((l1[0].bits_per_key - want).abs() < 1e-9);
        assert!(want > leveling_small().bits_per_key(&env));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn prop_engine_matches_map(ops in proptest::collection::vec(
            (0u8..6, 0u64..128, 1u64..6), 0..300)) {
            let env = env_small();
            let mut tree = LsmTree::open_memory(env, cfg(Policy::Leveling, 3, 512, 2048, 1536)).unwrap();
            let mut oracle: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
            for (i, (sel, key, len)) in ops.into_iter().enumerate() {
                match sel {
                    0 | 1 => {
                        let v = value_payload(&env, key ^ (i as u64) << 40);
                        tree.put(&encode_key(key), &v).unwrap();
                        oracle.insert(key, v);
                    }
                    2 => {
                        tree.delete(&encode_key(key)).unwrap();
                        oracle.remove(&key);
                    }
                    3 => prop_assert_eq!(
                        tree.get(&encode_key(key)).unwrap(),
                        oracle.get(&key).cloned()
                    ),
                    4 => prop_assert_eq!(tree.get(&encode_key(key | 1 << 63)).unwrap(), None),
                    _ => {
                        let got = tree.range(&encode_key(key), len as usize).unwrap();
                        let want: Vec<(Vec<u8>, Vec<u8>)> = oracle
                            .range(key..)
                            .take(len as usize)
                            .map(|(k, v)| (encode_key(*k).to_vec(), v.clone()))
                            .collect();
                        prop_assert_eq!(got, want);
                    }
                }
            }
        }
    }
}
