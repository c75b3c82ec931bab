//! Exact I/O and operation accounting.
//!
//! Counters are monotone over an engine's lifetime; [`IoStats::delta_since`]
//! gives the window between two snapshots and `reset` starts a new window.
//! `blocks_read`/`blocks_written` count every storage block transfer,
//! including compaction traffic; the `compaction_*` fields break that share
//! out so query-path and maintenance I/O can be separated. Filter and
//! manifest files are metadata and are never counted.

/// Operation counts by kind and point-lookup outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub gets_found: u64,
    pub gets_missed: u64,
    pub ranges: u64,
    pub puts: u64,
    pub deletes: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.gets_found + self.gets_missed + self.ranges + self.puts + self.deletes
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IoStats {
    /// Storage block fetches (cache misses plus compaction reads).
    pub blocks_read: u64,
    /// Storage block writes (flushes plus compaction output).
    pub blocks_written: u64,
    /// Share of `blocks_read` issued by compactions (they bypass the cache).
    pub compaction_blocks_read: u64,
    /// Share of `blocks_written` issued by compactions (flushes excluded).
    pub compaction_blocks_written: u64,
    pub filter_probes: u64,
    /// Filter said "maybe" for a key the run did not contain.
    pub filter_false_positives: u64,
    pub cache_hits: u64,
    /// Wall time accumulated by `run_workload` windows.
    pub wall_ns: u64,
    pub ops: OpCounts,
}

impl IoStats {
    pub fn reset(&mut self) {
        *self = IoStats::default();
    }

    /// Counter-wise difference from an earlier snapshot of the same engine.
    pub fn delta_since(&self, earlier: &IoStats) -> IoStats {
        IoStats {
            blocks_read: self.blocks_read - earlier.blocks_read,
            blocks_written: self.blocks_written - earlier.blocks_written,
            compaction_blocks_read: self.compaction_blocks_read
                - earlier.compaction_blocks_read,
            compaction_blocks_written: self.compaction_blocks_written
                - earlier.compaction_blocks_written,
            filter_probes: self.filter_probes - earlier.filter_probes,
            filter_false_positives: self.filter_false_positives
                - earlier.filter_false_positives,
            cache_hits: self.cache_hits - earlier.cache_hits,
            wall_ns: self.wall_ns - earlier.wall_ns,
            ops: OpCounts {
                gets_found: self.ops.gets_found - earlier.ops.gets_found,
                gets_missed: self.ops.gets_missed - earlier.ops.gets_missed,
                ranges: self.ops.ranges - earlier.ops.ranges,
                puts: self.ops.puts - earlier.ops.puts,
                deletes: self.ops.deletes - earlier.ops.deletes,
            },
        }
    }

    /// Total block traffic, the numerator of I/Os per operation.
    pub fn total_blocks(&self) -> u64 {
        self.blocks_read + self.blocks_written
    }
}
