//! Workload mixes and deterministic operation-stream generation.
//!
//! A mix is four operation fractions: zero-result point lookups (`v`),
//! non-zero-result point lookups (`r`), range lookups (`q`), and writes (`w`),
//! plus range selectivity `s` and the fraction of writes that are deletes.
//! [`training_workloads`] and [`test_workloads`] ship the two preset suites
//! used throughout the crate: 15 mixes spanning the simplex corners and
//! centers, and a 24-mix sequence whose weights shift progressively (the
//! dynamic controller's input).
//!
//! Existing keys are the dense range `0..universe.keys`; absent-key lookups
//! set the top bit, so they provably never collide with anything ingested.
//! Generation is value-level and deterministic: the same (mix, distribution,
//! count, universe) always yields byte-identical streams.

mod zipfian;

pub use zipfian::ZipfianRanks;

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Keys with this bit set are reserved for zero-result lookups.
pub const ABSENT_KEY_BIT: u64 = 1 << 63;

/// Default range selectivity in entries: short ranges that touch at most two
/// blocks per run at every supported block shape.
pub const DEFAULT_SELECTIVITY: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadMix {
    /// Fraction of zero-result point lookups.
    pub v: f64,
    /// Fraction of non-zero-result point lookups.
    pub r: f64,
    /// Fraction of range lookups.
    pub q: f64,
    /// Fraction of writes.
    pub w: f64,
    /// Range selectivity in entries.
    pub s: u64,
    /// Fraction of writes that are deletes.
    pub delete_fraction: f64,
}

impl WorkloadMix {
    pub fn new(v: f64, r: f64, q: f64, w: f64, s: u64, delete_fraction: f64) -> Result<Self> {
        let mix = WorkloadMix {
            v,
            r,
            q,
            w,
            s,
            delete_fraction,
        };
        mix.validate()?;
        Ok(mix)
    }

    /// Four operation fractions with default selectivity and no deletes.
    pub fn from_fractions(v: f64, r: f64, q: f64, w: f64) -> Result<Self> {
        Self::new(v, r, q, w, DEFAULT_SELECTIVITY, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.v, self.r, self.q, self.w];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p) || !p.is_finite()) {
            return Err(Error::config(format!(
                "operation fractions must lie in [0, 1], got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "operation fractions must sum to 1, got {sum}"
            )));
        }
        if !(0.0..=1.0).contains(&self.delete_fraction) {
            return Err(Error::config(format!(
                "delete_fraction must lie in [0, 1], got {}",
                self.delete_fraction
            )));
        }
        Ok(())
    }

    /// Largest absolute difference between the operation fractions of two mixes.
    pub fn max_fraction_delta(&self, other: &WorkloadMix) -> f64 {
        (self.v - other.v)
            .abs()
            .max((self.r - other.r).abs())
            .max((self.q - other.q).abs())
            .max((self.w - other.w).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistKind {
    Uniform,
    Zipfian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyDistribution {
    pub kind: DistKind,
    /// Zipfian skew in [0, 0.99]; 0 is uniform over ranks.
    pub theta: f64,
    pub seed: u64,
}

impl KeyDistribution {
    pub fn uniform(seed: u64) -> Self {
        KeyDistribution {
            kind: DistKind::Uniform,
            theta: 0.0,
            seed,
        }
    }

    pub fn zipfian(theta: f64, seed: u64) -> Self {
        KeyDistribution {
            kind: DistKind::Zipfian,
            theta,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == DistKind::Zipfian && !(0.0..=0.99).contains(&self.theta) {
            return Err(Error::config(format!(
                "zipfian theta must lie in [0, 0.99], got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

/// The pool of keys known to exist: the dense range `0..keys`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyUniverse {
    pub keys: u64,
}

impl KeyUniverse {
    pub fn new(keys: u64) -> Self {
        KeyUniverse { keys }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation {
    PointGetExisting(u64),
    PointGetAbsent(u64),
    RangeGet { start: u64, len: u64 },
    /// Value bytes are materialized lazily from `value_seed` by the executor,
    /// so half-million-op streams stay small.
    Put { key: u64, value_seed: u64 },
    Delete(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    AbsentGet,
    ExistingGet,
    Range,
    Put,
    Delete,
}

impl Operation {
    pub fn kind(&self) -> OpKind {
        match self {
            Operation::PointGetAbsent(_) => OpKind::AbsentGet,
            Operation::PointGetExisting(_) => OpKind::ExistingGet,
            Operation::RangeGet { .. } => OpKind::Range,
            Operation::Put { .. } => OpKind::Put,
            Operation::Delete(_) => OpKind::Delete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationStream {
    pub ops: Vec<Operation>,
}

impl OperationStream {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Empirical operation fractions of a window of operations. Selectivity is
/// the mean observed range length; delete_fraction the observed share of
/// deletes among writes.
pub fn empirical_mix(ops: &[Operation]) -> WorkloadMix {
    let mut counts = [0u64; 4]; // v, r, q, w
    let mut deletes = 0u64;
    let mut range_len_sum = 0u64;
    for op in ops {
        match op {
            Operation::PointGetAbsent(_) => counts[0] += 1,
            Operation::PointGetExisting(_) => counts[1] += 1,
            Operation::RangeGet { len, .. } => {
                counts[2] += 1;
                range_len_sum += len;
            }
            Operation::Put { .. } => counts[3] += 1,
            Operation::Delete(_) => {
                counts[3] += 1;
                deletes += 1;
            }
        }
    }
    let total = ops.len().max(1) as f64;
    WorkloadMix {
        v: counts[0] as f64 / total,
        r: counts[1] as f64 / total,
        q: counts[2] as f64 / total,
        w: counts[3] as f64 / total,
        s: if let Some(mean) = range_len_sum.checked_div(counts[2]) {
            mean
        } else {
            DEFAULT_SELECTIVITY
        },
        delete_fraction: if counts[3] > 0 {
            deletes as f64 / counts[3] as f64
        } else {
            0.0
        },
    }
}

/// Operation percentages of the 15 training workloads: the simplex center,
/// four near-pure corners, and the 2- and 3-operation blends.
const TRAINING_PERCENTS: [[u32; 4]; 15] = [
    [25, 25, 25, 25],
    [97, 1, 1, 1],
    [1, 97, 1, 1],
    [1, 1, 97, 1],
    [1, 1, 1, 97],
    [49, 49, 1, 1],
    [49, 1, 49, 1],
    [49, 1, 1, 49],
    [1, 49, 49, 1],
    [1, 49, 1, 49],
    [1, 1, 49, 49],
    [33, 33, 33, 1],
    [33, 33, 1, 33],
    [33, 1, 33, 33],
    [1, 33, 33, 33],
];

/// Operation percentages of the 24 test workloads; adjacent columns shift
/// weight progressively so consecutive phases drift across the simplex.
const TEST_PERCENTS: [[u32; 4]; 24] = [
    [60, 5, 5, 30],
    [75, 5, 5, 15],
    [91, 3, 3, 3],
    [75, 15, 5, 5],
    [60, 30, 5, 5],
    [45, 45, 5, 5],
    [30, 60, 5, 5],
    [15, 75, 5, 5],
    [3, 91, 3, 3],
    [5, 75, 15, 5],
    [5, 60, 30, 5],
    [5, 45, 45, 5],
    [5, 30, 60, 5],
    [5, 15, 75, 5],
    [3, 3, 91, 3],
    [5, 5, 75, 15],
    [5, 5, 60, 30],
    [5, 5, 45, 45],
    [5, 5, 30, 60],
    [5, 5, 15, 75],
    [3, 3, 3, 91],
    [15, 5, 5, 75],
    [30, 5, 5, 60],
    [45, 5, 5, 45],
];

fn mixes_from_percents(percents: &[[u32; 4]]) -> Vec<WorkloadMix> {
    percents
        .iter()
        .map(|[v, r, q, w]| {
            WorkloadMix::from_fractions(
                *v as f64 / 100.0,
                *r as f64 / 100.0,
                *q as f64 / 100.0,
                *w as f64 / 100.0,
            )
            .expect("preset tables are valid")
        })
        .collect()
}

/// The 15 training workload mixes.
pub fn training_workloads() -> Vec<WorkloadMix> {
    mixes_from_percents(&TRAINING_PERCENTS)
}

/// The 24 shifting test workload mixes, in sequence order.
pub fn test_workloads() -> Vec<WorkloadMix> {
    mixes_from_percents(&TEST_PERCENTS)
}

/// Bijective scrambler over `[0, n)`: a tiny 4-round Feistel network with
/// cycle walking. Spreads hot Zipfian ranks across the whole key space so
/// popularity is not correlated with block adjacency.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RankScrambler {
    n: u64,
    half_bits: u32,
    mask: u64,
    keys: [u64; 4],
}

impl RankScrambler {
    pub(crate) fn new(n: u64, seed: u64) -> Self {
        let bits = 64 - n.max(2).next_power_of_two().leading_zeros();
        let half_bits = bits.div_ceil(2);
        let mut keys = [0u64; 4];
        let mut state = seed ^ 0x6a09_e667_f3bc_c908;
        for k in &mut keys {
            state = splitmix64(state);
            *k = state;
        }
        RankScrambler {
            n,
            half_bits,
            mask: (1u64 << half_bits) - 1,
            keys,
        }
    }

    pub(crate) fn apply(&self, rank: u64) -> u64 {
        if self.n <= 2 {
            return rank;
        }
        let mut x = rank;
        loop {
            let mut left = x >> self.half_bits;
            let mut right = x & self.mask;
            for k in self.keys {
                let f = splitmix64(right ^ k) & self.mask;
                let new_right = left ^ f;
                left = right;
                right = new_right;
            }
            x = (left << self.half_bits) | right;
            if x < self.n {
                return x;
            }
        }
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generates a deterministic operation stream. Operation kinds are drawn
/// i.i.d. with probabilities (v, r, q, w); keys follow `dist` over the key
/// universe (range starts are uniform; see module docs). Writes update
/// existing keys so the entry count stays stationary.
pub fn generate_stream(
    mix: &WorkloadMix,
    dist: &KeyDistribution,
    count: usize,
    universe: &KeyUniverse,
) -> Result<OperationStream> {
    mix.validate()?;
    dist.validate()?;
    if count == 0 {
        return Err(Error::config("stream count must be positive"));
    }
    if universe.keys == 0 {
        return Err(Error::config("key universe is empty"));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(dist.seed);
    let zipf = match dist.kind {
        DistKind::Zipfian => Some(ZipfianRanks::new(universe.keys, dist.theta)),
        DistKind::Uniform => None,
    };
    let scrambler = RankScrambler::new(universe.keys, dist.seed);
    let draw_key = |rng: &mut ChaCha12Rng| -> u64 {
        let rank = match &zipf {
            Some(z) => z.next(rng),
            None => rng.gen_range(0..universe.keys),
        };
        scrambler.apply(rank)
    };

    let thresholds = [mix.v, mix.v + mix.r, mix.v + mix.r + mix.q];
    let mut ops = Vec::with_capacity(count);
    for _ in 0..count {
        let pick: f64 = rng.gen();
        let op = if pick < thresholds[0] {
            Operation::PointGetAbsent(draw_key(&mut rng) | ABSENT_KEY_BIT)
        } else if pick < thresholds[1] {
            Operation::PointGetExisting(draw_key(&mut rng))
        } else if pick < thresholds[2] {
            Operation::RangeGet {
                start: rng.gen_range(0..universe.keys),
                len: mix.s.max(1),
            }
        } else if (rng.gen::<f64>()) < mix.delete_fraction {
            Operation::Delete(draw_key(&mut rng))
        } else {
            Operation::Put {
                key: draw_key(&mut rng),
                value_seed: rng.gen(),
            }
        };
        ops.push(op);
    }
    Ok(OperationStream { ops })
}

/// Parses a workload file: one `v,r,q,w,s,delete_fraction` line per mix.
/// Blank lines and `#` comments are skipped.
pub fn parse_workload_file(name: &str, text: &str) -> Result<Vec<WorkloadMix>> {
    let mut mixes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                name,
                idx + 1,
                format!("expected 6 comma-separated fields, got {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::parse(name, idx + 1, format!("field {}: {e}", i + 1)))
        };
        let s = fields[4]
            .parse::<u64>()
            .map_err(|e| Error::parse(name, idx + 1, format!("field 5: {e}")))?;
        let mix = WorkloadMix::new(num(0)?, num(1)?, num(2)?, num(3)?, s, num(5)?)
            .map_err(|e| Error::parse(name, idx + 1, e.to_string()))?;
        mixes.push(mix);
    }
    Ok(mixes)
}

/// Renders mixes in the workload file format.
pub fn format_workload_file(mixes: &[WorkloadMix]) -> String {
    let mut out = String::new();
    for m in mixes {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.v, m.r, m.q, m.w, m.s, m.delete_fraction
        ));
    }
    out
}
