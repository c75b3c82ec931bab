//! Per-run Bloom filters and the across-level filter budget allocation.
//!
//! A filter sized at `b` bits per key uses `k = ⌈b·ln 2⌉` probe positions via
//! double hashing. The budget allocator assigns each level a false-positive
//! rate proportional to its entry count (clamped at 1), the Lagrange optimum
//! for minimizing the sum of rates at fixed total memory, then converts rates
//! back to bits per key. Deeper (larger) levels therefore get fewer bits.

use crate::error::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn hash_bytes(key: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in key {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(h)
}

/// The two base hashes double hashing expands into probe positions.
pub fn hash_pair(key: &[u8], seed: u64) -> (u64, u64) {
    let h1 = hash_bytes(key, seed);
    let h2 = hash_bytes(key, seed ^ 0xa5a5_a5a5_a5a5_a5a5) | 1;
    (h1, h2)
}

/// Standard false-positive rate of a `b` bits-per-key filter with
/// `k = ⌈b·ln 2⌉` hashes: `(1 − e^{−k/b})^k`.
pub fn design_fpr(bits_per_key: f64) -> f64 {
    if bits_per_key <= 0.0 {
        return 1.0;
    }
    let k = (bits_per_key * LN2).ceil();
    (1.0 - (-k / bits_per_key).exp()).powf(k)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u8>,
    n_bits: u64,
    k: u32,
    seed: u64,
}

impl BloomFilter {
    /// An empty filter sized for `n_keys` at `bits_per_key`. Zero bits (or
    /// zero keys) produce a pass-through filter that accepts everything.
    pub fn new(n_keys: u64, bits_per_key: f64, seed: u64) -> BloomFilter {
        let n_bits = (n_keys as f64 * bits_per_key).ceil() as u64;
        let k = if n_bits == 0 {
            0
        } else {
            ((bits_per_key * LN2).ceil() as u32).max(1)
        };
        BloomFilter {
            bits: vec![0u8; n_bits.div_ceil(8) as usize],
            n_bits,
            k,
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bit_len(&self) -> u64 {
        self.n_bits
    }

    pub fn insert(&mut self, key: &[u8]) {
        self.insert_pair(hash_pair(key, self.seed));
    }

    pub fn insert_pair(&mut self, (h1, h2): (u64, u64)) {
        if self.n_bits == 0 {
            return;
        }
        for j in 0..self.k as u64 {
            let idx = h1.wrapping_add(j.wrapping_mul(h2)) % self.n_bits;
            self.bits[(idx / 8) as usize] |= 1 << (idx % 8);
        }
    }

    pub fn maybe_contains(&self, key: &[u8]) -> bool {
        if self.n_bits == 0 {
            return true;
        }
        let (h1, h2) = hash_pair(key, self.seed);
        (0..self.k as u64).all(|j| {
            let idx = h1.wrapping_add(j.wrapping_mul(h2)) % self.n_bits;
            self.bits[(idx / 8) as usize] & (1 << (idx % 8)) != 0
        })
    }

    /// Filter file layout: seed u64, k u32, bit length u64 (little-endian),
    /// then the bit array.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.bits.len());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.k.to_le_bytes());
        out.extend_from_slice(&self.n_bits.to_le_bytes());
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<BloomFilter> {
        let bad = |msg: &'static str| Error::Decode {
            what: "filter",
            msg: msg.to_string(),
        };
        if bytes.len() < 20 {
            return Err(bad("header truncated"));
        }
        let seed = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
        let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let n_bits = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let body = &bytes[20..];
        if n_bits.div_ceil(8) != body.len() as u64 {
            return Err(bad("bit array length mismatch"));
        }
        if (n_bits == 0) != (k == 0) {
            return Err(bad("hash count inconsistent with bit length"));
        }
        Ok(BloomFilter {
            bits: body.to_vec(),
            n_bits,
            k,
            seed,
        })
    }
}

/// Splits a filter budget of `filter_bits` total bits across levels with the
/// given entry counts, returning bits per key for each level. Level rates
/// `p_i = min(1, c·n_i)` with `c` chosen by bisection so the implied memory
/// `Σ −n_i·ln(p_i)/ln²2` meets the budget; empty levels get zero.
pub fn monkey_allocate(filter_bits: f64, level_entries: &[u64]) -> Vec<f64> {
    let zeros = vec![0.0; level_entries.len()];
    if filter_bits <= 0.0 || level_entries.iter().all(|&n| n == 0) {
        return zeros;
    }
    let total_bits = |ln_c: f64| -> f64 {
        level_entries
            .iter()
            .filter(|&&n| n > 0)
            .map(|&n| {
                let ln_p = (ln_c + (n as f64).ln()).min(0.0);
                -(n as f64) * ln_p / (LN2 * LN2)
            })
            .sum()
    };
    let min_n = level_entries
        .iter()
        .copied()
        .filter(|&n| n > 0)
        .min()
        .unwrap() as f64;
    // At hi every level clamps to p = 1 (zero bits); walk lo down until the
    // budget is bracketed.
    let hi0 = -min_n.ln();
    let mut lo = hi0 - 64.0;
    while total_bits(lo) < filter_bits && lo > hi0 - 4096.0 {
        lo -= 64.0;
    }
    let mut hi = hi0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total_bits(mid) > filter_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ln_c = 0.5 * (lo + hi);
    level_entries
        .iter()
        .map(|&n| {
            if n == 0 {
                0.0
            } else {
                let ln_p = (ln_c + (n as f64).ln()).min(0.0);
                -ln_p / (LN2 * LN2)
            }
        })
        .collect()
}
