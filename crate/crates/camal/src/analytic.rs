//! Closed-form I/O cost models for leveled and tiered LSM-trees, the
//! optimizers that seed active learning, the calibrated CPU+I/O cost used to
//! validate scale extrapolation, and the extrapolation rule itself.
//!
//! Cost shapes (expected block I/Os per operation), with `L` the level count,
//! `T` the size ratio, `B` entries per block, `s` range selectivity, and the
//! filter term `e^{-filter_bits/N}`:
//!
//! | op                     | leveling            | tiering                 |
//! |------------------------|---------------------|-------------------------|
//! | zero-result lookup (v) | `e^{-bits}`         | `e^{-bits}·T`           |
//! | point lookup (r)       | `e^{-bits} + 1`     | `e^{-bits}·T + 1`       |
//! | range lookup (q)       | `L + s/B`           | `L·T + T·s/B`           |
//! | write, amortized (w)   | `L·T/B`             | `L/B`                   |
//!
//! The combined cost is the mix-weighted sum. Inside this module `L` is the
//! continuous `ln(N·E/M_b + 1)/ln T` — the optimizers differentiate it, so it
//! must stay smooth; [`level_count`] is the integer (ceiling) form realized
//! by the engine.
//!
//! The optimizer split: the size-ratio stationarity condition
//! `w·T·(ln T − 1) − q·B = 0` contains neither memory term, so the optimal
//! ratio is found first and independently (for leveling exactly; tiering
//! couples mildly and is scanned). The memory split is then a one-dimensional
//! convex problem in the filter budget, solved by bisecting its derivative.

use crate::error::{Error, Result};
use crate::workload::WorkloadMix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Leveling,
    Tiering,
}

pub const POLICIES: [Policy; 2] = [Policy::Leveling, Policy::Tiering];

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Leveling => "leveling",
            Policy::Tiering => "tiering",
        }
    }

    pub fn parse(s: &str) -> Result<Policy> {
        match s {
            "leveling" => Ok(Policy::Leveling),
            "tiering" => Ok(Policy::Tiering),
            other => Err(Error::config(format!("unknown policy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Immutable system facts: entry count and shape, block shape, and the memory
/// budget the tunables must share.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Environment {
    /// N: number of resident entries.
    pub n_entries: u64,
    /// E: bytes per entry (nominal, governs entries per block and level math).
    pub entry_bytes: u64,
    /// Fixed storage block size in bytes.
    pub block_bytes: u64,
    /// M: total tunable memory in bytes (buffer + filters + cache).
    pub mem_bytes: u64,
    /// Smallest allowed write buffer in bytes; bounds the size ratio from
    /// above via `T_lim = N·E / min_buffer`.
    pub min_buffer_bytes: u64,
}

impl Environment {
    pub fn new(
        n_entries: u64,
        entry_bytes: u64,
        block_bytes: u64,
        mem_bytes: u64,
        min_buffer_bytes: u64,
    ) -> Result<Self> {
        let env = Environment {
            n_entries,
            entry_bytes,
            block_bytes,
            mem_bytes,
            min_buffer_bytes,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_entries == 0
            || self.entry_bytes == 0
            || self.block_bytes == 0
            || self.mem_bytes == 0
            || self.min_buffer_bytes == 0
        {
            return Err(Error::config("environment fields must all be positive"));
        }
        if self.block_bytes < self.entry_bytes {
            return Err(Error::config(format!(
                "block size {} cannot hold one {}-byte entry",
                self.block_bytes, self.entry_bytes
            )));
        }
        if self.mem_bytes < self.min_buffer_bytes {
            return Err(Error::config(format!(
                "total memory {} below the buffer floor {}",
                self.mem_bytes, self.min_buffer_bytes
            )));
        }
        if self.t_lim() < 2.0 {
            return Err(Error::config(format!(
                "T_lim = N·E/min_buffer = {:.3} must be at least 2",
                self.t_lim()
            )));
        }
        Ok(())
    }

    /// B: entries per block.
    pub fn block_entries(&self) -> u64 {
        self.block_bytes / self.entry_bytes
    }

    /// N·E: total logical data volume in bytes.
    pub fn data_bytes(&self) -> u64 {
        self.n_entries * self.entry_bytes
    }

    /// Upper bound on the size ratio, `N·E / min_buffer`.
    pub fn t_lim(&self) -> f64 {
        self.data_bytes() as f64 / self.min_buffer_bytes as f64
    }

    /// Largest admissible integer size ratio.
    pub fn max_size_ratio(&self) -> u32 {
        (self.t_lim().floor() as u32).max(2)
    }
}

/// One tunable point: compaction policy, size ratio, and the three-way
/// memory split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LsmConfig {
    pub policy: Policy,
    /// T: integer size ratio between adjacent levels.
    pub size_ratio: u32,
    /// M_b: write-buffer bytes.
    pub buf_bytes: u64,
    /// M_f: Bloom-filter bytes.
    pub filter_bytes: u64,
    /// M_c: block-cache bytes.
    pub cache_bytes: u64,
}

impl LsmConfig {
    pub fn validate(&self, env: &Environment) -> Result<()> {
        if self.size_ratio < 2 || self.size_ratio > env.max_size_ratio() {
            return Err(Error::config(format!(
                "size ratio {} outside [2, {}]",
                self.size_ratio,
                env.max_size_ratio()
            )));
        }
        let total = self.buf_bytes + self.filter_bytes + self.cache_bytes;
        if total != env.mem_bytes {
            return Err(Error::config(format!(
                "memory split {} + {} + {} = {total} must equal M = {}",
                self.buf_bytes, self.filter_bytes, self.cache_bytes, env.mem_bytes
            )));
        }
        if self.buf_bytes < env.min_buffer_bytes {
            return Err(Error::config(format!(
                "write buffer {} below the floor {}",
                self.buf_bytes, env.min_buffer_bytes
            )));
        }
        Ok(())
    }

    /// Filter budget in bits per key.
    pub fn bits_per_key(&self, env: &Environment) -> f64 {
        8.0 * self.filter_bytes as f64 / env.n_entries as f64
    }
}

/// Expected block I/Os per operation kind plus the mix-weighted combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    /// V: per zero-result point lookup.
    pub zero_lookup_io: f64,
    /// R: per non-zero-result point lookup.
    pub point_lookup_io: f64,
    /// Q: per range lookup.
    pub range_io: f64,
    /// W: amortized per write.
    pub write_io: f64,
    /// v·V + r·R + q·Q + w·W.
    pub combined: f64,
}

/// Unit costs for the calibrated model: I/O weights and per-operation CPU
/// overheads expressed in the same unit as one read I/O.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConstants {
    /// I_r: cost of one read I/O.
    pub i_r: f64,
    /// I_w: cost of one write I/O.
    pub i_w: f64,
    /// C_r: CPU cost of probing one run's metadata.
    pub c_r: f64,
    /// C_w: CPU cost of compacting one entry.
    pub c_w: f64,
    /// C_q: CPU cost of range-lookup metadata work.
    pub c_q: f64,
}

impl Default for CalibrationConstants {
    fn default() -> Self {
        CalibrationConstants {
            i_r: 1.0,
            i_w: 1.0,
            c_r: 0.01,
            c_w: 0.01,
            c_q: 0.01,
        }
    }
}

impl CalibrationConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.i_r, self.i_w, self.c_r, self.c_w, self.c_q];
        if all.iter().any(|c| *c < 0.0 || !c.is_finite()) {
            return Err(Error::config("calibration constants must be finite and >= 0"));
        }
        if self.i_r <= 0.0 {
            return Err(Error::config("I_r must be positive"));
        }
        Ok(())
    }
}

/// Number of levels needed for the resident data: `⌈log_T(N·E/M_b + 1)⌉`,
/// at least 1.
pub fn level_count(env: &Environment, size_ratio: u32, buf_bytes: u64) -> Result<u32> {
    if size_ratio < 2 {
        return Err(Error::config(format!(
            "size ratio {size_ratio} below the minimum of 2"
        )));
    }
    if buf_bytes == 0 {
        return Err(Error::config("write buffer must be positive"));
    }
    let ratio = env.data_bytes() as f64 / buf_bytes as f64;
    let raw = (ratio + 1.0).ln() / (size_ratio as f64).ln();
    // Guard the exact-power case (e.g. log10 of 100) against float drift.
    let nearest = raw.round();
    let levels = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    Ok((levels as u32).max(1))
}

/// Continuous level term `ln(N·E/M_b + 1) / ln T`, the smooth form every
/// derivative in this module assumes. Takes scalars so callers holding only
/// stored sample fields (no full environment) can evaluate it.
pub fn levels_continuous(n_entries: u64, entry_bytes: u64, size_ratio: f64, buf_bytes: f64) -> f64 {
    let ratio = n_entries as f64 * entry_bytes as f64 / buf_bytes;
    (ratio + 1.0).ln() / size_ratio.ln()
}

fn levels_cont(env: &Environment, size_ratio: f64, buf_bytes: f64) -> f64 {
    levels_continuous(env.n_entries, env.entry_bytes, size_ratio, buf_bytes)
}

fn raw_cost(
    env: &Environment,
    policy: Policy,
    size_ratio: f64,
    buf_bytes: f64,
    filter_bytes: f64,
    mix: &WorkloadMix,
) -> CostBreakdown {
    let n = env.n_entries as f64;
    let b = env.block_entries() as f64;
    let s = mix.s as f64;
    let l = levels_cont(env, size_ratio, buf_bytes);
    let fp = (-8.0 * filter_bytes / n).exp();
    let (zero, point, range, write) = match policy {
        Policy::Leveling => (fp, fp + 1.0, l + s / b, l * size_ratio / b),
        Policy::Tiering => (
            fp * size_ratio,
            fp * size_ratio + 1.0,
            l * size_ratio + size_ratio * s / b,
            l / b,
        ),
    };
    CostBreakdown {
        zero_lookup_io: zero,
        point_lookup_io: point,
        range_io: range,
        write_io: write,
        combined: mix.v * zero + mix.r * point + mix.q * range + mix.w * write,
    }
}

/// Expected I/O costs of a configuration under a workload mix.
pub fn cost(env: &Environment, cfg: &LsmConfig, mix: &WorkloadMix) -> Result<CostBreakdown> {
    cfg.validate(env)?;
    mix.validate()?;
    Ok(raw_cost(
        env,
        cfg.policy,
        cfg.size_ratio as f64,
        cfg.buf_bytes as f64,
        cfg.filter_bytes as f64,
        mix,
    ))
}

/// Combined analytic cost with the memory split fixed at its per-ratio
/// optimum. This is the objective the ratio optimizer minimizes.
fn profile_cost(env: &Environment, mix: &WorkloadMix, size_ratio: u32, policy: Policy) -> f64 {
    let (buf, filter) = opt_memory_f64(env, mix, size_ratio, policy);
    raw_cost(env, policy, size_ratio as f64, buf, filter, mix).combined
}

/// Continuous root of the leveling size-ratio stationarity condition
/// `w·T·(ln T − 1) = q·B` inside `(2, t_max)`, if any. The left side is
/// strictly increasing for `T > 1`, so the root is unique.
pub fn ratio_stationary_point(mix: &WorkloadMix, block_entries: f64, t_max: f64) -> Option<f64> {
    let g = |t: f64| mix.w * t * (t.ln() - 1.0) - mix.q * block_entries;
    if g(2.0) >= 0.0 || g(t_max) <= 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (2.0, t_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// The integer size ratio in `[2, T_lim]` minimizing the analytic cost, with
/// the memory split held at its per-ratio optimum.
///
/// Leveling brackets the stationarity root and compares the two neighboring
/// integers (the memory split does not move the root, so this is exact);
/// when no interior root exists the cost is monotone and the cheaper boundary
/// wins. Tiering couples mildly with the filter budget, so it scans.
pub fn theoretical_opt_t(env: &Environment, mix: &WorkloadMix, policy: Policy) -> Result<u32> {
    mix.validate()?;
    let t_max = env.max_size_ratio();
    Ok(match policy {
        Policy::Leveling => {
            match ratio_stationary_point(mix, env.block_entries() as f64, t_max as f64) {
                Some(root) => {
                    let lo = (root.floor() as u32).clamp(2, t_max);
                    let hi = (root.ceil() as u32).clamp(2, t_max);
                    if profile_cost(env, mix, lo, policy) <= profile_cost(env, mix, hi, policy) {
                        lo
                    } else {
                        hi
                    }
                }
                None => {
                    // Monotone cost: compare the endpoints.
                    if profile_cost(env, mix, 2, policy)
                        <= profile_cost(env, mix, t_max, policy)
                    {
                        2
                    } else {
                        t_max
                    }
                }
            }
        }
        Policy::Tiering => {
            let mut best = (2, profile_cost(env, mix, 2, policy));
            for t in 3..=t_max {
                let c = profile_cost(env, mix, t, policy);
                if c < best.1 {
                    best = (t, c);
                }
            }
            best.0
        }
    })
}

/// [`theoretical_opt_t`] with the memory split pinned instead of optimized;
/// exposes the stationarity condition's independence from the split.
pub fn theoretical_opt_t_at_split(
    env: &Environment,
    mix: &WorkloadMix,
    policy: Policy,
    buf_bytes: u64,
    filter_bytes: u64,
) -> Result<u32> {
    mix.validate()?;
    let t_max = env.max_size_ratio();
    let fixed = |t: u32| {
        raw_cost(
            env,
            policy,
            t as f64,
            buf_bytes as f64,
            filter_bytes as f64,
            mix,
        )
        .combined
    };
    Ok(match policy {
        Policy::Leveling => {
            match ratio_stationary_point(mix, env.block_entries() as f64, t_max as f64) {
                Some(root) => {
                    let lo = (root.floor() as u32).clamp(2, t_max);
                    let hi = (root.ceil() as u32).clamp(2, t_max);
                    if fixed(lo) <= fixed(hi) {
                        lo
                    } else {
                        hi
                    }
                }
                None => {
                    if fixed(2) <= fixed(t_max) {
                        2
                    } else {
                        t_max
                    }
                }
            }
        }
        Policy::Tiering => {
            let mut best = (2, fixed(2));
            for t in 3..=t_max {
                let c = fixed(t);
                if c < best.1 {
                    best = (t, c);
                }
            }
            best.0
        }
    })
}

/// Derivative of the combined cost w.r.t. the filter budget (bytes), at a
/// fixed ratio, with the buffer absorbing the remainder. The filter term's
/// contribution decays while the level term's grows, so the derivative is
/// increasing and its sign change (when present) is unique.
fn memory_derivative(
    env: &Environment,
    mix: &WorkloadMix,
    size_ratio: u32,
    policy: Policy,
    filter_bytes: f64,
) -> f64 {
    let n = env.n_entries as f64;
    let ne = env.data_bytes() as f64;
    let m = env.mem_bytes as f64;
    let b = env.block_entries() as f64;
    let t = size_ratio as f64;
    let pol_mult = match policy {
        Policy::Leveling => 1.0,
        Policy::Tiering => t,
    };
    let level_coef = match policy {
        Policy::Leveling => mix.q + mix.w * t / b,
        Policy::Tiering => mix.q * t + mix.w / b,
    };
    let buf = m - filter_bytes;
    let filter_term = -(8.0 / n) * (mix.v + mix.r) * pol_mult * (-8.0 * filter_bytes / n).exp();
    let dl_dmf = ne / (buf * (ne + buf) * t.ln());
    filter_term + level_coef * dl_dmf
}

fn opt_memory_f64(
    env: &Environment,
    mix: &WorkloadMix,
    size_ratio: u32,
    policy: Policy,
) -> (f64, f64) {
    let m = env.mem_bytes as f64;
    let hi = m - env.min_buffer_bytes as f64;
    if hi <= 0.0 {
        return (m, 0.0);
    }
    if memory_derivative(env, mix, size_ratio, policy, 0.0) >= 0.0 {
        return (m, 0.0);
    }
    if memory_derivative(env, mix, size_ratio, policy, hi) <= 0.0 {
        return (m - hi, hi);
    }
    let (mut lo, mut up) = (0.0, hi);
    // Bisect until the interval is below one bit.
    while up - lo > 0.125 {
        let mid = 0.5 * (lo + up);
        if memory_derivative(env, mix, size_ratio, policy, mid) < 0.0 {
            lo = mid;
        } else {
            up = mid;
        }
    }
    let mf = 0.5 * (lo + up);
    (m - mf, mf)
}

/// The memory split `(M_b, M_f)` with `M_b + M_f = M` minimizing the analytic
/// cost at a fixed ratio; the cache gets nothing (it is invisible to the
/// analytic model). Respects the buffer floor.
pub fn theoretical_opt_memory(
    env: &Environment,
    mix: &WorkloadMix,
    size_ratio: u32,
    policy: Policy,
) -> Result<(u64, u64)> {
    mix.validate()?;
    if size_ratio < 2 {
        return Err(Error::config(format!(
            "size ratio {size_ratio} below the minimum of 2"
        )));
    }
    if env.mem_bytes < env.min_buffer_bytes {
        return Err(Error::config("memory budget below the buffer floor"));
    }
    let (_, mf) = opt_memory_f64(env, mix, size_ratio, policy);
    let mf = (mf.round() as u64).min(env.mem_bytes - env.min_buffer_bytes);
    Ok((env.mem_bytes - mf, mf))
}

/// Calibrated cost per operation: I/O terms weighted by unit costs plus CPU
/// terms for run probing, compaction work, and range metadata. Defined for
/// leveling only.
pub fn calibrated_cost(
    env: &Environment,
    cfg: &LsmConfig,
    mix: &WorkloadMix,
    consts: &CalibrationConstants,
) -> Result<f64> {
    if cfg.policy != Policy::Leveling {
        return Err(Error::config(
            "the calibrated cost is defined for the leveling policy",
        ));
    }
    mix.validate()?;
    consts.validate()?;
    Ok(calibrated_cost_raw(
        env,
        cfg.size_ratio as f64,
        cfg.buf_bytes as f64,
        cfg.filter_bytes as f64,
        mix,
        consts,
    ))
}

fn calibrated_cost_raw(
    env: &Environment,
    size_ratio: f64,
    buf_bytes: f64,
    filter_bytes: f64,
    mix: &WorkloadMix,
    consts: &CalibrationConstants,
) -> f64 {
    let n = env.n_entries as f64;
    let b = env.block_entries() as f64;
    let s = mix.s as f64;
    let l = levels_cont(env, size_ratio, buf_bytes);
    let fp = (-8.0 * filter_bytes / n).exp();
    consts.i_r * mix.v * fp
        + consts.i_r * mix.r * (fp + 1.0)
        + 2.0 * consts.c_r * l
        + consts.i_r * mix.q * (l + s / b)
        + consts.c_q * l
        + (consts.i_w + consts.i_r) * l * size_ratio / b
        + consts.c_w * size_ratio * l
}

/// Scales a configuration tuned at `(N', M')` to `(k·N', k·M')`: the size
/// ratio carries over unchanged and every memory allocation scales by `k`
/// (the cache proportionally, as an extension of the rule).
pub fn extrapolate(cfg: &LsmConfig, k: f64) -> Result<LsmConfig> {
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::config(format!("scale factor must be positive, got {k}")));
    }
    let scale = |bytes: u64| (bytes as f64 * k).round() as u64;
    Ok(LsmConfig {
        policy: cfg.policy,
        size_ratio: cfg.size_ratio,
        buf_bytes: scale(cfg.buf_bytes),
        filter_bytes: scale(cfg.filter_bytes),
        cache_bytes: scale(cfg.cache_bytes),
    })
}
