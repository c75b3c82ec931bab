//! Embeddable cost regressors.
//!
//! Two model families share one interface: a polynomial regression whose
//! basis functions are the analytic cost-model terms (so a handful of
//! samples pins the few coefficients the theory says matter), and
//! gradient-boosted regression trees over the raw features (no structural
//! assumptions, needs more data).
//!
//! Fitting and prediction are pure: identical samples and parameters give
//! bit-identical models. Feature ordering is frozen and fingerprinted;
//! model files carry the fingerprint so a stale file cannot be applied to
//! reordered features.

pub mod codec;
mod gbdt;

pub use gbdt::{RegressionTree, TreeNode, TreesModel, TreesParams};

use crate::analytic::{levels_continuous, Environment, LsmConfig, Policy};
use crate::error::{Error, Result};
use crate::workload::WorkloadMix;

pub const RAW_DIM: usize = 10;
pub const BASIS_DIM: usize = 12;

/// Raw feature order: environment scale, tunables, operation mix, policy.
pub const RAW_NAMES: [&str; RAW_DIM] = [
    "n_entries",
    "size_ratio",
    "buf_bytes",
    "cache_bytes",
    "filter_bytes",
    "zero_lookup_frac",
    "point_lookup_frac",
    "write_frac",
    "range_frac",
    "tiering",
];

/// Basis feature order: one term per distinct cost-model term, gated by
/// policy and weighted by its operation fraction, then one constant per
/// operation type.
pub const BASIS_NAMES: [&str; BASIS_DIM] = [
    "lev_point_filter",
    "lev_range_levels",
    "lev_range_blocks",
    "lev_write",
    "tier_point_filter",
    "tier_range_levels",
    "tier_range_blocks",
    "tier_write",
    "const_zero_lookup",
    "const_point_lookup",
    "const_range",
    "const_write",
];

/// Coefficients under which the basis expansion reproduces the analytic
/// combined cost: every structural term weighted 1, plus the +1 block read
/// each point lookup pays. Anchored fits pull toward this shape in the
/// directions a sample set leaves free.
pub const ANALYTIC_ANCHOR: [f64; BASIS_DIM] =
    [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];

/// Fingerprint of the frozen feature ordering (FNV-1a over the name lists).
pub fn feature_order_hash() -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for name in RAW_NAMES.iter().chain(BASIS_NAMES.iter()) {
        for b in name.bytes().chain(std::iter::once(b'\n')) {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// What a sample's label measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelKind {
    #[default]
    MeanLatencyNs,
    P90LatencyNs,
    IoPerOp,
}

impl LabelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelKind::MeanLatencyNs => "mean_latency_ns",
            LabelKind::P90LatencyNs => "p90_latency_ns",
            LabelKind::IoPerOp => "io_per_op",
        }
    }

    pub fn parse(s: &str) -> Result<LabelKind> {
        match s {
            "mean_latency_ns" => Ok(LabelKind::MeanLatencyNs),
            "p90_latency_ns" => Ok(LabelKind::P90LatencyNs),
            "io_per_op" => Ok(LabelKind::IoPerOp),
            other => Err(Error::config(format!("unknown label kind {other:?}"))),
        }
    }
}

/// One sample's features: the raw vector (tree inputs) and its deterministic
/// basis expansion (polynomial inputs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub raw: [f64; RAW_DIM],
    pub basis: [f64; BASIS_DIM],
}

impl FeatureVector {
    /// Builds the vector for one (environment, mix, configuration) point.
    pub fn from_parts(env: &Environment, mix: &WorkloadMix, cfg: &LsmConfig) -> Result<Self> {
        env.validate()?;
        cfg.validate(env)?;
        Self::from_stored(
            env.n_entries,
            env.entry_bytes,
            env.block_entries(),
            mix,
            cfg.policy,
            cfg.size_ratio,
            cfg.buf_bytes,
            cfg.filter_bytes,
            cfg.cache_bytes,
        )
    }

    /// Builds the vector from the fields a stored sample carries. Stored rows
    /// do not record the full memory budget, so only the parts the features
    /// read are validated here.
    #[allow(clippy::too_many_arguments)]
    pub fn from_stored(
        n_entries: u64,
        entry_bytes: u64,
        block_entries: u64,
        mix: &WorkloadMix,
        policy: Policy,
        size_ratio: u32,
        buf_bytes: u64,
        filter_bytes: u64,
        cache_bytes: u64,
    ) -> Result<Self> {
        mix.validate()?;
        if n_entries == 0 || entry_bytes == 0 || block_entries == 0 {
            return Err(Error::config("entry count and shapes must be positive"));
        }
        if size_ratio < 2 {
            return Err(Error::config(format!(
                "size ratio {size_ratio} below the minimum of 2"
            )));
        }
        if buf_bytes == 0 {
            return Err(Error::config("write buffer must be positive"));
        }
        let t = size_ratio as f64;
        let levels = levels_continuous(n_entries, entry_bytes, t, buf_bytes as f64);
        let b = block_entries as f64;
        let s = mix.s as f64;
        let filter_factor = (-8.0 * filter_bytes as f64 / n_entries as f64).exp();
        let point = mix.v + mix.r;
        let (g_lev, g_tier) = match policy {
            Policy::Leveling => (1.0, 0.0),
            Policy::Tiering => (0.0, 1.0),
        };
        Ok(FeatureVector {
            raw: [
                n_entries as f64,
                t,
                buf_bytes as f64,
                cache_bytes as f64,
                filter_bytes as f64,
                mix.v,
                mix.r,
                mix.w,
                mix.q,
                g_tier,
            ],
            basis: [
                g_lev * point * filter_factor,
                g_lev * mix.q * levels,
                g_lev * mix.q * s / b,
                g_lev * mix.w * levels * t / b,
                g_tier * point * filter_factor * t,
                g_tier * mix.q * levels * t,
                g_tier * mix.q * t * s / b,
                g_tier * mix.w * levels / b,
                mix.v,
                mix.r,
                mix.q,
                mix.w,
            ],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Poly,
    Trees,
}

/// Provenance carried by every model and its file form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMeta {
    pub label: LabelKind,
    pub n_samples: usize,
    /// Seed of the sampling process that produced the training set; 0 when
    /// not applicable. Fitting itself is deterministic.
    pub seed: u64,
    pub feature_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyModel {
    pub beta: [f64; BASIS_DIM],
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Poly(PolyModel),
    Trees(TreesModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub meta: ModelMeta,
    pub params: ModelParams,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Poly(_) => ModelKind::Poly,
            ModelParams::Trees(_) => ModelKind::Trees,
        }
    }

    /// Predicted cost for one feature vector. Rejects models fitted (or
    /// loaded) under a different feature ordering.
    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        if self.meta.feature_hash != feature_order_hash() {
            return Err(Error::learner(format!(
                "feature ordering mismatch: model {:016x}, current {:016x}",
                self.meta.feature_hash,
                feature_order_hash()
            )));
        }
        Ok(match &self.params {
            ModelParams::Poly(p) => dot(&p.beta, &x.basis),
            ModelParams::Trees(t) => t.eval(&x.raw),
        })
    }
}

fn dot(a: &[f64; BASIS_DIM], b: &[f64; BASIS_DIM]) -> f64 {
    let mut acc = 0.0;
    for i in 0..BASIS_DIM {
        acc += a[i] * b[i];
    }
    acc
}

#[allow(clippy::needless_range_loop)]
fn gram(samples: &[(FeatureVector, f64)]) -> ([[f64; BASIS_DIM]; BASIS_DIM], [f64; BASIS_DIM]) {
    let mut a = [[0.0; BASIS_DIM]; BASIS_DIM];
    let mut b = [0.0; BASIS_DIM];
    for (x, y) in samples {
        for i in 0..BASIS_DIM {
            b[i] += x.basis[i] * y;
            for j in i..BASIS_DIM {
                a[i][j] += x.basis[i] * x.basis[j];
            }
        }
    }
    for i in 0..BASIS_DIM {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
    }
    (a, b)
}

/// Basis columns the sample set does not span, detected on the normalized
/// Gram matrix (scale-free). Empty means full rank.
#[allow(clippy::needless_range_loop)]
fn dependent_columns(a: &[[f64; BASIS_DIM]; BASIS_DIM]) -> Vec<usize> {
    let mut deficient = Vec::new();
    let mut norm = [0.0f64; BASIS_DIM];
    for (j, n) in norm.iter_mut().enumerate() {
        *n = a[j][j].max(0.0).sqrt();
    }
    let mut m = [[0.0f64; BASIS_DIM]; BASIS_DIM];
    for i in 0..BASIS_DIM {
        for j in 0..BASIS_DIM {
            if norm[i] > 0.0 && norm[j] > 0.0 {
                m[i][j] = a[i][j] / (norm[i] * norm[j]);
            }
        }
    }
    let tol = 1e-8;
    let mut used = [false; BASIS_DIM];
    for col in 0..BASIS_DIM {
        let mut pivot_row = None;
        let mut pivot_abs = tol;
        for (row, row_used) in used.iter().enumerate() {
            if !row_used && m[row][col].abs() > pivot_abs {
                pivot_abs = m[row][col].abs();
                pivot_row = Some(row);
            }
        }
        let Some(p) = pivot_row else {
            deficient.push(col);
            continue;
        };
        used[p] = true;
        for row in 0..BASIS_DIM {
            if row != p && !used[row] {
                let factor = m[row][col] / m[p][col];
                for k in 0..BASIS_DIM {
                    m[row][k] -= factor * m[p][k];
                }
            }
        }
    }
    deficient
}

/// Gaussian elimination with partial pivoting on a 12×12 system.
#[allow(clippy::needless_range_loop)]
fn solve_lin(a: &[[f64; BASIS_DIM]; BASIS_DIM], rhs: &[f64; BASIS_DIM]) -> [f64; BASIS_DIM] {
    let mut m = [[0.0f64; BASIS_DIM + 1]; BASIS_DIM];
    for i in 0..BASIS_DIM {
        m[i][..BASIS_DIM].copy_from_slice(&a[i]);
        m[i][BASIS_DIM] = rhs[i];
    }
    for col in 0..BASIS_DIM {
        let pivot = (col..BASIS_DIM)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for row in col + 1..BASIS_DIM {
            let factor = m[row][col] / m[col][col];
            for k in col..=BASIS_DIM {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    let mut x = [0.0f64; BASIS_DIM];
    for col in (0..BASIS_DIM).rev() {
        let mut acc = m[col][BASIS_DIM];
        for k in col + 1..BASIS_DIM {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    x
}

/// Ridge solve of the normal equations in the column-equilibrated system
/// (every basis column scaled to unit norm, so `lambda` is relative to each
/// column's own energy), followed by `refine` steps of iterative refinement
/// against the undamped system. Refinement removes the damping bias on
/// well-determined directions; with it off the solution stays a proper
/// ridge estimate that resists chasing sample noise along near-collinear
/// directions. Directions the data leaves entirely free sit exactly at the
/// anchor either way.
fn solve_damped(
    a: &[[f64; BASIS_DIM]; BASIS_DIM],
    b: &[f64; BASIS_DIM],
    anchor: Option<&[f64; BASIS_DIM]>,
    lambda: f64,
    refine: usize,
) -> [f64; BASIS_DIM] {
    let mut norm = [0.0f64; BASIS_DIM];
    for (j, n) in norm.iter_mut().enumerate() {
        *n = a[j][j].max(0.0).sqrt();
    }
    // Scaled coefficients are β̂_j = norm_j·β_j; the anchor maps the same
    // way. Zero-energy columns become inert identity rows pinned to the
    // anchor (0 in scaled space).
    let mut scaled = [[0.0f64; BASIS_DIM]; BASIS_DIM];
    let mut rhs = [0.0f64; BASIS_DIM];
    let mut anchor_hat = [0.0f64; BASIS_DIM];
    for i in 0..BASIS_DIM {
        if norm[i] == 0.0 {
            scaled[i][i] = 1.0;
            continue;
        }
        for j in 0..BASIS_DIM {
            if norm[j] > 0.0 {
                scaled[i][j] = a[i][j] / (norm[i] * norm[j]);
            }
        }
        rhs[i] = b[i] / norm[i];
        anchor_hat[i] = anchor.map_or(0.0, |v| v[i] * norm[i]);
    }
    let mut damped = scaled;
    for i in 0..BASIS_DIM {
        if norm[i] > 0.0 {
            damped[i][i] += lambda;
        }
    }
    let first: [f64; BASIS_DIM] = std::array::from_fn(|i| rhs[i] + lambda * anchor_hat[i]);
    let mut x = solve_lin(&damped, &first);
    for _ in 0..refine {
        let mut residual = [0.0f64; BASIS_DIM];
        for i in 0..BASIS_DIM {
            let mut acc = rhs[i];
            for j in 0..BASIS_DIM {
                acc -= scaled[i][j] * x[j];
            }
            residual[i] = acc;
        }
        let delta = solve_lin(&damped, &residual);
        for i in 0..BASIS_DIM {
            x[i] += delta[i];
        }
    }
    let mut beta = [0.0f64; BASIS_DIM];
    for j in 0..BASIS_DIM {
        beta[j] = if norm[j] > 0.0 {
            x[j] / norm[j]
        } else {
            anchor.map_or(0.0, |v| v[j])
        };
    }
    beta
}

/// Least-squares fit of the label on the basis expansion. Requires at least
/// as many samples as basis functions and a design matrix that spans them;
/// a rank-deficient set is rejected naming the unspanned columns.
pub fn fit_poly(samples: &[(FeatureVector, f64)], label: LabelKind) -> Result<TrainedModel> {
    if samples.len() < BASIS_DIM {
        return Err(Error::learner(format!(
            "need at least {BASIS_DIM} samples, got {}",
            samples.len()
        )));
    }
    let (a, b) = gram(samples);
    let deficient = dependent_columns(&a);
    if !deficient.is_empty() {
        let names: Vec<&str> = deficient.iter().map(|&i| BASIS_NAMES[i]).collect();
        return Err(Error::learner(format!(
            "design matrix is rank-deficient; dependent columns: {}",
            names.join(", ")
        )));
    }
    let beta = solve_damped(&a, &b, None, 1e-8, 3);
    Ok(TrainedModel {
        meta: ModelMeta {
            label,
            n_samples: samples.len(),
            seed: 0,
            feature_hash: feature_order_hash(),
        },
        params: ModelParams::Poly(PolyModel { beta }),
    })
}

/// Damping used when a fit is anchored to a prior shape. Strong on purpose:
/// anchored fits run on a handful of bracketing samples whose design is
/// near-collinear, and an undamped solve would interpolate measurement
/// noise into wild coefficients.
const ANCHOR_LAMBDA: f64 = 0.05;

/// Like [`fit_poly`] but regularized toward `anchor`: the fit equals the
/// anchor on the design null space and deviates from it only as far as the
/// samples insist. Coefficients are kept nonnegative (every basis term is a
/// nonnegative cost contribution); a component the solve drives negative is
/// pinned to zero and the system re-solved without that column. Lets a fit
/// proceed from fewer samples than basis functions by filling the gaps with
/// a prior shape.
pub(crate) fn fit_poly_anchored(
    samples: &[(FeatureVector, f64)],
    anchor: &[f64; BASIS_DIM],
    label: LabelKind,
) -> Result<TrainedModel> {
    if samples.is_empty() {
        return Err(Error::learner("anchored fit needs at least one sample"));
    }
    let (mut a, mut b) = gram(samples);
    let mut anchor_cur = *anchor;
    let mut beta = [0.0f64; BASIS_DIM];
    for _ in 0..=BASIS_DIM {
        beta = solve_damped(&a, &b, Some(&anchor_cur), ANCHOR_LAMBDA, 0);
        let mut clamped = false;
        for i in 0..BASIS_DIM {
            if beta[i] < 0.0 {
                for j in 0..BASIS_DIM {
                    a[i][j] = 0.0;
                    a[j][i] = 0.0;
                }
                b[i] = 0.0;
                anchor_cur[i] = 0.0;
                clamped = true;
            }
        }
        if !clamped {
            break;
        }
    }
    Ok(TrainedModel {
        meta: ModelMeta {
            label,
            n_samples: samples.len(),
            seed: 0,
            feature_hash: feature_order_hash(),
        },
        params: ModelParams::Poly(PolyModel { beta }),
    })
}

#[doc(hidden)]
pub fn fit_poly_anchored_probe(
    samples: &[(FeatureVector, f64)],
    anchor: &[f64; BASIS_DIM],
) -> Result<TrainedModel> {
    fit_poly_anchored(samples, anchor, LabelKind::IoPerOp)
}

/// Gradient-boosted regression trees on the raw features: squared loss,
/// each stage a depth-limited tree on the residuals scaled by the learning
/// rate. Deterministic given sample order and parameters.
pub fn fit_trees(
    samples: &[(FeatureVector, f64)],
    params: &TreesParams,
    label: LabelKind,
) -> Result<TrainedModel> {
    let model = gbdt::fit(samples, params)?;
    Ok(TrainedModel {
        meta: ModelMeta {
            label,
            n_samples: samples.len(),
            seed: 0,
            feature_hash: feature_order_hash(),
        },
        params: ModelParams::Trees(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn test_env() -> Environment {
        Environment::new(100_000, 32, 128, 1 << 20, 4096).unwrap()
    }

    fn random_point(rng: &mut ChaCha12Rng, env: &Environment) -> FeatureVector {
        let policy = if rng.gen_bool(0.5) {
            Policy::Leveling
        } else {
            Policy::Tiering
        };
        let t = rng.gen_range(2..50u32);
        let buf = rng.gen_range(env.min_buffer_bytes..=64 * 1024);
        // Keep filters below 8 bits/key so every basis term contributes
        // within f64 resolution of the label.
        let filter = rng.gen_range(0..=(env.mem_bytes - buf).min(env.n_entries));
        let cfg = LsmConfig {
            policy,
            size_ratio: t,
            buf_bytes: buf,
            filter_bytes: filter,
            cache_bytes: env.mem_bytes - buf - filter,
        };
        let parts: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.01..1.0));
        let total: f64 = parts.iter().sum();
        let mix = WorkloadMix::new(
            parts[0] / total,
            parts[1] / total,
            parts[2] / total,
            1.0 - parts[0] / total - parts[1] / total - parts[2] / total,
            rng.gen_range(1..32),
            0.0,
        )
        .unwrap();
        FeatureVector::from_parts(env, &mix, &cfg).unwrap()
    }

    const TRUE_BETA: [f64; BASIS_DIM] = [
        1.3, 0.7, 2.5, 0.9, 1.1, 0.4, 1.9, 0.6, 0.25, 1.0, 0.5, 3.0,
    ];

    fn synthetic_set(n: usize, seed: u64) -> Vec<(FeatureVector, f64)> {
        let env = test_env();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = random_point(&mut rng, &env);
                let y = dot(&TRUE_BETA, &x.basis);
                (x, y)
            })
            .collect()
    }

    #[test]
    fn poly_recovers_known_coefficients() {
        let samples = synthetic_set(40, 11);
        let model = fit_poly(&samples, LabelKind::IoPerOp).unwrap();
        let ModelParams::Poly(p) = &model.params else {
            panic!("wrong kind")
        };
        for (i, (got, want)) in p.beta.iter().zip(&TRUE_BETA).enumerate() {
            let rel = (got - want).abs() / (1.0 + want.abs());
            assert!(rel < 1e-6, "beta[{i}] = {got} vs {want}");
        }
        for (x, y) in &samples {
            assert!((model.predict(x).unwrap() - y).abs() / (1.0 + y.abs()) < 1e-6);
        }
    }

    #[test]
    fn basis_under_analytic_anchor_spans_combined_cost() {
        let env = test_env();
        let mix = WorkloadMix::new(0.2, 0.3, 0.1, 0.4, 7, 0.0).unwrap();
        for policy in crate::analytic::POLICIES {
            for t in [2u32, 3, 5, 10, 20] {
                for buf_num in [1u64, 2, 5] {
                    let buf = (env.mem_bytes * buf_num / 8).max(env.min_buffer_bytes);
                    let filter = (env.mem_bytes - buf) / 3;
                    let cfg = LsmConfig {
                        policy,
                        size_ratio: t,
                        buf_bytes: buf,
                        filter_bytes: filter,
                        cache_bytes: env.mem_bytes - buf - filter,
                    };
                    let x = FeatureVector::from_parts(&env, &mix, &cfg).unwrap();
                    let want = crate::analytic::cost(&env, &cfg, &mix).unwrap().combined;
                    let got = dot(&ANALYTIC_ANCHOR, &x.basis);
                    assert!(
                        (got - want).abs() <= 1e-12 * want.abs(),
                        "policy {policy} T {t}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn poly_constant_labels_reproduced() {
        let mut samples = synthetic_set(30, 12);
        for s in &mut samples {
            s.1 = 42.5;
        }
        let model = fit_poly(&samples, LabelKind::IoPerOp).unwrap();
        for (x, _) in &samples {
            assert!((model.predict(x).unwrap() - 42.5).abs() < 1e-7);
        }
    }

    #[test]
    fn poly_duplicate_sample_is_reweighting_only() {
        let samples = synthetic_set(40, 13);
        let base = fit_poly(&samples, LabelKind::IoPerOp).unwrap();
        let mut dup = samples.clone();
        dup.push(samples[0]);
        let refit = fit_poly(&dup, LabelKind::IoPerOp).unwrap();
        let (ModelParams::Poly(a), ModelParams::Poly(b)) = (&base.params, &refit.params) else {
            panic!("wrong kind")
        };
        // Noise-free labels: duplicating a zero-residual sample moves nothing.
        for i in 0..BASIS_DIM {
            assert!((a.beta[i] - b.beta[i]).abs() < 1e-6);
        }
        let doubled: Vec<_> = samples.iter().chain(samples.iter()).copied().collect();
        let twice = fit_poly(&doubled, LabelKind::IoPerOp).unwrap();
        let ModelParams::Poly(c) = &twice.params else {
            panic!("wrong kind")
        };
        for i in 0..BASIS_DIM {
            assert!((a.beta[i] - c.beta[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn poly_rejects_thin_or_rank_deficient_sets() {
        let samples = synthetic_set(8, 14);
        let err = fit_poly(&samples, LabelKind::IoPerOp).unwrap_err();
        assert!(err.to_string().contains("at least"));

        let env = test_env();
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let leveling_only: Vec<(FeatureVector, f64)> = (0..30)
            .map(|_| {
                let mut x = random_point(&mut rng, &env);
                while x.raw[RAW_DIM - 1] == 1.0 {
                    x = random_point(&mut rng, &env);
                }
                (x, 1.0)
            })
            .collect();
        let err = fit_poly(&leveling_only, LabelKind::IoPerOp).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rank-deficient"), "{msg}");
        assert!(msg.contains("tier_write"), "{msg}");
    }

    #[test]
    fn anchored_fit_keeps_prior_on_null_space_and_is_exact_on_prior_labels() {
        let env = test_env();
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let anchor = TRUE_BETA;
        // Three samples cannot pin twelve coefficients; the anchor must.
        let samples: Vec<(FeatureVector, f64)> = (0..3)
            .map(|_| {
                let x = random_point(&mut rng, &env);
                (x, dot(&anchor, &x.basis))
            })
            .collect();
        let model = fit_poly_anchored(&samples, &anchor, LabelKind::IoPerOp).unwrap();
        let probe = random_point(&mut rng, &env);
        let want = dot(&anchor, &probe.basis);
        assert!(
            (model.predict(&probe).unwrap() - want).abs() / (1.0 + want.abs()) < 1e-6,
            "anchored fit should reproduce anchor-consistent labels everywhere"
        );
    }

    #[test]
    fn trees_constant_labels_are_exact() {
        let mut samples = synthetic_set(20, 17);
        for s in &mut samples {
            s.1 = 5.0;
        }
        let model = fit_trees(&samples, &TreesParams::default(), LabelKind::IoPerOp).unwrap();
        let ModelParams::Trees(t) = &model.params else {
            panic!("wrong kind")
        };
        assert_eq!(t.base, 5.0);
        assert_eq!(t.trees[0].nodes.len(), 1, "first tree is a constant leaf");
        for (x, _) in &samples {
            assert_eq!(model.predict(x).unwrap(), 5.0);
        }
        assert_eq!(*t.train_rmse.last().unwrap(), 0.0);
    }

    #[test]
    fn trees_learn_identity_on_size_ratio() {
        let env = test_env();
        let mut samples = Vec::new();
        for t in 2..=32u32 {
            for (buf, filter) in [(4096, 1 << 18), (8192, 1 << 17), (16384, 0), (32768, 1 << 16)]
            {
                let cfg = LsmConfig {
                    policy: Policy::Leveling,
                    size_ratio: t,
                    buf_bytes: buf,
                    filter_bytes: filter,
                    cache_bytes: env.mem_bytes - buf - filter,
                };
                let mix = WorkloadMix::from_fractions(0.25, 0.25, 0.25, 0.25).unwrap();
                let x = FeatureVector::from_parts(&env, &mix, &cfg).unwrap();
                samples.push((x, t as f64));
            }
        }
        let params = TreesParams {
            n_trees: 200,
            ..TreesParams::default()
        };
        let model = fit_trees(&samples, &params, LabelKind::IoPerOp).unwrap();
        let ModelParams::Trees(t) = &model.params else {
            panic!("wrong kind")
        };
        let final_rmse = *t.train_rmse.last().unwrap();
        assert!(final_rmse < 0.01 * 30.0, "rmse {final_rmse}");
        for w in t.train_rmse.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "rmse increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn trees_zero_stages_predict_base_score() {
        let samples = synthetic_set(15, 18);
        let mean = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
        let params = TreesParams {
            n_trees: 0,
            ..TreesParams::default()
        };
        let model = fit_trees(&samples, &params, LabelKind::IoPerOp).unwrap();
        assert_eq!(model.predict(&samples[3].0).unwrap(), mean);
    }

    #[test]
    fn zero_poly_predicts_zero() {
        let model = TrainedModel {
            meta: ModelMeta {
                label: LabelKind::IoPerOp,
                n_samples: 0,
                seed: 0,
                feature_hash: feature_order_hash(),
            },
            params: ModelParams::Poly(PolyModel {
                beta: [0.0; BASIS_DIM],
            }),
        };
        let env = test_env();
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        for _ in 0..20 {
            let x = random_point(&mut rng, &env);
            assert_eq!(model.predict(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn stale_feature_hash_is_rejected() {
        let samples = synthetic_set(20, 20);
        let mut model = fit_poly(&samples, LabelKind::IoPerOp).unwrap();
        model.meta.feature_hash ^= 1;
        assert!(model.predict(&samples[0].0).is_err());
    }

    #[test]
    fn fitting_is_deterministic() {
        let samples = synthetic_set(40, 21);
        let a = fit_poly(&samples, LabelKind::MeanLatencyNs).unwrap();
        let b = fit_poly(&samples, LabelKind::MeanLatencyNs).unwrap();
        assert_eq!(codec::save_model(&a), codec::save_model(&b));
        let p = TreesParams::default();
        let c = fit_trees(&samples, &p, LabelKind::MeanLatencyNs).unwrap();
        let d = fit_trees(&samples, &p, LabelKind::MeanLatencyNs).unwrap();
        assert_eq!(codec::save_model(&c), codec::save_model(&d));
    }
}
