//! Configuration search: analytic seeding, decoupled active learning over a
//! shared sample store, scale extrapolation, and robust tuning over a
//! workload-uncertainty region.
//!
//! The search runs per workload and per policy in three stages (size ratio,
//! memory split, cache share). Each stage samples a small neighborhood of
//! the analytic optimum, retrains on everything measured so far, and fixes
//! its parameter at the model argmin, so evaluator calls grow with the sum
//! of the neighborhood sizes rather than their product.

mod evaluate;
mod store;

pub use evaluate::{AnalyticEvaluator, EngineEvaluator, Evaluator, Measurement};
pub use store::{sample_key, CostSample, SampleKey, SampleStore, SAMPLE_CSV_HEADER};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Dirichlet, Distribution};

use crate::analytic::{
    cost, extrapolate, theoretical_opt_memory, theoretical_opt_t, Environment, LsmConfig, Policy,
    POLICIES,
};
use crate::error::{Error, Result};
use crate::learner::{
    fit_poly_anchored, fit_trees, FeatureVector, LabelKind, ModelKind, TrainedModel, TreesParams,
    ANALYTIC_ANCHOR, BASIS_DIM,
};
use crate::workload::WorkloadMix;

/// Spacing of the filter search grid, in bits per key.
pub const GRID_BPK_STEP: f64 = 0.05;

/// Cache shares of total memory tried when none are configured explicitly.
pub const DEFAULT_CACHE_FRACTIONS: [f64; 4] = [0.0, 0.1, 0.2, 0.3];

/// Search knobs. `budget` caps evaluator calls per workload and is split
/// evenly between the two policies, leveling taking the odd call.
#[derive(Debug, Clone, PartialEq)]
pub struct TunerConfig {
    /// Per-workload evaluator-call budget; 0 skips sampling entirely and
    /// yields the pure analytic optimum.
    pub budget: u64,
    /// Neighborhood size of the ratio and memory stages.
    pub samples_per_stage: usize,
    /// Integer stride of the ratio neighborhood.
    pub t_step: u32,
    /// Stride of the memory-split neighborhood, in bits per key.
    pub bpk_step: f64,
    /// Cache shares of total memory tried in the cache stage (taken from the
    /// buffer); empty skips the stage.
    pub cache_fractions: Vec<f64>,
    pub label: LabelKind,
    pub model: ModelKind,
    pub seed: u64,
    /// KL radius of the workload-uncertainty region; 0 tunes for the nominal
    /// mix alone.
    pub rho: f64,
    /// Mixes drawn from the region per robust search.
    pub rho_draws: u32,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            budget: 20,
            samples_per_stage: 3,
            t_step: 2,
            bpk_step: 2.0,
            cache_fractions: DEFAULT_CACHE_FRACTIONS.to_vec(),
            label: LabelKind::MeanLatencyNs,
            model: ModelKind::Poly,
            seed: 42,
            rho: 0.0,
            rho_draws: 10,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_stage == 0 {
            return Err(Error::config("samples_per_stage must be positive"));
        }
        if self.t_step == 0 {
            return Err(Error::config("t_step must be positive"));
        }
        if !self.bpk_step.is_finite() || self.bpk_step <= 0.0 {
            return Err(Error::config("bpk_step must be positive"));
        }
        if self.budget != 0 && self.budget < 2 * self.samples_per_stage as u64 {
            return Err(Error::config(format!(
                "budget {} cannot cover the two parameter stages ({} samples each); \
                 use 0 for the pure analytic answer",
                self.budget, self.samples_per_stage
            )));
        }
        for f in &self.cache_fractions {
            if !f.is_finite() || *f < 0.0 || *f >= 1.0 {
                return Err(Error::config(format!("cache fraction {f} outside [0, 1)")));
            }
        }
        if !self.rho.is_finite() || self.rho < 0.0 {
            return Err(Error::config("rho must be finite and >= 0"));
        }
        if self.rho_draws == 0 {
            return Err(Error::config("rho_draws must be positive"));
        }
        Ok(())
    }
}

/// One policy branch's search result.
#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub policy: Policy,
    pub config: LsmConfig,
    /// Prediction for `config` under the freshest model of this branch, or
    /// the analytic cost when no model was trained.
    pub predicted: f64,
    /// Incumbent prediction after each stage that trained a model.
    pub stage_predictions: Vec<f64>,
    pub evaluator_calls: u64,
    /// Evaluator failures, logged and skipped.
    pub failures: Vec<String>,
}

/// What the search fixes for one workload.
#[derive(Debug, Clone)]
pub struct TunedWorkload {
    pub workload_id: String,
    pub mix: WorkloadMix,
    pub config: LsmConfig,
    /// Prediction for `config`, made at the scale the model was trained at.
    pub predicted: f64,
    /// Analytic combined cost of `config` at the reported scale.
    pub analytic_cost: f64,
    pub evaluator_calls: u64,
    pub policies: Vec<PolicyOutcome>,
}

/// Filter-bytes search grid at `GRID_BPK_STEP` spacing, clamped to what the
/// buffer floor leaves after `cache_bytes` is reserved.
pub fn filter_grid(env: &Environment, cache_bytes: u64) -> Vec<u64> {
    let max_f = env
        .mem_bytes
        .saturating_sub(env.min_buffer_bytes)
        .saturating_sub(cache_bytes);
    let step = GRID_BPK_STEP * env.n_entries as f64 / 8.0;
    let mut grid = Vec::new();
    let mut i = 0u64;
    loop {
        let f = (i as f64 * step).round() as u64;
        if f >= max_f {
            grid.push(max_f);
            break;
        }
        grid.push(f);
        i += 1;
    }
    grid.dedup();
    grid
}

fn grid_config(env: &Environment, policy: Policy, t: u32, filter: u64, cache: u64) -> LsmConfig {
    LsmConfig {
        policy,
        size_ratio: t,
        buf_bytes: env.mem_bytes - filter - cache,
        filter_bytes: filter,
        cache_bytes: cache,
    }
}

fn predict_config(
    model: &TrainedModel,
    env: &Environment,
    mix: &WorkloadMix,
    cfg: &LsmConfig,
) -> Result<f64> {
    model.predict(&FeatureVector::from_parts(env, mix, cfg)?)
}

/// Least-squares scale of the analytic anchor against the labels. The
/// anchored fit then deviates from a correctly scaled analytic shape only
/// where the samples say so.
fn scaled_anchor(samples: &[(FeatureVector, f64)]) -> [f64; BASIS_DIM] {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in samples {
        let c: f64 = ANALYTIC_ANCHOR
            .iter()
            .zip(x.basis)
            .map(|(a, b)| a * b)
            .sum();
        num += y * c;
        den += c * c;
    }
    let alpha = if den > 0.0 { num / den } else { 0.0 };
    ANALYTIC_ANCHOR.map(|a| a * alpha)
}

fn train(store: &SampleStore, tcfg: &TunerConfig) -> Result<Option<TrainedModel>> {
    if store.is_empty() || (tcfg.model == ModelKind::Trees && store.len() < 2) {
        return Ok(None);
    }
    let samples = store.training_samples(tcfg.label)?;
    let mut model = match tcfg.model {
        ModelKind::Poly => fit_poly_anchored(&samples, &scaled_anchor(&samples), tcfg.label)?,
        ModelKind::Trees => fit_trees(&samples, &TreesParams::default(), tcfg.label)?,
    };
    model.meta.seed = tcfg.seed;
    Ok(Some(model))
}

/// Fits the configured model on an existing store, exactly as each search
/// stage does internally. Errors when the store holds too few rows.
pub fn train_model(store: &SampleStore, tcfg: &TunerConfig) -> Result<TrainedModel> {
    train(store, tcfg)?.ok_or_else(|| {
        Error::config(format!(
            "{} rows are too few to fit a {:?} model",
            store.len(),
            tcfg.model
        ))
    })
}

/// Model argmin over `T` in `t_range` and the filter grid, cache share
/// fixed. First minimum wins ties; non-finite predictions are skipped.
fn best_predicted(
    model: &TrainedModel,
    env: &Environment,
    mix: &WorkloadMix,
    policy: Policy,
    t_range: (u32, u32),
    cache: u64,
) -> Result<(LsmConfig, f64)> {
    let grid = filter_grid(env, cache);
    let mut best: Option<(LsmConfig, f64)> = None;
    for t in t_range.0..=t_range.1 {
        for &f in &grid {
            let cfg = grid_config(env, policy, t, f, cache);
            let p = predict_config(model, env, mix, &cfg)?;
            if p.is_finite() && best.as_ref().is_none_or(|&(_, bp)| p < bp) {
                best = Some((cfg, p));
            }
        }
    }
    best.ok_or_else(|| Error::config("no candidate produced a finite prediction"))
}

/// Centered integer offsets, e.g. 3 -> [-1, 0, 1].
fn stage_offsets(count: usize) -> Vec<i64> {
    let lo = -((count / 2) as i64);
    (lo..lo + count as i64).collect()
}

struct PolicySearch<'a> {
    env: &'a Environment,
    mix: &'a WorkloadMix,
    workload_id: &'a str,
    tcfg: &'a TunerConfig,
    evaluator: &'a mut dyn Evaluator,
    store: &'a mut SampleStore,
    policy: Policy,
    budget_left: u64,
    calls: u64,
    failures: Vec<String>,
}

impl PolicySearch<'_> {
    /// Ensures a measurement for `cfg` exists. A store hit reuses it for
    /// free; otherwise one budgeted evaluator call is spent. Returns whether
    /// a measurement is available afterwards.
    fn sample(&mut self, cfg: &LsmConfig) -> Result<bool> {
        let key = sample_key(self.workload_id, cfg, self.env, self.tcfg.seed);
        if self.store.get(&key).is_some() {
            return Ok(true);
        }
        if self.budget_left == 0 {
            return Ok(false);
        }
        self.budget_left -= 1;
        self.calls += 1;
        match self
            .evaluator
            .evaluate(self.env, cfg, self.mix, self.tcfg.seed)
        {
            Ok(m) => {
                self.store.push(CostSample {
                    workload_id: self.workload_id.to_owned(),
                    mix: *self.mix,
                    policy: cfg.policy,
                    size_ratio: cfg.size_ratio,
                    buf_bytes: cfg.buf_bytes,
                    filter_bytes: cfg.filter_bytes,
                    cache_bytes: cfg.cache_bytes,
                    n_entries: self.env.n_entries,
                    entry_bytes: self.env.entry_bytes,
                    block_entries: self.env.block_entries(),
                    blocks_read: m.blocks_read,
                    blocks_written: m.blocks_written,
                    mean_latency_ns: m.mean_latency_ns,
                    p90_latency_ns: m.p90_latency_ns,
                    io_per_op: m.io_per_op,
                    seed: self.tcfg.seed,
                })?;
                Ok(true)
            }
            Err(e) => {
                let msg = format!(
                    "{} {} T={} Mb={} Mf={} Mc={}: {e}",
                    self.workload_id,
                    cfg.policy,
                    cfg.size_ratio,
                    cfg.buf_bytes,
                    cfg.filter_bytes,
                    cfg.cache_bytes
                );
                log::warn!("evaluator failure: {msg}");
                self.failures.push(msg);
                Ok(false)
            }
        }
    }

    fn run(mut self) -> Result<PolicyOutcome> {
        let t_lim = self.env.max_size_ratio();
        let mut stage_predictions = Vec::new();
        let mut model: Option<TrainedModel> = None;

        // Ratio stage: sample an integer neighborhood of the analytic
        // optimum, each candidate at its own analytic memory split, then fix
        // the ratio at the model argmin over the whole admissible range.
        let t_star = theoretical_opt_t(self.env, self.mix, self.policy)?;
        let mut fresh = 0u64;
        for off in stage_offsets(self.tcfg.samples_per_stage) {
            let t = t_star as i64 + off * self.tcfg.t_step as i64;
            if t < 2 || t > t_lim as i64 {
                continue;
            }
            let t = t as u32;
            let (mb, mf) = theoretical_opt_memory(self.env, self.mix, t, self.policy)?;
            let cfg = LsmConfig {
                policy: self.policy,
                size_ratio: t,
                buf_bytes: mb,
                filter_bytes: mf,
                cache_bytes: 0,
            };
            if self.sample(&cfg)? {
                fresh += 1;
            }
        }
        if fresh > 0 {
            model = train(self.store, self.tcfg)?;
        }
        let mut incumbent = match (&model, fresh > 0) {
            (Some(m), true) => {
                let (cfg, p) = best_predicted(m, self.env, self.mix, self.policy, (2, t_lim), 0)?;
                stage_predictions.push(p);
                cfg
            }
            _ => {
                let (mb, mf) = theoretical_opt_memory(self.env, self.mix, t_star, self.policy)?;
                LsmConfig {
                    policy: self.policy,
                    size_ratio: t_star,
                    buf_bytes: mb,
                    filter_bytes: mf,
                    cache_bytes: 0,
                }
            }
        };

        // Memory stage: bracket the analytic split at the fixed ratio with
        // strides measured in bits per key, then fix the split at the model
        // argmin over the filter grid.
        let t_fixed = incumbent.size_ratio;
        let (mb_star, mf_star) = theoretical_opt_memory(self.env, self.mix, t_fixed, self.policy)?;
        let max_f = (self.env.mem_bytes - self.env.min_buffer_bytes) as i128;
        let step = (self.tcfg.bpk_step * self.env.n_entries as f64 / 8.0)
            .round()
            .max(1.0) as i128;
        let mut tried: Vec<u64> = Vec::new();
        let mut fresh = 0u64;
        for off in stage_offsets(self.tcfg.samples_per_stage) {
            let f = (mf_star as i128 + off as i128 * step).clamp(0, max_f) as u64;
            if tried.contains(&f) {
                continue;
            }
            tried.push(f);
            let cfg = grid_config(self.env, self.policy, t_fixed, f, 0);
            if self.sample(&cfg)? {
                fresh += 1;
            }
        }
        if fresh > 0 {
            model = train(self.store, self.tcfg)?;
        }
        incumbent = match (&model, fresh > 0) {
            (Some(m), true) => {
                let (cfg, p) =
                    best_predicted(m, self.env, self.mix, self.policy, (t_fixed, t_fixed), 0)?;
                stage_predictions.push(p);
                cfg
            }
            _ => LsmConfig {
                policy: self.policy,
                size_ratio: t_fixed,
                buf_bytes: mb_star,
                filter_bytes: mf_star,
                cache_bytes: 0,
            },
        };

        // Cache stage: shares of total memory moved from the buffer to the
        // cache, fixed by the model argmin over the candidate set itself
        // (the analytic model carries no cache signal).
        if !self.tcfg.cache_fractions.is_empty() {
            let base = incumbent;
            let movable = base.buf_bytes + base.cache_bytes;
            let mut candidates = vec![base];
            for frac in &self.tcfg.cache_fractions {
                let mc = (frac * self.env.mem_bytes as f64).round() as u64;
                if mc > movable || movable - mc < self.env.min_buffer_bytes {
                    continue;
                }
                let cfg = LsmConfig {
                    policy: self.policy,
                    size_ratio: base.size_ratio,
                    buf_bytes: movable - mc,
                    filter_bytes: base.filter_bytes,
                    cache_bytes: mc,
                };
                if !candidates.contains(&cfg) {
                    candidates.push(cfg);
                }
            }
            let mut fresh = 0u64;
            for cfg in candidates.clone() {
                if self.sample(&cfg)? {
                    fresh += 1;
                }
            }
            if fresh > 0 {
                model = train(self.store, self.tcfg)?;
                if let Some(m) = &model {
                    let mut best: Option<(LsmConfig, f64)> = None;
                    for cfg in &candidates {
                        let p = predict_config(m, self.env, self.mix, cfg)?;
                        if p.is_finite() && best.as_ref().is_none_or(|&(_, bp)| p < bp) {
                            best = Some((*cfg, p));
                        }
                    }
                    if let Some((cfg, p)) = best {
                        stage_predictions.push(p);
                        incumbent = cfg;
                    }
                }
            }
        }

        let predicted = match &model {
            Some(m) => predict_config(m, self.env, self.mix, &incumbent)?,
            None => cost(self.env, &incumbent, self.mix)?.combined,
        };
        Ok(PolicyOutcome {
            policy: self.policy,
            config: incumbent,
            predicted,
            stage_predictions,
            evaluator_calls: self.calls,
            failures: self.failures,
        })
    }
}

/// Tunes each workload with analytic seeding and staged sampling, pooling
/// every measurement in one store that later stages and workloads retrain
/// on. Returns the store and the per-workload picks.
pub fn decoupled_al(
    workloads: &[WorkloadMix],
    env: &Environment,
    tcfg: &TunerConfig,
    evaluator: &mut dyn Evaluator,
) -> Result<(SampleStore, Vec<TunedWorkload>)> {
    env.validate()?;
    tcfg.validate()?;
    let mut store = SampleStore::new();
    let mut tuned = Vec::with_capacity(workloads.len());
    for (i, mix) in workloads.iter().enumerate() {
        mix.validate()?;
        let workload_id = format!("w{:02}", i + 1);
        let split = [
            (Policy::Leveling, tcfg.budget - tcfg.budget / 2),
            (Policy::Tiering, tcfg.budget / 2),
        ];
        let mut outcomes = Vec::with_capacity(split.len());
        let mut calls = 0;
        for (policy, budget) in split {
            let outcome = PolicySearch {
                env,
                mix,
                workload_id: &workload_id,
                tcfg,
                evaluator: &mut *evaluator,
                store: &mut store,
                policy,
                budget_left: budget,
                calls: 0,
                failures: Vec::new(),
            }
            .run()?;
            calls += outcome.evaluator_calls;
            outcomes.push(outcome);
        }
        // Compare policies under one model snapshot so the numbers are
        // commensurable; without any samples the analytic cost decides.
        let final_model = train(&store, tcfg)?;
        let mut chosen: Option<(usize, f64)> = None;
        for (j, out) in outcomes.iter().enumerate() {
            let p = match &final_model {
                Some(m) => predict_config(m, env, mix, &out.config)?,
                None => cost(env, &out.config, mix)?.combined,
            };
            if p.is_finite() && chosen.is_none_or(|(_, bp)| p < bp) {
                chosen = Some((j, p));
            }
        }
        let (j, predicted) =
            chosen.ok_or_else(|| Error::config("no policy produced a finite prediction"))?;
        let config = outcomes[j].config;
        tuned.push(TunedWorkload {
            workload_id,
            mix: *mix,
            config,
            predicted,
            analytic_cost: cost(env, &config, mix)?.combined,
            evaluator_calls: calls,
            policies: outcomes,
        });
    }
    Ok((store, tuned))
}

/// Scales an environment's data size and memory by `k`; entry and block
/// shapes carry over.
pub fn scale_environment(env: &Environment, k: f64) -> Result<Environment> {
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::config(format!(
            "scale factor must be positive, got {k}"
        )));
    }
    let scale = |x: u64| (x as f64 * k).round().max(1.0) as u64;
    Environment::new(
        scale(env.n_entries),
        env.entry_bytes,
        env.block_bytes,
        scale(env.mem_bytes),
        scale(env.min_buffer_bytes),
    )
}

/// Clamps filter and cache into the budget and gives the buffer the exact
/// remainder, absorbing per-field rounding drift.
pub(crate) fn rebalance(cfg: &LsmConfig, env: &Environment) -> Result<LsmConfig> {
    let spare = env.mem_bytes - env.min_buffer_bytes;
    let filter = cfg.filter_bytes.min(spare);
    let cache = cfg.cache_bytes.min(spare - filter);
    let out = LsmConfig {
        policy: cfg.policy,
        size_ratio: cfg.size_ratio,
        buf_bytes: env.mem_bytes - filter - cache,
        filter_bytes: filter,
        cache_bytes: cache,
    };
    out.validate(env)?;
    Ok(out)
}

/// Runs the decoupled search at a small scale, then maps each tuned
/// configuration to the `k`-times-larger environment: the ratio carries
/// over and every memory allocation scales by `k`. Evaluator calls depend
/// only on the budget, not on `k`.
pub fn tune_with_extrapolation(
    workloads: &[WorkloadMix],
    env_small: &Environment,
    k: f64,
    tcfg: &TunerConfig,
    evaluator: &mut dyn Evaluator,
) -> Result<(SampleStore, Vec<TunedWorkload>)> {
    let env_full = scale_environment(env_small, k)?;
    let (store, small) = decoupled_al(workloads, env_small, tcfg, evaluator)?;
    let mut tuned = Vec::with_capacity(small.len());
    for t in small {
        let config = rebalance(&extrapolate(&t.config, k)?, &env_full)?;
        let analytic_cost = cost(&env_full, &config, &t.mix)?.combined;
        tuned.push(TunedWorkload {
            config,
            analytic_cost,
            ..t
        });
    }
    Ok((store, tuned))
}

/// Draws mixes whose KL divergence from `mix` stays within `rho` by
/// Dirichlet perturbation of the nonzero operation fractions (zero
/// fractions stay zero). `rho = 0` yields the nominal mix alone.
pub fn uncertainty_region(
    mix: &WorkloadMix,
    rho: f64,
    count: u32,
    seed: u64,
) -> Result<Vec<WorkloadMix>> {
    mix.validate()?;
    if !rho.is_finite() || rho < 0.0 {
        return Err(Error::config("rho must be finite and >= 0"));
    }
    if count == 0 {
        return Err(Error::config("draw count must be positive"));
    }
    if rho == 0.0 {
        return Ok(vec![*mix]);
    }
    let p = [mix.v, mix.r, mix.q, mix.w];
    let active: Vec<usize> = (0..4).filter(|&i| p[i] > 0.0).collect();
    if active.len() == 1 {
        return Ok(vec![*mix; count as usize]);
    }
    // Concentration targeting a mean divergence near rho/2 keeps the
    // rejection rate low at any radius.
    let conc = (active.len() as f64 - 1.0) / rho;
    let alpha: Vec<f64> = active.iter().map(|&i| (p[i] * conc).max(1e-3)).collect();
    let dir = Dirichlet::new(&alpha).map_err(|e| {
        Error::config(format!(
            "uncertainty region of radius {rho} is not drawable: {e}"
        ))
    })?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count as usize);
    let cap = 10_000u64.max(count as u64 * 1000);
    let mut attempts = 0u64;
    while out.len() < count as usize {
        attempts += 1;
        if attempts > cap {
            return Err(Error::config(format!(
                "could not draw {count} mixes within KL radius {rho} after {cap} attempts"
            )));
        }
        let q = dir.sample(&mut rng);
        let kl: f64 = q
            .iter()
            .zip(&active)
            .map(|(&qi, &i)| if qi > 0.0 { qi * (qi / p[i]).ln() } else { 0.0 })
            .sum();
        if !kl.is_finite() || kl > rho {
            continue;
        }
        let mut full = [0.0; 4];
        for (j, &i) in active.iter().enumerate() {
            full[i] = q[j];
        }
        if let Ok(m) = WorkloadMix::new(
            full[0],
            full[1],
            full[2],
            full[3],
            mix.s,
            mix.delete_fraction,
        ) {
            out.push(m);
        }
    }
    Ok(out)
}

/// Configuration minimizing the mean predicted cost over an uncertainty
/// region around `mix`. Scans both policies, the whole integer ratio range,
/// the filter grid, and the default cache shares; first minimum wins ties.
pub fn robust_tune(
    mix: &WorkloadMix,
    rho: f64,
    rho_draws: u32,
    model: &TrainedModel,
    env: &Environment,
    seed: u64,
) -> Result<LsmConfig> {
    env.validate()?;
    let draws = uncertainty_region(mix, rho, rho_draws, seed)?;
    let grids: Vec<(u64, Vec<u64>)> = DEFAULT_CACHE_FRACTIONS
        .iter()
        .map(|frac| (frac * env.mem_bytes as f64).round() as u64)
        .filter(|&mc| env.mem_bytes - mc >= env.min_buffer_bytes)
        .map(|mc| (mc, filter_grid(env, mc)))
        .collect();
    let mut best: Option<(LsmConfig, f64)> = None;
    for policy in POLICIES {
        for t in 2..=env.max_size_ratio() {
            for (mc, grid) in &grids {
                for &f in grid {
                    let cfg = grid_config(env, policy, t, f, *mc);
                    let mut sum = 0.0;
                    for d in &draws {
                        sum += predict_config(model, env, d, &cfg)?;
                    }
                    let mean = sum / draws.len() as f64;
                    if mean.is_finite() && best.as_ref().is_none_or(|&(_, b)| mean < b) {
                        best = Some((cfg, mean));
                    }
                }
            }
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::config("no candidate produced a finite prediction"))
}
