//! Online mode: watches the operation fractions of the live stream in fixed
//! periods, compares them against the mix that produced the current
//! configuration, and on drift beyond a threshold retunes through the model
//! and hands the engine a new target to migrate to lazily.

use std::fmt;
use std::ops::Range;

use crate::analytic::{extrapolate, level_count, Environment, LsmConfig};
use crate::engine::{encode_key, value_payload, LsmTree, WorkloadReport};
use crate::error::{Error, Result};
use crate::learner::TrainedModel;
use crate::tuner::{rebalance, robust_tune};
use crate::workload::{empirical_mix, Operation, OperationStream, WorkloadMix};

/// Drift detector settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorConfig {
    /// Operations per observation period.
    pub p: u64,
    /// Trigger threshold on any single operation fraction.
    pub tau: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { p: 10_000, tau: 0.10 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::config("detector period p must be at least 1"));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 || self.tau > 1.0 {
            return Err(Error::config(format!(
                "detector threshold tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// The operation fraction whose drift crossed the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriggerKind {
    EmptyRead,
    ExistingRead,
    RangeRead,
    Write,
}

impl TriggerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriggerKind::EmptyRead => "v",
            TriggerKind::ExistingRead => "r",
            TriggerKind::RangeRead => "q",
            TriggerKind::Write => "w",
        }
    }
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One reconfiguration: which period tripped the detector and how the
/// engine's target moved.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftEvent {
    /// Global 1-based period index across the whole run.
    pub period: u64,
    /// 1-based phase the period belongs to.
    pub phase: usize,
    pub observed: WorkloadMix,
    /// Reference mix in force when the trigger fired (from the last
    /// reconfiguration, or the initial tuning mix).
    pub reference: WorkloadMix,
    pub trigger: TriggerKind,
    /// Target being replaced.
    pub previous: LsmConfig,
    /// New target handed to the engine.
    pub target: LsmConfig,
}

pub const EVENT_CSV_HEADER: &str =
    "period,phase,trigger_kind,old_T,new_T,old_Mf,new_Mf,old_Mb,new_Mb,old_Mc,new_Mc";

pub fn events_to_csv(events: &[ShiftEvent]) -> String {
    let mut out = String::from(EVENT_CSV_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            e.period,
            e.phase,
            e.trigger,
            e.previous.size_ratio,
            e.target.size_ratio,
            e.previous.filter_bytes,
            e.target.filter_bytes,
            e.previous.buf_bytes,
            e.target.buf_bytes,
            e.previous.cache_bytes,
            e.target.cache_bytes,
        ));
    }
    out
}

/// Empirical operation fractions of one observation window.
pub fn observe(window: &[Operation]) -> WorkloadMix {
    empirical_mix(window)
}

/// Whether any operation fraction drifted beyond `tau` from the reference;
/// returns the largest offender (first of `v, r, q, w` on ties).
pub fn should_reconfigure(
    observed: &WorkloadMix,
    reference: &WorkloadMix,
    tau: f64,
) -> Option<TriggerKind> {
    let deltas = [
        (TriggerKind::EmptyRead, (observed.v - reference.v).abs()),
        (TriggerKind::ExistingRead, (observed.r - reference.r).abs()),
        (TriggerKind::RangeRead, (observed.q - reference.q).abs()),
        (TriggerKind::Write, (observed.w - reference.w).abs()),
    ];
    let (kind, delta) = deltas
        .into_iter()
        .reduce(|best, cur| if cur.1 > best.1 { cur } else { best })?;
    (delta > tau).then_some(kind)
}

/// Drift-triggered retuning against a model trained at `env_trained` (possibly
/// a smaller data scale than the engine runs at).
pub struct Controller<'m> {
    model: &'m TrainedModel,
    env_trained: Environment,
    detector: DetectorConfig,
    reference: WorkloadMix,
    seed: u64,
}

impl<'m> Controller<'m> {
    /// `reference` is the mix the current configuration was tuned for.
    pub fn new(
        model: &'m TrainedModel,
        env_trained: Environment,
        detector: DetectorConfig,
        reference: WorkloadMix,
        seed: u64,
    ) -> Result<Self> {
        env_trained.validate()?;
        detector.validate()?;
        reference.validate()?;
        Ok(Controller {
            model,
            env_trained,
            detector,
            reference,
            seed,
        })
    }

    pub fn detector(&self) -> &DetectorConfig {
        &self.detector
    }

    /// Mix the active target was tuned for; updated by every retarget.
    pub fn reference(&self) -> &WorkloadMix {
        &self.reference
    }

    /// Retunes for `observed`: the model argmin at the trained scale, scaled
    /// to the engine's data size, becomes the engine's new target, and
    /// `observed` the new reference. The engine migrates lazily.
    pub fn retarget(
        &mut self,
        engine: &mut LsmTree,
        observed: &WorkloadMix,
        period: u64,
        phase: usize,
        trigger: TriggerKind,
    ) -> Result<ShiftEvent> {
        let live = *engine.env();
        if live.entry_bytes != self.env_trained.entry_bytes
            || live.block_bytes != self.env_trained.block_bytes
        {
            return Err(Error::config(format!(
                "model was trained for {}B entries in {}B blocks, engine has {}B in {}B",
                self.env_trained.entry_bytes,
                self.env_trained.block_bytes,
                live.entry_bytes,
                live.block_bytes
            )));
        }
        let small = robust_tune(observed, 0.0, 1, self.model, &self.env_trained, self.seed)?;
        let k = live.n_entries as f64 / self.env_trained.n_entries as f64;
        let target = if live == self.env_trained {
            small
        } else {
            rebalance(&extrapolate(&small, k)?, &live)?
        };
        let previous = *engine.target_config();
        engine.set_target_config(target)?;
        let event = ShiftEvent {
            period,
            phase,
            observed: *observed,
            reference: self.reference,
            trigger,
            previous,
            target,
        };
        self.reference = *observed;
        Ok(event)
    }
}

/// One phase of the shifting sequence, measured on the dynamic engine.
#[derive(Clone, Debug)]
pub struct PhaseReport {
    /// 1-based position in the sequence.
    pub phase: usize,
    /// Empirical mix of the phase's whole stream.
    pub observed: WorkloadMix,
    pub report: WorkloadReport,
    pub target_at_end: LsmConfig,
    pub active_at_end: LsmConfig,
    /// Engine failure that aborted the phase, if any.
    pub error: Option<String>,
}

pub struct DynamicReport {
    pub phases: Vec<PhaseReport>,
    pub events: Vec<ShiftEvent>,
    /// Blocks the retargeting run moved in total, filler included.
    pub total_blocks: u64,
    /// Blocks an identical run with retargeting disabled moved.
    pub control_blocks: u64,
    /// Extra traffic attributable to reconfiguration: the difference of the
    /// two runs, floored at zero (a better-tuned engine can move less).
    pub transition_blocks: u64,
    /// Fresh-key spans inserted at the phase boundaries. Planned before the
    /// run starts, so the retargeting run, the control run, and any
    /// [`run_static`] comparison execute identical operation sequences.
    pub filler_spans: Vec<Range<u64>>,
}

/// Replays the shifting workload sequence, observing each full period and
/// retargeting on drift. Insert filler between phases keeps data flowing
/// through the levels so lazy migrations make progress. `make_engine` must
/// build identical engines; it is called twice, the second time for a
/// control run with retargeting disabled that prices the transitions.
pub fn run_dynamic<F>(
    mut make_engine: F,
    streams: &[OperationStream],
    detector: &DetectorConfig,
    model: &TrainedModel,
    env_trained: &Environment,
    reference: WorkloadMix,
    seed: u64,
) -> Result<DynamicReport>
where
    F: FnMut() -> Result<LsmTree>,
{
    detector.validate()?;
    let mut controller = Controller::new(model, *env_trained, *detector, reference, seed)?;
    let mut engine = make_engine()?;
    let filler_spans = plan_filler(&engine, streams.len().saturating_sub(1))?;
    engine.reset_stats();
    let (phases, events) = replay(&mut engine, streams, &filler_spans, Some(&mut controller))?;
    let total_blocks = engine.stats().total_blocks();

    let mut control = make_engine()?;
    control.reset_stats();
    replay(&mut control, streams, &filler_spans, None)?;
    let control_blocks = control.stats().total_blocks();

    Ok(DynamicReport {
        phases,
        events,
        total_blocks,
        control_blocks,
        transition_blocks: total_blocks.saturating_sub(control_blocks),
        filler_spans,
    })
}

/// Replays `streams` with `filler_spans` inserted at the phase boundaries
/// and no retargeting: prices a fixed configuration on the exact operation
/// sequence a dynamic run executed. Returns the per-phase reports and the
/// total blocks moved, filler included.
pub fn run_static<F>(
    mut make_engine: F,
    streams: &[OperationStream],
    filler_spans: &[Range<u64>],
) -> Result<(Vec<PhaseReport>, u64)>
where
    F: FnMut() -> Result<LsmTree>,
{
    let mut engine = make_engine()?;
    engine.reset_stats();
    let (phases, _) = replay(&mut engine, streams, filler_spans, None)?;
    Ok((phases, engine.stats().total_blocks()))
}

/// Fresh-key spans for the phase boundaries: one write-buffer flush per
/// populated (or nominal target) level, sized from the engine as it stands
/// before the run so every replay sees the same operations.
fn plan_filler(engine: &LsmTree, boundaries: usize) -> Result<Vec<Range<u64>>> {
    let env = *engine.env();
    let target = *engine.target_config();
    let nominal = level_count(&env, target.size_ratio, target.buf_bytes)?;
    let depth = engine.run_layout().len().max(nominal as usize) as u64;
    let fill = depth * engine.buffer_capacity();
    let mut spans = Vec::with_capacity(boundaries);
    let mut next = env.n_entries;
    for _ in 0..boundaries {
        spans.push(next..next + fill);
        next += fill;
    }
    Ok(spans)
}

fn replay(
    engine: &mut LsmTree,
    streams: &[OperationStream],
    filler: &[Range<u64>],
    mut controller: Option<&mut Controller<'_>>,
) -> Result<(Vec<PhaseReport>, Vec<ShiftEvent>)> {
    let mut phases = Vec::with_capacity(streams.len());
    let mut events = Vec::new();
    let mut period = 0u64;
    for (i, stream) in streams.iter().enumerate() {
        let phase = i + 1;
        let p = controller
            .as_ref()
            .map_or(u64::MAX, |c| c.detector.p)
            .max(1) as usize;
        let before = *engine.stats();
        let mut latencies = Vec::with_capacity(stream.len());
        let mut error = None;
        for window in stream.ops.chunks(p) {
            if let Err(e) = engine.execute_ops(window, &mut latencies) {
                log::warn!("phase {phase} aborted: {e}");
                error = Some(e.to_string());
                break;
            }
            if window.len() < p {
                continue;
            }
            period += 1;
            if let Some(c) = controller.as_deref_mut() {
                let observed = observe(window);
                if let Some(kind) = should_reconfigure(&observed, &c.reference, c.detector.tau) {
                    events.push(c.retarget(engine, &observed, period, phase, kind)?);
                }
            }
        }
        phases.push(PhaseReport {
            phase,
            observed: empirical_mix(&stream.ops),
            report: WorkloadReport::from_measured(engine.stats().delta_since(&before), latencies),
            target_at_end: *engine.target_config(),
            active_at_end: *engine.active_config(),
            error,
        });
        if let Some(span) = filler.get(i) {
            let env = *engine.env();
            for key in span.clone() {
                engine.put(&encode_key(key), &value_payload(&env, key))?;
            }
        }
    }
    Ok((phases, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::Policy;
    use crate::learner::{fit_poly, LabelKind};
    use crate::tuner::{decoupled_al, AnalyticEvaluator, TunerConfig};
    use crate::workload::{
        generate_stream, test_workloads, training_workloads, KeyDistribution, KeyUniverse,
    };

    fn env_small() -> Environment {
        Environment::new(4096, 32, 128, 16_384, 1024).unwrap()
    }

    fn center() -> WorkloadMix {
        WorkloadMix::from_fractions(0.25, 0.25, 0.25, 0.25).unwrap()
    }

    /// Polynomial model fit on pooled oracle samples of the training mixes.
    fn oracle_model(env: &Environment) -> TrainedModel {
        let tcfg = TunerConfig::default();
        let mut ev = AnalyticEvaluator;
        let (store, _) = decoupled_al(&training_workloads(), env, &tcfg, &mut ev).unwrap();
        fit_poly(
            &store.training_samples(LabelKind::MeanLatencyNs).unwrap(),
            LabelKind::MeanLatencyNs,
        )
        .unwrap()
    }

    #[test]
    fn detector_defaults_and_validation() {
        let d = DetectorConfig::default();
        assert_eq!(d.p, 10_000);
        assert_eq!(d.tau, 0.10);
        assert!(d.validate().is_ok());
        assert!(DetectorConfig { p: 0, tau: 0.1 }.validate().is_err());
        assert!(DetectorConfig { p: 1, tau: 0.0 }.validate().is_err());
        assert!(DetectorConfig { p: 1, tau: 1.0 }.validate().is_ok());
        assert!(DetectorConfig { p: 1, tau: 1.01 }.validate().is_err());
        assert!(DetectorConfig { p: 1, tau: f64::NAN }.validate().is_err());
    }

    #[test]
    fn drift_decision_matches_the_worked_example() {
        let reference = WorkloadMix::from_fractions(0.25, 0.25, 0.20, 0.30).unwrap();
        let shrunk = WorkloadMix::from_fractions(0.30, 0.30, 0.25, 0.15).unwrap();
        let held = WorkloadMix::from_fractions(0.27, 0.27, 0.21, 0.25).unwrap();
        assert_eq!(
            should_reconfigure(&shrunk, &reference, 0.10),
            Some(TriggerKind::Write)
        );
        assert_eq!(should_reconfigure(&held, &reference, 0.10), None);
        for tau in [0.01, 0.10, 1.0] {
            assert_eq!(should_reconfigure(&reference, &reference, tau), None);
        }
        // The largest drift names the trigger; first of v, r, q, w on ties.
        let c = center();
        let tied = WorkloadMix::from_fractions(0.05, 0.45, 0.25, 0.25).unwrap();
        assert_eq!(
            should_reconfigure(&tied, &c, 0.10),
            Some(TriggerKind::EmptyRead)
        );
        let r_max = WorkloadMix::from_fractions(0.10, 0.52, 0.13, 0.25).unwrap();
        assert_eq!(
            should_reconfigure(&r_max, &c, 0.10),
            Some(TriggerKind::ExistingRead)
        );
    }

    #[test]
    fn observation_windows_estimate_the_generating_mix() {
        let writes: Vec<Operation> = (0..50)
            .map(|k| Operation::Put {
                key: k,
                value_seed: k,
            })
            .collect();
        let m = observe(&writes);
        assert_eq!((m.v, m.r, m.q, m.w), (0.0, 0.0, 0.0, 1.0));

        let mix = center();
        let dist = KeyDistribution::uniform(11);
        let universe = KeyUniverse::new(4096);
        let stream = generate_stream(&mix, &dist, 20_000, &universe).unwrap();
        // 3 sigma of a fraction estimated from 10k draws at p = 0.25.
        let bound = 3.0 * (0.25f64 * 0.75 / 10_000.0).sqrt();
        let halves = [
            observe(&stream.ops[..10_000]),
            observe(&stream.ops[10_000..]),
        ];
        for h in &halves {
            for (got, want) in [(h.v, mix.v), (h.r, mix.r), (h.q, mix.q), (h.w, mix.w)] {
                assert!((got - want).abs() < bound, "{got} vs {want}");
            }
        }
        // Two windows of the same stationary stream agree to twice that.
        let (a, b) = (halves[0], halves[1]);
        for (x, y) in [(a.v, b.v), (a.r, b.r), (a.q, b.q), (a.w, b.w)] {
            assert!((x - y).abs() < 2.0 * bound);
        }
    }

    #[test]
    fn retarget_is_a_fixed_point_on_the_tuning_mix() {
        let env = env_small();
        let model = oracle_model(&env);
        let mix = center();
        let cfg0 = robust_tune(&mix, 0.0, 1, &model, &env, 7).unwrap();
        let mut engine = LsmTree::open_memory(env, cfg0).unwrap();
        let mut c =
            Controller::new(&model, env, DetectorConfig::default(), mix, 7).unwrap();
        let ev = c
            .retarget(&mut engine, &mix, 3, 1, TriggerKind::Write)
            .unwrap();
        assert_eq!(ev.target, cfg0);
        assert_eq!(ev.previous, cfg0);
        assert_eq!(engine.target_config(), &cfg0);
        assert_eq!(engine.active_config(), &cfg0);
        assert_eq!((ev.period, ev.phase), (3, 1));
        assert_eq!(c.reference(), &mix);
    }

    #[test]
    fn retarget_moves_write_heavy_mixes_toward_the_write_optimum() {
        let env = env_small();
        let model = oracle_model(&env);
        let tests = test_workloads();
        let read_heavy = &tests[2]; // v = 0.91
        let write_heavy = &tests[20]; // w = 0.91
        let a = robust_tune(read_heavy, 0.0, 1, &model, &env, 7).unwrap();
        let b = robust_tune(write_heavy, 0.0, 1, &model, &env, 7).unwrap();
        assert!(b.filter_bytes < a.filter_bytes);
        assert_eq!(a.policy, Policy::Leveling);
        assert_eq!(b.policy, Policy::Tiering);
    }

    #[test]
    fn retarget_scales_memory_with_the_live_data_size() {
        let env = env_small();
        let model = oracle_model(&env);
        let live = crate::tuner::scale_environment(&env, 10.0).unwrap();
        let mix = center();
        let small = robust_tune(&mix, 0.0, 1, &model, &env, 7).unwrap();
        let want = rebalance(&extrapolate(&small, 10.0).unwrap(), &live).unwrap();
        let initial = LsmConfig {
            policy: Policy::Leveling,
            size_ratio: 10,
            buf_bytes: live.mem_bytes,
            filter_bytes: 0,
            cache_bytes: 0,
        };
        let mut engine = LsmTree::open_memory(live, initial).unwrap();
        let mut c =
            Controller::new(&model, env, DetectorConfig::default(), mix, 7).unwrap();
        let ev = c
            .retarget(&mut engine, &mix, 1, 1, TriggerKind::Write)
            .unwrap();
        assert_eq!(ev.target, want);
        assert_eq!(ev.target.filter_bytes, 10 * small.filter_bytes);
        assert_eq!(ev.target.cache_bytes, 10 * small.cache_bytes);
        assert_eq!(ev.target.size_ratio, small.size_ratio);
        assert_eq!(engine.target_config(), &want);
    }

    #[test]
    fn retarget_rejects_mismatched_shapes() {
        let env = env_small();
        let model = oracle_model(&env);
        let other = Environment::new(4096, 16, 128, 16_384, 1024).unwrap();
        let initial = LsmConfig {
            policy: Policy::Leveling,
            size_ratio: 4,
            buf_bytes: other.mem_bytes,
            filter_bytes: 0,
            cache_bytes: 0,
        };
        let mut engine = LsmTree::open_memory(other, initial).unwrap();
        let mut c =
            Controller::new(&model, env, DetectorConfig::default(), center(), 7).unwrap();
        let err = c
            .retarget(&mut engine, &center(), 1, 1, TriggerKind::Write)
            .unwrap_err();
        assert!(err.to_string().contains("trained for"), "{err}");
    }

    /// Three hand-built phases: existing-point reads, writes, reads again.
    fn shift_scenario() -> Vec<OperationStream> {
        let reads: Vec<Operation> = (0..192).map(|k| Operation::PointGetExisting(k % 4096)).collect();
        let writes: Vec<Operation> = (0..192)
            .map(|k| Operation::Put {
                key: k % 4096,
                value_seed: k,
            })
            .collect();
        vec![
            OperationStream { ops: reads.clone() },
            OperationStream { ops: writes },
            OperationStream { ops: reads },
        ]
    }

    fn scenario_engine(env: &Environment, cfg: LsmConfig) -> Result<LsmTree> {
        let mut e = LsmTree::open_memory(*env, cfg)?;
        e.preload(env.n_entries, 5)?;
        Ok(e)
    }

    #[test]
    fn unreachable_threshold_never_triggers() {
        let env = env_small();
        let model = oracle_model(&env);
        let reads_only = WorkloadMix::from_fractions(0.0, 1.0, 0.0, 0.0).unwrap();
        let cfg0 = robust_tune(&reads_only, 0.0, 1, &model, &env, 7).unwrap();
        let detector = DetectorConfig { p: 64, tau: 1.0 };
        let report = run_dynamic(
            || scenario_engine(&env, cfg0),
            &shift_scenario(),
            &detector,
            &model,
            &env,
            reads_only,
            7,
        )
        .unwrap();
        assert!(report.events.is_empty());
        assert_eq!(report.phases.len(), 3);
        for p in &report.phases {
            assert_eq!(p.target_at_end, cfg0);
            assert!(p.error.is_none());
            assert_eq!(p.report.ops, 192);
        }
        // Without retargets the two runs are the same run.
        assert_eq!(report.total_blocks, report.control_blocks);
        assert_eq!(report.transition_blocks, 0);
    }

    #[test]
    fn constructed_shifts_trigger_exactly_at_the_boundaries() {
        let env = env_small();
        let model = oracle_model(&env);
        let reads_only = WorkloadMix::from_fractions(0.0, 1.0, 0.0, 0.0).unwrap();
        let writes_only = WorkloadMix::from_fractions(0.0, 0.0, 0.0, 1.0).unwrap();
        let cfg0 = robust_tune(&reads_only, 0.0, 1, &model, &env, 7).unwrap();
        let detector = DetectorConfig { p: 64, tau: 0.5 };
        let report = run_dynamic(
            || scenario_engine(&env, cfg0),
            &shift_scenario(),
            &detector,
            &model,
            &env,
            reads_only,
            7,
        )
        .unwrap();
        // Phases are 3 periods each; the first window of each shifted phase
        // trips the detector once, then the reference tracks the new mix.
        assert_eq!(report.events.len(), 2);
        let e0 = &report.events[0];
        assert_eq!((e0.period, e0.phase), (4, 2));
        assert_eq!(e0.trigger, TriggerKind::ExistingRead);
        assert_eq!(e0.observed, observe(&shift_scenario()[1].ops[..64]));
        assert_eq!(e0.reference, reads_only);
        assert_eq!(e0.previous, cfg0);
        assert_eq!(
            e0.target,
            robust_tune(&e0.observed, 0.0, 1, &model, &env, 7).unwrap()
        );
        let e1 = &report.events[1];
        assert_eq!((e1.period, e1.phase), (7, 3));
        assert_eq!(e1.trigger, TriggerKind::ExistingRead);
        assert_eq!(e1.reference, writes_only);
        assert_eq!(e1.previous, report.events[0].target);
        // Soundness: every event clears the threshold it claims.
        for e in &report.events {
            let d = match e.trigger {
                TriggerKind::EmptyRead => (e.observed.v - e.reference.v).abs(),
                TriggerKind::ExistingRead => (e.observed.r - e.reference.r).abs(),
                TriggerKind::RangeRead => (e.observed.q - e.reference.q).abs(),
                TriggerKind::Write => (e.observed.w - e.reference.w).abs(),
            };
            assert!(d > detector.tau);
        }
        assert_eq!(
            report.transition_blocks,
            report.total_blocks.saturating_sub(report.control_blocks)
        );
    }

    #[test]
    fn dynamic_runs_are_deterministic() {
        let env = env_small();
        let model = oracle_model(&env);
        let reads_only = WorkloadMix::from_fractions(0.0, 1.0, 0.0, 0.0).unwrap();
        let cfg0 = robust_tune(&reads_only, 0.0, 1, &model, &env, 7).unwrap();
        let detector = DetectorConfig { p: 64, tau: 0.5 };
        let run = || {
            run_dynamic(
                || scenario_engine(&env, cfg0),
                &shift_scenario(),
                &detector,
                &model,
                &env,
                reads_only,
                7,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(events_to_csv(&a.events), events_to_csv(&b.events));
        assert_eq!(a.total_blocks, b.total_blocks);
        assert_eq!(a.control_blocks, b.control_blocks);
        let io = |r: &DynamicReport| -> Vec<u64> {
            r.phases.iter().map(|p| p.report.io.total_blocks()).collect()
        };
        assert_eq!(io(&a), io(&b));
    }

    #[test]
    fn event_csv_layout() {
        let cfg_a = LsmConfig {
            policy: Policy::Leveling,
            size_ratio: 10,
            buf_bytes: 8192,
            filter_bytes: 512,
            cache_bytes: 256,
        };
        let cfg_b = LsmConfig {
            policy: Policy::Tiering,
            size_ratio: 5,
            buf_bytes: 8448,
            filter_bytes: 384,
            cache_bytes: 128,
        };
        let event = ShiftEvent {
            period: 12,
            phase: 3,
            observed: center(),
            reference: center(),
            trigger: TriggerKind::RangeRead,
            previous: cfg_a,
            target: cfg_b,
        };
        let csv = events_to_csv(&[event]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "period,phase,trigger_kind,old_T,new_T,old_Mf,new_Mf,old_Mb,new_Mb,old_Mc,new_Mc"
        );
        assert_eq!(lines.next().unwrap(), "12,3,q,10,5,512,384,8192,8448,256,128");
        assert_eq!(lines.next(), None);
    }
}
