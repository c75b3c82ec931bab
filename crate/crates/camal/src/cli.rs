//! Command-line front end: workload files, sample collection, model fitting,
//! configuration search, engine benchmarks, and shifting-sequence replay.
//! Every command writes its outputs next to a JSON manifest recording the
//! invocation, environment, seeds, and artifact checksums; equal seeds
//! reproduce byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analytic::{cost, extrapolate, Environment, LsmConfig, Policy};
use crate::dynamic::{events_to_csv, run_dynamic, DetectorConfig, DynamicReport};
use crate::engine::LsmTree;
use crate::error::{Error, Result};
use crate::learner::codec::{load_model_file, save_model_file};
use crate::learner::{LabelKind, ModelKind, TrainedModel};
use crate::tuner::{
    decoupled_al, rebalance, robust_tune, scale_environment, train_model, AnalyticEvaluator,
    EngineEvaluator, Evaluator, SampleStore, TunerConfig,
};
use crate::workload::{
    format_workload_file, generate_stream, parse_workload_file, splitmix64, test_workloads,
    training_workloads, KeyDistribution, KeyUniverse, OperationStream, WorkloadMix,
};

/// Storage block size; entries per block follow from `--entry-bytes`.
const BLOCK_BYTES: u64 = 4096;

pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    match dispatch(Cli::parse().command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 2 rejects the request, 3 reports a failure carrying it out.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } => 2,
        Error::Engine(_) | Error::Decode { .. } | Error::Learner(_) => 3,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "camal",
    version,
    about = "LSM-tree tuning workbench: an instrumented engine, analytic cost models, \
             sample-efficient learned tuning, and drift-triggered reconfiguration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the built-in training and test workload files.
    Workloads(WorkloadsArgs),
    /// Collect cost samples into a CSV store via the staged search.
    Sample(Box<SampleArgs>),
    /// Fit a cost model from a sample store.
    Train(TrainArgs),
    /// Search tuned configurations and write the configuration report.
    Tune(Box<TuneArgs>),
    /// Measure every report configuration on the engine.
    Bench(Box<BenchArgs>),
    /// Replay a shifting workload sequence with drift-triggered retuning.
    Dynamic(Box<DynamicArgs>),
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Workloads(a) => cmd_workloads(a),
        Command::Sample(a) => cmd_sample(*a),
        Command::Train(a) => cmd_train(a),
        Command::Tune(a) => cmd_tune(*a),
        Command::Bench(a) => cmd_bench(*a),
        Command::Dynamic(a) => cmd_dynamic(*a),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// 10^6 entries of 1 KiB, 16 MiB memory, 500k-op streams.
    Default,
    /// 10^5 entries of 64 B, 256 KiB memory, 50k-op streams; desk-scale runs.
    Test,
}

struct ProfileValues {
    n: u64,
    entry_bytes: u64,
    mem_bytes: u64,
    min_buffer_bytes: u64,
    ops: usize,
    period: u64,
}

impl Profile {
    fn values(self) -> ProfileValues {
        match self {
            Profile::Default => ProfileValues {
                n: 1_000_000,
                entry_bytes: 1024,
                mem_bytes: 16 << 20,
                min_buffer_bytes: 1 << 20,
                ops: 500_000,
                period: 10_000,
            },
            Profile::Test => ProfileValues {
                n: 100_000,
                entry_bytes: 64,
                mem_bytes: 256 << 10,
                min_buffer_bytes: 8 << 10,
                ops: 50_000,
                period: 1_000,
            },
        }
    }
}

#[derive(Args, Debug)]
struct EnvArgs {
    /// Size preset; the flags below override its individual fields.
    #[arg(long, value_enum, default_value_t = Profile::Default)]
    profile: Profile,
    /// Resident entry count N.
    #[arg(long)]
    n: Option<u64>,
    /// Bytes per entry E.
    #[arg(long)]
    entry_bytes: Option<u64>,
    /// Total memory budget M in MiB (buffer + filters + cache).
    #[arg(long)]
    mem_mb: Option<f64>,
    /// Smallest allowed write buffer in MiB.
    #[arg(long)]
    min_buffer_mb: Option<f64>,
}

impl EnvArgs {
    fn resolve(&self) -> Result<Environment> {
        let p = self.profile.values();
        let mem = match self.mem_mb {
            Some(m) => mib(m)?,
            None => p.mem_bytes,
        };
        let min_buffer = match self.min_buffer_mb {
            Some(m) => mib(m)?,
            None => p.min_buffer_bytes,
        };
        Environment::new(
            self.n.unwrap_or(p.n),
            self.entry_bytes.unwrap_or(p.entry_bytes),
            BLOCK_BYTES,
            mem,
            min_buffer,
        )
    }

    fn default_ops(&self) -> usize {
        self.profile.values().ops
    }

    fn default_period(&self) -> u64 {
        self.profile.values().period
    }
}

fn mib(m: f64) -> Result<u64> {
    if !m.is_finite() || m <= 0.0 {
        return Err(Error::config(format!("size {m} MiB must be positive")));
    }
    Ok((m * (1u64 << 20) as f64).round() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Poly,
    Trees,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> ModelKind {
        match m {
            ModelArg::Poly => ModelKind::Poly,
            ModelArg::Trees => ModelKind::Trees,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LabelArg {
    /// Mean operation latency.
    Latency,
    /// 90th-percentile operation latency.
    P90,
    /// Blocks touched per operation.
    Io,
}

impl From<LabelArg> for LabelKind {
    fn from(l: LabelArg) -> LabelKind {
        match l {
            LabelArg::Latency => LabelKind::MeanLatencyNs,
            LabelArg::P90 => LabelKind::P90LatencyNs,
            LabelArg::Io => LabelKind::IoPerOp,
        }
    }
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Evaluator calls per workload; 0 skips sampling for the pure analytic
    /// answer.
    #[arg(long, default_value_t = 20)]
    budget: u64,
    /// Neighborhood size of the ratio and memory search stages.
    #[arg(long, default_value_t = 3)]
    samples_per_stage: usize,
    /// Cost regressor family.
    #[arg(long, value_enum, default_value_t = ModelArg::Poly)]
    model: ModelArg,
    /// Objective the regressor is fit to.
    #[arg(long, value_enum, default_value_t = LabelArg::Latency)]
    label: LabelArg,
    /// KL radius of the workload-uncertainty region; 0 tunes the nominal mix
    /// alone.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Mixes drawn from the region per robust search.
    #[arg(long, default_value_t = 10)]
    rho_draws: u32,
}

impl SearchArgs {
    fn tuner_config(&self, seed: u64) -> TunerConfig {
        let mut budget = self.budget;
        let floor = 2 * self.samples_per_stage as u64;
        if budget != 0 && budget < floor {
            log::warn!(
                "budget {budget} cannot cover the two parameter stages (need {floor}); \
                 falling back to the analytic optimum"
            );
            budget = 0;
        }
        TunerConfig {
            budget,
            samples_per_stage: self.samples_per_stage,
            label: self.label.into(),
            model: self.model.into(),
            seed,
            rho: self.rho,
            rho_draws: self.rho_draws,
            ..TunerConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DistArg {
    Uniform,
    Zipfian,
}

#[derive(Args, Debug)]
struct StreamArgs {
    /// Key distribution of generated operations.
    #[arg(long, value_enum, default_value_t = DistArg::Uniform)]
    dist: DistArg,
    /// Zipfian skew, used with --dist zipfian.
    #[arg(long, default_value_t = 0.99)]
    theta: f64,
    /// Master seed; every stream and search decision derives from it.
    #[arg(long, env = "CAMAL_SEED", default_value_t = 42)]
    seed: u64,
}

impl StreamArgs {
    fn distribution(&self, seed: u64) -> KeyDistribution {
        match self.dist {
            DistArg::Uniform => KeyDistribution::uniform(seed),
            DistArg::Zipfian => KeyDistribution::zipfian(self.theta, seed),
        }
    }

    fn zipf_theta(&self) -> Option<f64> {
        match self.dist {
            DistArg::Uniform => None,
            DistArg::Zipfian => Some(self.theta),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EvaluatorArg {
    /// Measure each sampled configuration on a fresh in-memory engine.
    Engine,
    /// Score with the analytic cost model (noise-free, fast).
    Analytic,
}

impl EvaluatorArg {
    fn build(self, ops: usize, zipf_theta: Option<f64>) -> Box<dyn Evaluator> {
        match self {
            EvaluatorArg::Engine => Box::new(EngineEvaluator { ops, zipf_theta }),
            EvaluatorArg::Analytic => Box::new(AnalyticEvaluator),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SetArg {
    Train,
    Test,
}

/// Splits the declared environment into the sampling scale: `k = 1` trains at
/// the declared size, `k > 1` at a `1/k` replica whose tuned configurations
/// extrapolate back up.
fn sampling_scale(env: &Environment, k: f64) -> Result<(Environment, f64)> {
    if !k.is_finite() || k < 1.0 {
        return Err(Error::config(format!(
            "extrapolation factor k must be at least 1, got {k}"
        )));
    }
    if k == 1.0 {
        return Ok((*env, 1.0));
    }
    let small = scale_environment(env, 1.0 / k)?;
    let actual = env.n_entries as f64 / small.n_entries as f64;
    Ok((small, actual))
}

/// Maps a trained-scale pick to the declared environment.
fn lift_config(cfg: &LsmConfig, k: f64, env: &Environment) -> Result<LsmConfig> {
    if k == 1.0 {
        return Ok(*cfg);
    }
    rebalance(&extrapolate(cfg, k)?, env)
}

fn load_mixes(path: Option<&Path>, fallback: SetArg) -> Result<Vec<WorkloadMix>> {
    match path {
        Some(p) => parse_workload_file(&p.display().to_string(), &read_text(p)?),
        None => Ok(match fallback {
            SetArg::Train => training_workloads(),
            SetArg::Test => test_workloads(),
        }),
    }
}

/// Reference point every tuned configuration is compared against: leveling at
/// ratio 10 with a 10 bit/key filter and all remaining memory in the buffer.
pub fn baseline_config(env: &Environment) -> Result<LsmConfig> {
    let filter_bytes = env.n_entries * 10 / 8;
    if filter_bytes + env.min_buffer_bytes > env.mem_bytes {
        return Err(Error::config(format!(
            "memory {} cannot hold a 10 bit/key filter plus the minimum buffer",
            env.mem_bytes
        )));
    }
    let cfg = LsmConfig {
        policy: Policy::Leveling,
        size_ratio: 10,
        buf_bytes: env.mem_bytes - filter_bytes,
        filter_bytes,
        cache_bytes: 0,
    };
    cfg.validate(env)?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Configuration report: the artifact `tune` writes and `bench` consumes.

pub const REPORT_CSV_HEADER: &str = "workload_id,v,r,q,w,s,delete_fraction,source,policy,T,\
                                     buf_bytes,filter_bytes,cache_bytes,predicted_cost,\
                                     analytic_cost,evaluator_calls,trained_n,trained_mem_bytes";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigSource {
    Tuned,
    Baseline,
}

impl ConfigSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConfigSource::Tuned => "tuned",
            ConfigSource::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Result<ConfigSource> {
        match s {
            "tuned" => Ok(ConfigSource::Tuned),
            "baseline" => Ok(ConfigSource::Baseline),
            other => Err(Error::config(format!("unknown config source {other:?}"))),
        }
    }
}

/// One (workload, configuration) row of the report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub workload_id: String,
    pub mix: WorkloadMix,
    pub source: ConfigSource,
    pub config: LsmConfig,
    /// Model prediction at the trained scale; analytic cost when no model ran.
    pub predicted_cost: f64,
    /// Analytic combined cost at the declared (full) scale.
    pub analytic_cost: f64,
    pub evaluator_calls: u64,
    /// Scale the samples were collected at.
    pub trained_n: u64,
    pub trained_mem_bytes: u64,
}

pub fn format_config_report(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.workload_id,
            r.mix.v,
            r.mix.r,
            r.mix.q,
            r.mix.w,
            r.mix.s,
            r.mix.delete_fraction,
            r.source.as_str(),
            r.config.policy,
            r.config.size_ratio,
            r.config.buf_bytes,
            r.config.filter_bytes,
            r.config.cache_bytes,
            r.predicted_cost,
            r.analytic_cost,
            r.evaluator_calls,
            r.trained_n,
            r.trained_mem_bytes,
        ));
    }
    out
}

pub fn parse_config_report(name: &str, text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == REPORT_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::parse(
                name,
                1,
                format!("header mismatch: got {header:?}"),
            ))
        }
        None => return Err(Error::parse(name, 1, "empty file")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 18 {
            return Err(Error::parse(
                name,
                line_no,
                format!("expected 18 fields, got {}", fields.len()),
            ));
        }
        let f64_at = |i: usize, what: &str| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(name, line_no, format!("bad {what}: {:?}", fields[i])))
        };
        let u64_at = |i: usize, what: &str| -> Result<u64> {
            fields[i]
                .parse::<u64>()
                .map_err(|_| Error::parse(name, line_no, format!("bad {what}: {:?}", fields[i])))
        };
        let workload_id = fields[0].trim();
        if workload_id.is_empty() {
            return Err(Error::parse(name, line_no, "empty workload id"));
        }
        let mix = WorkloadMix::new(
            f64_at(1, "v")?,
            f64_at(2, "r")?,
            f64_at(3, "q")?,
            f64_at(4, "w")?,
            u64_at(5, "s")?,
            f64_at(6, "delete_fraction")?,
        )
        .map_err(|e| Error::parse(name, line_no, e.to_string()))?;
        let source =
            ConfigSource::parse(fields[7]).map_err(|e| Error::parse(name, line_no, e.to_string()))?;
        let policy =
            Policy::parse(fields[8]).map_err(|e| Error::parse(name, line_no, e.to_string()))?;
        let size_ratio = fields[9]
            .parse::<u32>()
            .map_err(|_| Error::parse(name, line_no, format!("bad T: {:?}", fields[9])))?;
        if size_ratio < 2 {
            return Err(Error::parse(
                name,
                line_no,
                format!("size ratio {size_ratio} below the minimum of 2"),
            ));
        }
        rows.push(ReportRow {
            workload_id: workload_id.to_string(),
            mix,
            source,
            config: LsmConfig {
                policy,
                size_ratio,
                buf_bytes: u64_at(10, "buf_bytes")?,
                filter_bytes: u64_at(11, "filter_bytes")?,
                cache_bytes: u64_at(12, "cache_bytes")?,
            },
            predicted_cost: f64_at(13, "predicted_cost")?,
            analytic_cost: f64_at(14, "analytic_cost")?,
            evaluator_calls: u64_at(15, "evaluator_calls")?,
            trained_n: u64_at(16, "trained_n")?,
            trained_mem_bytes: u64_at(17, "trained_mem_bytes")?,
        });
    }
    Ok(rows)
}

pub const BENCH_CSV_HEADER: &str = "workload_id,source,policy,T,buf_bytes,filter_bytes,\
                                    cache_bytes,ops,mean_latency_ns,p90_latency_ns,io_per_op,\
                                    blocks_read,blocks_written,error";

pub const PHASE_CSV_HEADER: &str = "phase,v,r,q,w,ops,mean_latency_ns,p90_latency_ns,io_per_op,\
                                    blocks_read,blocks_written,target_policy,target_T,\
                                    target_buf_bytes,target_filter_bytes,target_cache_bytes,\
                                    active_policy,active_T,active_buf_bytes,active_filter_bytes,\
                                    active_cache_bytes,error";

/// Error text placed in a CSV cell; separators give way to `;`.
fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

// ---------------------------------------------------------------------------
// Run manifests.

#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    environment: Option<EnvSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuner: Option<TunerSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    inputs: Vec<ArtifactRef>,
    outputs: Vec<ArtifactRef>,
    unix_time_s: u64,
}

#[derive(Serialize)]
struct EnvSummary {
    n_entries: u64,
    entry_bytes: u64,
    block_bytes: u64,
    mem_bytes: u64,
    min_buffer_bytes: u64,
}

impl From<&Environment> for EnvSummary {
    fn from(e: &Environment) -> Self {
        EnvSummary {
            n_entries: e.n_entries,
            entry_bytes: e.entry_bytes,
            block_bytes: e.block_bytes,
            mem_bytes: e.mem_bytes,
            min_buffer_bytes: e.min_buffer_bytes,
        }
    }
}

#[derive(Serialize)]
struct TunerSummary {
    budget: u64,
    samples_per_stage: usize,
    model: String,
    label: String,
    rho: f64,
    rho_draws: u32,
}

impl From<&TunerConfig> for TunerSummary {
    fn from(t: &TunerConfig) -> Self {
        TunerSummary {
            budget: t.budget,
            samples_per_stage: t.samples_per_stage,
            model: format!("{:?}", t.model).to_lowercase(),
            label: t.label.as_str().to_string(),
            rho: t.rho,
            rho_draws: t.rho_draws,
        }
    }
}

#[derive(Serialize)]
struct ArtifactRef {
    path: String,
    sha256: String,
}

fn artifact_ref(path: &Path) -> Result<ArtifactRef> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let mut sha256 = String::with_capacity(64);
    for b in digest {
        sha256.push_str(&format!("{b:02x}"));
    }
    Ok(ArtifactRef {
        path: path.display().to_string(),
        sha256,
    })
}

struct ManifestBuilder {
    command: &'static str,
    environment: Option<EnvSummary>,
    tuner: Option<TunerSummary>,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    fn new(command: &'static str) -> Self {
        ManifestBuilder {
            command,
            environment: None,
            tuner: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn environment(mut self, env: &Environment) -> Self {
        self.environment = Some(env.into());
        self
    }

    fn tuner(mut self, tcfg: &TunerConfig) -> Self {
        self.tuner = Some(tcfg.into());
        self
    }

    fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Checksums all referenced files and writes the manifest JSON.
    fn write(self, manifest_path: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            args: std::env::args().skip(1).collect(),
            environment: self.environment,
            tuner: self.tuner,
            seed: self.seed,
            inputs: self
                .inputs
                .iter()
                .map(|p| artifact_ref(p))
                .collect::<Result<_>>()?,
            outputs: self
                .outputs
                .iter()
                .map(|p| artifact_ref(p))
                .collect::<Result<_>>()?,
            unix_time_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .unwrap_or_default()
                .as_secs(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::config(format!("manifest serialization failed: {e}")))?;
        write_text(manifest_path, &(json + "\n"))
    }
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Commands.

#[derive(Args, Debug)]
struct WorkloadsArgs {
    /// Directory receiving `train.workloads` and `test.workloads`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Restrict to one of the two files.
    #[arg(long, value_enum)]
    only: Option<SetArg>,
}

fn cmd_workloads(a: WorkloadsArgs) -> Result<()> {
    let sets: &[(SetArg, &str)] = &[(SetArg::Train, "train.workloads"), (SetArg::Test, "test.workloads")];
    let mut manifest = ManifestBuilder::new("workloads");
    for (set, file) in sets {
        if a.only.is_some_and(|o| o != *set) {
            continue;
        }
        let mixes = match set {
            SetArg::Train => training_workloads(),
            SetArg::Test => test_workloads(),
        };
        let path = a.out_dir.join(file);
        write_text(&path, &format_workload_file(&mixes))?;
        println!("wrote {} mixes to {}", mixes.len(), path.display());
        manifest = manifest.output(&path);
    }
    manifest.write(&a.out_dir.join("workloads.manifest.json"))
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Workload file; the built-in training mixes when omitted.
    #[arg(long)]
    workloads: Option<PathBuf>,
    /// Sample store destination.
    #[arg(long, default_value = "samples.csv")]
    out: PathBuf,
    /// Collect at a 1/k-scale environment (configurations extrapolate by k).
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Operations per evaluator call; profile default when omitted.
    #[arg(long)]
    ops: Option<usize>,
    /// What executes each sampled configuration.
    #[arg(long, value_enum, default_value_t = EvaluatorArg::Engine)]
    evaluator: EvaluatorArg,
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let env = a.env.resolve()?;
    let tcfg = a.search.tuner_config(a.stream.seed);
    let mixes = load_mixes(a.workloads.as_deref(), SetArg::Train)?;
    let (env_small, _) = sampling_scale(&env, a.k)?;
    let mut evaluator = a
        .evaluator
        .build(a.ops.unwrap_or(a.env.default_ops()), a.stream.zipf_theta());
    let (store, _) = decoupled_al(&mixes, &env_small, &tcfg, evaluator.as_mut())?;
    store.save(&a.out)?;
    println!(
        "collected {} samples over {} workloads into {}",
        store.len(),
        mixes.len(),
        a.out.display()
    );
    let mut manifest = ManifestBuilder::new("sample")
        .environment(&env_small)
        .tuner(&tcfg)
        .seed(a.stream.seed)
        .output(&a.out);
    if let Some(w) = &a.workloads {
        manifest = manifest.input(w);
    }
    manifest.write(&manifest_path_for(&a.out))
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Sample store to fit on.
    #[arg(long)]
    samples: PathBuf,
    /// Model file destination.
    #[arg(long, default_value = "model.camal")]
    out: PathBuf,
    /// Cost regressor family.
    #[arg(long, value_enum, default_value_t = ModelArg::Poly)]
    model: ModelArg,
    /// Objective the regressor is fit to.
    #[arg(long, value_enum, default_value_t = LabelArg::Latency)]
    label: LabelArg,
    /// Recorded as the model's sampling seed.
    #[arg(long, env = "CAMAL_SEED", default_value_t = 42)]
    seed: u64,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let store = SampleStore::load(&a.samples)?;
    let tcfg = TunerConfig {
        model: a.model.into(),
        label: a.label.into(),
        seed: a.seed,
        ..TunerConfig::default()
    };
    let model = train_model(&store, &tcfg)?;
    save_model_file(&a.out, &model)?;
    println!(
        "fit {:?} model for {} on {} samples -> {}",
        model.kind(),
        model.meta.label.as_str(),
        model.meta.n_samples,
        a.out.display()
    );
    ManifestBuilder::new("train")
        .tuner(&tcfg)
        .seed(a.seed)
        .input(&a.samples)
        .output(&a.out)
        .write(&manifest_path_for(&a.out))
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Workload file; the built-in training mixes when omitted.
    #[arg(long)]
    workloads: Option<PathBuf>,
    /// Configuration report destination.
    #[arg(long, default_value = "tune_report.csv")]
    out: PathBuf,
    /// Sample at a 1/k-scale environment and extrapolate the picks by k.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Operations per evaluator call; profile default when omitted.
    #[arg(long)]
    ops: Option<usize>,
    /// What executes each sampled configuration.
    #[arg(long, value_enum, default_value_t = EvaluatorArg::Engine)]
    evaluator: EvaluatorArg,
}

fn cmd_tune(a: TuneArgs) -> Result<()> {
    let env = a.env.resolve()?;
    let tcfg = a.search.tuner_config(a.stream.seed);
    let mixes = load_mixes(a.workloads.as_deref(), SetArg::Train)?;
    let (env_small, k) = sampling_scale(&env, a.k)?;
    let mut evaluator = a
        .evaluator
        .build(a.ops.unwrap_or(a.env.default_ops()), a.stream.zipf_theta());
    let (store, picks) = decoupled_al(&mixes, &env_small, &tcfg, evaluator.as_mut())?;
    // Robust mode retunes each pick against the final pooled model over the
    // uncertainty region; without samples there is no model to consult.
    let robust: Option<TrainedModel> = if tcfg.rho > 0.0 {
        match train_model(&store, &tcfg) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("robust tuning skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    let baseline = baseline_config(&env)?;
    let baseline_cost = |mix: &WorkloadMix| -> Result<f64> { Ok(cost(&env, &baseline, mix)?.combined) };
    let mut rows = Vec::with_capacity(picks.len() * 2);
    for pick in picks {
        let (small_cfg, predicted) = match &robust {
            Some(m) => {
                let cfg =
                    robust_tune(&pick.mix, tcfg.rho, tcfg.rho_draws, m, &env_small, tcfg.seed)?;
                let x = crate::learner::FeatureVector::from_parts(&env_small, &pick.mix, &cfg)?;
                (cfg, m.predict(&x)?)
            }
            None => (pick.config, pick.predicted),
        };
        let config = lift_config(&small_cfg, k, &env)?;
        rows.push(ReportRow {
            workload_id: pick.workload_id.clone(),
            mix: pick.mix,
            source: ConfigSource::Tuned,
            config,
            predicted_cost: predicted,
            analytic_cost: cost(&env, &config, &pick.mix)?.combined,
            evaluator_calls: pick.evaluator_calls,
            trained_n: env_small.n_entries,
            trained_mem_bytes: env_small.mem_bytes,
        });
        let b = baseline_cost(&pick.mix)?;
        rows.push(ReportRow {
            workload_id: pick.workload_id,
            mix: pick.mix,
            source: ConfigSource::Baseline,
            config: baseline,
            predicted_cost: b,
            analytic_cost: b,
            evaluator_calls: 0,
            trained_n: env.n_entries,
            trained_mem_bytes: env.mem_bytes,
        });
    }
    write_text(&a.out, &format_config_report(&rows))?;
    print_report(&rows, &env, &env_small, k);
    let mut manifest = ManifestBuilder::new("tune")
        .environment(&env)
        .tuner(&tcfg)
        .seed(a.stream.seed)
        .output(&a.out);
    if let Some(w) = &a.workloads {
        manifest = manifest.input(w);
    }
    manifest.write(&manifest_path_for(&a.out))
}

fn print_report(rows: &[ReportRow], env: &Environment, env_small: &Environment, k: f64) {
    if k != 1.0 {
        println!(
            "sampled at N={}, M={} B (1/{k:.0} scale); configurations rebalanced to N={}, M={} B",
            env_small.n_entries, env_small.mem_bytes, env.n_entries, env.mem_bytes
        );
    }
    println!(
        "{:<9} {:<20} {:<9} {:<9} {:>4} {:>12} {:>12} {:>12} {:>13} {:>13}",
        "workload", "mix v/r/q/w", "source", "policy", "T", "M_b", "M_f", "M_c", "predicted", "analytic"
    );
    for r in rows {
        println!(
            "{:<9} {:<20} {:<9} {:<9} {:>4} {:>12} {:>12} {:>12} {:>13.4e} {:>13.4e}",
            r.workload_id,
            format!(
                "{:.2}/{:.2}/{:.2}/{:.2}",
                r.mix.v, r.mix.r, r.mix.q, r.mix.w
            ),
            r.source.as_str(),
            r.config.policy,
            r.config.size_ratio,
            r.config.buf_bytes,
            r.config.filter_bytes,
            r.config.cache_bytes,
            r.predicted_cost,
            r.analytic_cost,
        );
    }
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Configuration report naming what to measure.
    #[arg(long)]
    report: PathBuf,
    /// Workload file pairing mixes with report rows by position.
    #[arg(long)]
    workloads: PathBuf,
    /// Results destination.
    #[arg(long, default_value = "bench_results.csv")]
    out: PathBuf,
    /// Measured operations per row; profile default when omitted.
    #[arg(long)]
    ops: Option<usize>,
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let env = a.env.resolve()?;
    let mixes = parse_workload_file(&a.workloads.display().to_string(), &read_text(&a.workloads)?)?;
    let rows = parse_config_report(&a.report.display().to_string(), &read_text(&a.report)?)?;
    let ops = a.ops.unwrap_or(a.env.default_ops());
    let mut evaluator = EngineEvaluator {
        ops,
        zipf_theta: a.stream.zipf_theta(),
    };
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    let mut measured = 0u64;
    for (i, mix) in mixes.iter().enumerate() {
        let id = format!("w{:02}", i + 1);
        let row_seed = splitmix64(a.stream.seed ^ (i as u64 + 1));
        for row in rows.iter().filter(|r| r.workload_id == id) {
            let prefix = format!(
                "{},{},{},{},{},{},{}",
                row.workload_id,
                row.source.as_str(),
                row.config.policy,
                row.config.size_ratio,
                row.config.buf_bytes,
                row.config.filter_bytes,
                row.config.cache_bytes,
            );
            match evaluator.evaluate(&env, &row.config, mix, row_seed) {
                Ok(m) => {
                    measured += 1;
                    out.push_str(&format!(
                        "{prefix},{},{},{},{},{},{},\n",
                        ops,
                        m.mean_latency_ns,
                        m.p90_latency_ns,
                        m.io_per_op,
                        m.blocks_read,
                        m.blocks_written,
                    ));
                }
                Err(e) => {
                    log::warn!("bench row {id}/{} failed: {e}", row.source.as_str());
                    out.push_str(&format!("{prefix},{ops},0,0,0,0,0,{}\n", sanitize(&e.to_string())));
                }
            }
        }
    }
    write_text(&a.out, &out)?;
    println!(
        "measured {} of {} report rows over {} workloads -> {}",
        measured,
        rows.len(),
        mixes.len(),
        a.out.display()
    );
    ManifestBuilder::new("bench")
        .environment(&env)
        .seed(a.stream.seed)
        .input(&a.report)
        .input(&a.workloads)
        .output(&a.out)
        .write(&manifest_path_for(&a.out))
}

#[derive(Args, Debug)]
struct DynamicArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Cost model steering the retunes.
    #[arg(long)]
    model: PathBuf,
    /// Workload file defining the phase sequence; the built-in test mixes
    /// when omitted.
    #[arg(long)]
    workloads: Option<PathBuf>,
    /// Directory receiving the phase and event CSVs.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Drift threshold on any single operation fraction.
    #[arg(long, default_value_t = 0.10)]
    tau: f64,
    /// Operations per observation period; profile default when omitted.
    #[arg(long)]
    period: Option<u64>,
    /// Operations per phase; five periods when omitted.
    #[arg(long)]
    ops: Option<usize>,
    /// The model was trained at a 1/k replica of this environment.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
}

fn cmd_dynamic(a: DynamicArgs) -> Result<()> {
    let env = a.env.resolve()?;
    let model = load_model_file(&a.model)?;
    let (env_trained, k) = sampling_scale(&env, a.k)?;
    let mixes = load_mixes(a.workloads.as_deref(), SetArg::Test)?;
    if mixes.is_empty() {
        return Err(Error::config("the phase sequence needs at least one mix"));
    }
    let detector = DetectorConfig {
        p: a.period.unwrap_or(a.env.default_period()),
        tau: a.tau,
    };
    detector.validate()?;
    let phase_ops = a.ops.unwrap_or(detector.p as usize * 5);
    let seed = a.stream.seed;
    let universe = KeyUniverse::new(env.n_entries);
    let streams: Vec<OperationStream> = mixes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let dist = a.stream.distribution(splitmix64(seed ^ (i as u64 + 1)));
            generate_stream(m, &dist, phase_ops, &universe)
        })
        .collect::<Result<_>>()?;
    let reference = mixes[0];
    let cfg0 = lift_config(
        &robust_tune(&reference, 0.0, 1, &model, &env_trained, seed)?,
        k,
        &env,
    )?;
    let report = run_dynamic(
        || {
            let mut engine = LsmTree::open_memory(env, cfg0)?;
            engine.preload(env.n_entries, splitmix64(seed ^ 0x5eed))?;
            Ok(engine)
        },
        &streams,
        &detector,
        &model,
        &env_trained,
        reference,
        seed,
    )?;
    let phases_path = a.out_dir.join("dynamic_phases.csv");
    let events_path = a.out_dir.join("dynamic_events.csv");
    write_text(&phases_path, &phases_to_csv(&report))?;
    write_text(&events_path, &events_to_csv(&report.events))?;
    let share = if report.total_blocks == 0 {
        0.0
    } else {
        report.transition_blocks as f64 / report.total_blocks as f64
    };
    println!(
        "{} phases, {} reconfigurations; {} total blocks ({} without retuning, \
         {} transition, {:.1}% of total) -> {}",
        report.phases.len(),
        report.events.len(),
        report.total_blocks,
        report.control_blocks,
        report.transition_blocks,
        share * 100.0,
        a.out_dir.display()
    );
    let mut manifest = ManifestBuilder::new("dynamic")
        .environment(&env)
        .seed(seed)
        .input(&a.model)
        .output(&phases_path)
        .output(&events_path);
    if let Some(w) = &a.workloads {
        manifest = manifest.input(w);
    }
    manifest.write(&a.out_dir.join("dynamic.manifest.json"))
}

fn phases_to_csv(report: &DynamicReport) -> String {
    let mut out = String::from(PHASE_CSV_HEADER);
    out.push('\n');
    for p in &report.phases {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.phase,
            p.observed.v,
            p.observed.r,
            p.observed.q,
            p.observed.w,
            p.report.ops,
            p.report.mean_latency_ns,
            p.report.p90_latency_ns,
            p.report.io_per_op,
            p.report.io.blocks_read,
            p.report.io.blocks_written,
            p.target_at_end.policy,
            p.target_at_end.size_ratio,
            p.target_at_end.buf_bytes,
            p.target_at_end.filter_bytes,
            p.target_at_end.cache_bytes,
            p.active_at_end.policy,
            p.active_at_end.size_ratio,
            p.active_at_end.buf_bytes,
            p.active_at_end.filter_bytes,
            p.active_at_end.cache_bytes,
            p.error.as_deref().map(sanitize).unwrap_or_default(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_env() -> Environment {
        Environment::new(100_000, 64, 4096, 256 << 10, 8 << 10).unwrap()
    }

    #[test]
    fn baseline_is_leveling_ten_with_ten_bits_per_key() {
        let env = test_env();
        let b = baseline_config(&env).unwrap();
        assert_eq!(b.policy, Policy::Leveling);
        assert_eq!(b.size_ratio, 10);
        assert_eq!(b.filter_bytes, 100_000 * 10 / 8);
        assert_eq!(b.buf_bytes, env.mem_bytes - b.filter_bytes);
        assert_eq!(b.cache_bytes, 0);
        assert_eq!(b.buf_bytes + b.filter_bytes + b.cache_bytes, env.mem_bytes);

        let cramped = Environment::new(100_000, 64, 4096, 128 << 10, 8 << 10).unwrap();
        assert!(baseline_config(&cramped).is_err());
    }

    #[test]
    fn profiles_resolve_with_overrides() {
        let base = EnvArgs {
            profile: Profile::Test,
            n: None,
            entry_bytes: None,
            mem_mb: None,
            min_buffer_mb: None,
        };
        let env = base.resolve().unwrap();
        assert_eq!(env, test_env());
        assert_eq!(base.default_ops(), 50_000);
        assert_eq!(base.default_period(), 1_000);

        let overridden = EnvArgs {
            profile: Profile::Test,
            n: Some(4096),
            entry_bytes: Some(32),
            mem_mb: Some(0.25),
            min_buffer_mb: None,
        };
        let env = overridden.resolve().unwrap();
        assert_eq!(env.n_entries, 4096);
        assert_eq!(env.entry_bytes, 32);
        assert_eq!(env.mem_bytes, 256 << 10);
        assert_eq!(env.min_buffer_bytes, 8 << 10);

        let defaults = EnvArgs {
            profile: Profile::Default,
            n: None,
            entry_bytes: None,
            mem_mb: None,
            min_buffer_mb: None,
        };
        let env = defaults.resolve().unwrap();
        assert_eq!(env.n_entries, 1_000_000);
        assert_eq!(env.entry_bytes, 1024);
        assert_eq!(env.mem_bytes, 16 << 20);
        assert_eq!(env.min_buffer_bytes, 1 << 20);
        assert_eq!(defaults.default_ops(), 500_000);
        assert_eq!(defaults.default_period(), 10_000);
    }

    #[test]
    fn mib_converts_and_rejects() {
        assert_eq!(mib(0.25).unwrap(), 256 << 10);
        assert_eq!(mib(16.0).unwrap(), 16 << 20);
        assert!(mib(0.0).is_err());
        assert!(mib(-1.0).is_err());
        assert!(mib(f64::NAN).is_err());
    }

    #[test]
    fn small_budgets_warn_into_the_analytic_fallback() {
        let search = SearchArgs {
            budget: 5,
            samples_per_stage: 3,
            model: ModelArg::Poly,
            label: LabelArg::Latency,
            rho: 0.0,
            rho_draws: 10,
        };
        let tcfg = search.tuner_config(7);
        assert_eq!(tcfg.budget, 0);
        assert_eq!(tcfg.seed, 7);
        assert!(tcfg.validate().is_ok());

        let ok = SearchArgs { budget: 6, ..search };
        assert_eq!(ok.tuner_config(7).budget, 6);
    }

    #[test]
    fn report_round_trips() {
        let env = test_env();
        let rows = vec![
            ReportRow {
                workload_id: "w01".to_string(),
                mix: WorkloadMix::new(0.25, 0.25, 0.25, 0.25, 4, 0.1).unwrap(),
                source: ConfigSource::Tuned,
                config: LsmConfig {
                    policy: Policy::Tiering,
                    size_ratio: 5,
                    buf_bytes: 100_000,
                    filter_bytes: 62_144,
                    cache_bytes: 100_000,
                },
                predicted_cost: 0.1 + 0.2,
                analytic_cost: 1.25e-3,
                evaluator_calls: 9,
                trained_n: 10_000,
                trained_mem_bytes: 26_214,
            },
            ReportRow {
                workload_id: "w02".to_string(),
                mix: WorkloadMix::from_fractions(0.97, 0.01, 0.01, 0.01).unwrap(),
                source: ConfigSource::Baseline,
                config: baseline_config(&env).unwrap(),
                predicted_cost: 42.0,
                analytic_cost: 42.0,
                evaluator_calls: 0,
                trained_n: env.n_entries,
                trained_mem_bytes: env.mem_bytes,
            },
        ];
        let text = format_config_report(&rows);
        assert!(text.starts_with(REPORT_CSV_HEADER));
        let parsed = parse_config_report("report", &text).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn report_parser_rejects_malformed_rows() {
        let row = "w01,0.25,0.25,0.25,0.25,4,0,tuned,leveling,5,100000,1000,0,1,1,9,1000,2000";
        let with = |line: &str| format!("{REPORT_CSV_HEADER}\n{line}\n");
        assert!(parse_config_report("r", &with(row)).is_ok());
        assert!(parse_config_report("r", "").is_err());
        assert!(parse_config_report("r", "bad header\n").is_err());
        assert!(parse_config_report("r", &with(&row.replace("tuned", "frozen"))).is_err());
        assert!(parse_config_report("r", &with(&row.replace("leveling", "stacking"))).is_err());
        assert!(parse_config_report("r", &with(&row[..row.len() - 5])).is_err());
        assert!(parse_config_report("r", &with(&row.replace(",5,", ",1,"))).is_err());
        let negative = row.replace("0.25,0.25,0.25,0.25", "-0.25,0.75,0.25,0.25");
        assert!(parse_config_report("r", &with(&negative)).is_err());
        let err = parse_config_report("r", &with("w01,x")).unwrap_err();
        assert!(err.to_string().contains("r:2"), "{err}");
    }

    #[test]
    fn sampling_scale_is_identity_at_one_and_shrinks_by_k() {
        let env = test_env();
        let (same, k) = sampling_scale(&env, 1.0).unwrap();
        assert_eq!(same, env);
        assert_eq!(k, 1.0);
        let (small, k) = sampling_scale(&env, 10.0).unwrap();
        assert_eq!(small.n_entries, 10_000);
        assert_eq!(small.entry_bytes, env.entry_bytes);
        assert_eq!(k, 10.0);
        assert!(sampling_scale(&env, 0.5).is_err());
        assert!(sampling_scale(&env, f64::NAN).is_err());
    }

    #[test]
    fn csv_cells_shed_separators() {
        assert_eq!(sanitize("a,b\nc\rd"), "a;b;c;d");
    }

    #[test]
    fn exit_codes_split_rejection_from_failure() {
        assert_eq!(exit_code(&Error::config("x")), 2);
        assert_eq!(exit_code(&Error::parse("f", 1, "x")), 2);
        assert_eq!(
            exit_code(&Error::io("f", std::io::Error::other("x"))),
            2
        );
        assert_eq!(exit_code(&Error::engine("x")), 3);
        assert_eq!(exit_code(&Error::learner("x")), 3);
        assert_eq!(
            exit_code(&Error::Decode {
                what: "run",
                msg: "x".to_string()
            }),
            3
        );
    }

    #[test]
    fn command_line_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
