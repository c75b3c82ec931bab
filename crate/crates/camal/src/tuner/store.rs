//! Measured-sample persistence backing model training.
//!
//! Every row records one (workload, configuration, environment) measurement.
//! Rows are keyed by (workload id, configuration, environment, seed) and the
//! store refuses duplicates, so replaying a sampling plan cannot fork
//! history; a key hit means the stored measurement is the measurement.

use std::collections::HashMap;
use std::path::Path;

use crate::analytic::{Environment, LsmConfig, Policy};
use crate::error::{Error, Result};
use crate::learner::{FeatureVector, LabelKind};
use crate::workload::WorkloadMix;

/// Exact column set of the CSV form. `B` is entries per block.
pub const SAMPLE_CSV_HEADER: &str = "workload_id,v,r,q,w,s,policy,T,Mb_bytes,Mf_bytes,\
Mc_bytes,N,E,B,blocks_read,blocks_written,mean_latency_ns,p90_latency_ns,io_per_op,seed";

/// One measured (workload, configuration) point.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSample {
    pub workload_id: String,
    pub mix: WorkloadMix,
    pub policy: Policy,
    pub size_ratio: u32,
    pub buf_bytes: u64,
    pub filter_bytes: u64,
    pub cache_bytes: u64,
    pub n_entries: u64,
    pub entry_bytes: u64,
    pub block_entries: u64,
    pub blocks_read: u64,
    pub blocks_written: u64,
    /// Latency fields stay floating point so oracle evaluators can record
    /// model costs without quantization.
    pub mean_latency_ns: f64,
    pub p90_latency_ns: f64,
    pub io_per_op: f64,
    pub seed: u64,
}

/// Identity of a sample: who was measured, under what, and with which seed.
pub type SampleKey = (String, Policy, u32, u64, u64, u64, u64, u64, u64, u64);

/// The key a sample for `(workload_id, cfg, env, seed)` would carry.
pub fn sample_key(workload_id: &str, cfg: &LsmConfig, env: &Environment, seed: u64) -> SampleKey {
    (
        workload_id.to_owned(),
        cfg.policy,
        cfg.size_ratio,
        cfg.buf_bytes,
        cfg.filter_bytes,
        cfg.cache_bytes,
        env.n_entries,
        env.entry_bytes,
        env.block_entries(),
        seed,
    )
}

impl CostSample {
    pub fn key(&self) -> SampleKey {
        (
            self.workload_id.clone(),
            self.policy,
            self.size_ratio,
            self.buf_bytes,
            self.filter_bytes,
            self.cache_bytes,
            self.n_entries,
            self.entry_bytes,
            self.block_entries,
            self.seed,
        )
    }

    pub fn label(&self, kind: LabelKind) -> f64 {
        match kind {
            LabelKind::MeanLatencyNs => self.mean_latency_ns,
            LabelKind::P90LatencyNs => self.p90_latency_ns,
            LabelKind::IoPerOp => self.io_per_op,
        }
    }

    pub fn features(&self) -> Result<FeatureVector> {
        FeatureVector::from_stored(
            self.n_entries,
            self.entry_bytes,
            self.block_entries,
            &self.mix,
            self.policy,
            self.size_ratio,
            self.buf_bytes,
            self.filter_bytes,
            self.cache_bytes,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.workload_id.is_empty() || self.workload_id.contains([',', '\n', '\r']) {
            return Err(Error::config(format!(
                "workload id {:?} must be non-empty and contain no comma or newline",
                self.workload_id
            )));
        }
        self.mix.validate()?;
        if self.n_entries == 0 || self.entry_bytes == 0 || self.block_entries == 0 {
            return Err(Error::config("sample environment fields must be positive"));
        }
        if self.size_ratio < 2 {
            return Err(Error::config(format!(
                "size ratio {} below the minimum of 2",
                self.size_ratio
            )));
        }
        if self.buf_bytes == 0 {
            return Err(Error::config("write buffer must be positive"));
        }
        for (name, value) in [
            ("mean_latency_ns", self.mean_latency_ns),
            ("p90_latency_ns", self.p90_latency_ns),
            ("io_per_op", self.io_per_op),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.workload_id,
            self.mix.v,
            self.mix.r,
            self.mix.q,
            self.mix.w,
            self.mix.s,
            self.policy,
            self.size_ratio,
            self.buf_bytes,
            self.filter_bytes,
            self.cache_bytes,
            self.n_entries,
            self.entry_bytes,
            self.block_entries,
            self.blocks_read,
            self.blocks_written,
            self.mean_latency_ns,
            self.p90_latency_ns,
            self.io_per_op,
            self.seed,
        )
    }
}

/// Append-only sample collection with a uniqueness index.
#[derive(Debug, Clone, Default)]
pub struct SampleStore {
    rows: Vec<CostSample>,
    index: HashMap<SampleKey, usize>,
    /// Guards against one id naming two different mixes.
    mixes: HashMap<String, WorkloadMix>,
}

impl SampleStore {
    pub fn new() -> Self {
        SampleStore::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[CostSample] {
        &self.rows
    }

    pub fn get(&self, key: &SampleKey) -> Option<&CostSample> {
        self.index.get(key).map(|&i| &self.rows[i])
    }

    pub fn push(&mut self, sample: CostSample) -> Result<()> {
        sample.validate()?;
        let key = sample.key();
        if self.index.contains_key(&key) {
            return Err(Error::config(format!(
                "duplicate sample for workload {:?}, {} T={} Mb={} Mf={} Mc={} seed {}",
                sample.workload_id,
                sample.policy,
                sample.size_ratio,
                sample.buf_bytes,
                sample.filter_bytes,
                sample.cache_bytes,
                sample.seed,
            )));
        }
        if let Some(prev) = self.mixes.get(&sample.workload_id) {
            let same = prev.v == sample.mix.v
                && prev.r == sample.mix.r
                && prev.q == sample.mix.q
                && prev.w == sample.mix.w
                && prev.s == sample.mix.s;
            if !same {
                return Err(Error::config(format!(
                    "workload id {:?} reused for a different mix",
                    sample.workload_id
                )));
            }
        } else {
            self.mixes.insert(sample.workload_id.clone(), sample.mix);
        }
        self.index.insert(key, self.rows.len());
        self.rows.push(sample);
        Ok(())
    }

    /// Every row as a (features, label) training pair.
    pub fn training_samples(&self, label: LabelKind) -> Result<Vec<(FeatureVector, f64)>> {
        self.rows
            .iter()
            .map(|r| Ok((r.features()?, r.label(label))))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SAMPLE_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv_row());
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(file: &str, text: &str) -> Result<SampleStore> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == SAMPLE_CSV_HEADER => {}
            Some((_, header)) => {
                return Err(Error::parse(
                    file,
                    1,
                    format!("header mismatch: got {header:?}"),
                ))
            }
            None => return Err(Error::parse(file, 1, "empty file")),
        }
        let mut store = SampleStore::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let sample = parse_row(file, line_no, line)?;
            store
                .push(sample)
                .map_err(|e| Error::parse(file, line_no, e.to_string()))?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SampleStore> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SampleStore::parse_csv(&path.display().to_string(), &text)
    }
}

fn parse_row(file: &str, line_no: usize, line: &str) -> Result<CostSample> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 20 {
        return Err(Error::parse(
            file,
            line_no,
            format!("expected 20 fields, got {}", fields.len()),
        ));
    }
    let f64_at = |i: usize, name: &str| -> Result<f64> {
        fields[i]
            .parse::<f64>()
            .map_err(|_| Error::parse(file, line_no, format!("bad {name}: {:?}", fields[i])))
    };
    let u64_at = |i: usize, name: &str| -> Result<u64> {
        fields[i]
            .parse::<u64>()
            .map_err(|_| Error::parse(file, line_no, format!("bad {name}: {:?}", fields[i])))
    };
    let s = fields[5]
        .parse::<u64>()
        .map_err(|_| Error::parse(file, line_no, format!("bad s: {:?}", fields[5])))?;
    let mix = WorkloadMix::new(
        f64_at(1, "v")?,
        f64_at(2, "r")?,
        f64_at(3, "q")?,
        f64_at(4, "w")?,
        s,
        0.0,
    )
    .map_err(|e| Error::parse(file, line_no, e.to_string()))?;
    let policy =
        Policy::parse(fields[6]).map_err(|e| Error::parse(file, line_no, e.to_string()))?;
    let size_ratio = fields[7]
        .parse::<u32>()
        .map_err(|_| Error::parse(file, line_no, format!("bad T: {:?}", fields[7])))?;
    Ok(CostSample {
        workload_id: fields[0].to_owned(),
        mix,
        policy,
        size_ratio,
        buf_bytes: u64_at(8, "Mb_bytes")?,
        filter_bytes: u64_at(9, "Mf_bytes")?,
        cache_bytes: u64_at(10, "Mc_bytes")?,
        n_entries: u64_at(11, "N")?,
        entry_bytes: u64_at(12, "E")?,
        block_entries: u64_at(13, "B")?,
        blocks_read: u64_at(14, "blocks_read")?,
        blocks_written: u64_at(15, "blocks_written")?,
        mean_latency_ns: f64_at(16, "mean_latency_ns")?,
        p90_latency_ns: f64_at(17, "p90_latency_ns")?,
        io_per_op: f64_at(18, "io_per_op")?,
        seed: u64_at(19, "seed")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, t: u32, mf: u64, seed: u64) -> CostSample {
        CostSample {
            workload_id: id.to_owned(),
            mix: WorkloadMix::new(0.25, 0.25, 0.25, 0.25, 4, 0.0).unwrap(),
            policy: Policy::Leveling,
            size_ratio: t,
            buf_bytes: 1 << 16,
            filter_bytes: mf,
            cache_bytes: 0,
            n_entries: 100_000,
            entry_bytes: 32,
            block_entries: 4,
            blocks_read: 1234,
            blocks_written: 567,
            mean_latency_ns: 8123.25,
            p90_latency_ns: 20000.0,
            io_per_op: 1.0625,
            seed,
        }
    }

    #[test]
    fn round_trip_preserves_rows_exactly() {
        let mut store = SampleStore::new();
        store.push(sample("w01", 4, 40_000, 7)).unwrap();
        store.push(sample("w01", 6, 40_000, 7)).unwrap();
        store.push(sample("w02", 4, 0, 7)).unwrap();
        let mut odd = sample("w03", 9, 12_345, 99);
        odd.mean_latency_ns = 1.0 / 3.0;
        odd.io_per_op = f64::MIN_POSITIVE;
        store.push(odd).unwrap();

        let text = store.to_csv();
        let back = SampleStore::parse_csv("mem", &text).unwrap();
        assert_eq!(store.rows(), back.rows());
        assert_eq!(text, back.to_csv());
    }

    #[test]
    fn duplicates_and_id_reuse_are_rejected() {
        let mut store = SampleStore::new();
        store.push(sample("w01", 4, 40_000, 7)).unwrap();
        let err = store.push(sample("w01", 4, 40_000, 7)).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        // Same config under a different seed is a distinct measurement.
        store.push(sample("w01", 4, 40_000, 8)).unwrap();

        let mut other = sample("w01", 5, 40_000, 7);
        other.mix = WorkloadMix::new(0.5, 0.2, 0.2, 0.1, 4, 0.0).unwrap();
        let err = store.push(other).unwrap_err();
        assert!(err.to_string().contains("reused"));
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn malformed_csv_reports_line_numbers() {
        let err = SampleStore::parse_csv("f", "nope\n").unwrap_err();
        assert!(err.to_string().contains("f:1:"), "{err}");

        let good = {
            let mut store = SampleStore::new();
            store.push(sample("w01", 4, 40_000, 7)).unwrap();
            store.to_csv()
        };

        let short = format!("{SAMPLE_CSV_HEADER}\na,b,c\n");
        let err = SampleStore::parse_csv("f", &short).unwrap_err();
        assert!(err.to_string().contains("f:2:"), "{err}");
        assert!(err.to_string().contains("20 fields"), "{err}");

        let bad_policy = good.replace("leveling", "stacking");
        let err = SampleStore::parse_csv("f", &bad_policy).unwrap_err();
        assert!(err.to_string().contains("stacking"), "{err}");

        let dup = format!("{}{}", good.clone(), good.lines().nth(1).unwrap());
        let err = SampleStore::parse_csv("f", &dup).unwrap_err();
        assert!(err.to_string().contains("f:3:"), "{err}");
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn lookup_by_key_and_training_pairs() {
        let env = Environment::new(100_000, 32, 128, 1 << 20, 4096).unwrap();
        let cfg = LsmConfig {
            policy: Policy::Leveling,
            size_ratio: 4,
            buf_bytes: 1 << 16,
            filter_bytes: 40_000,
            cache_bytes: 0,
        };
        let mut store = SampleStore::new();
        store.push(sample("w01", 4, 40_000, 7)).unwrap();
        assert!(store.get(&sample_key("w01", &cfg, &env, 7)).is_some());
        assert!(store.get(&sample_key("w01", &cfg, &env, 8)).is_none());

        let pairs = store.training_samples(LabelKind::IoPerOp).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].1, 1.0625);
        let direct = store.rows()[0].features().unwrap();
        assert_eq!(pairs[0].0, direct);
    }
}
