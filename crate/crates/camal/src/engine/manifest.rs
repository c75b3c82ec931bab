//! The MANIFEST codec: a line-oriented text snapshot of the tree's durable
//! state — environment, active and target configs, the run table (level
//! order, oldest first within a level), and the next run id.
//!
//! Per-run entry counts, key bounds, and fences are rebuilt by scanning run
//! files on open, so rows carry only identity and the recorded filter width.
//! Floats render with 17 significant digits for exact round trips.

use crate::analytic::{Environment, LsmConfig, Policy};
use crate::error::{Error, Result};

const MAGIC: &str = "camal manifest 1";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRun {
    pub level: u32,
    pub seq: u64,
    pub bits_per_key: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestData {
    pub env: Environment,
    pub active: LsmConfig,
    pub target: LsmConfig,
    pub next_seq: u64,
    pub runs: Vec<ManifestRun>,
}

pub fn serialize_manifest(m: &ManifestData) -> String {
    let cfg_line = |tag: &str, c: &LsmConfig| {
        format!(
            "{tag} {} {} {} {} {}",
            c.policy, c.size_ratio, c.buf_bytes, c.filter_bytes, c.cache_bytes
        )
    };
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "env {} {} {} {} {}\n",
        m.env.n_entries,
        m.env.entry_bytes,
        m.env.block_bytes,
        m.env.mem_bytes,
        m.env.min_buffer_bytes
    ));
    out.push_str(&cfg_line("active", &m.active));
    out.push('\n');
    out.push_str(&cfg_line("target", &m.target));
    out.push('\n');
    out.push_str(&format!("next_seq {}\n", m.next_seq));
    for run in &m.runs {
        out.push_str(&format!(
            "run {} {} {:.16e}\n",
            run.level, run.seq, run.bits_per_key
        ));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<ManifestData> {
    let err = |line: usize, msg: String| Error::Parse {
        file: "MANIFEST".to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();

    let mut next_line = |want: &str| -> Result<(usize, Vec<String>)> {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| err(0, format!("missing {want} line")))?;
        let no = idx + 1;
        let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        Ok((no, fields))
    };

    let (no, magic) = next_line("header")?;
    if magic.join(" ") != MAGIC {
        return Err(err(no, "unrecognized manifest header".to_string()));
    }

    fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
        s.parse::<T>().map_err(|_| format!("bad number {s:?}"))
    }

    let (no, env_fields) = next_line("env")?;
    if env_fields.len() != 6 || env_fields[0] != "env" {
        return Err(err(no, "expected: env n E block M min_buffer".to_string()));
    }
    let env = Environment {
        n_entries: num(&env_fields[1]).map_err(|m| err(no, m))?,
        entry_bytes: num(&env_fields[2]).map_err(|m| err(no, m))?,
        block_bytes: num(&env_fields[3]).map_err(|m| err(no, m))?,
        mem_bytes: num(&env_fields[4]).map_err(|m| err(no, m))?,
        min_buffer_bytes: num(&env_fields[5]).map_err(|m| err(no, m))?,
    };

    let mut parse_cfg = |tag: &str| -> Result<LsmConfig> {
        let (no, f) = next_line(tag)?;
        if f.len() != 6 || f[0] != tag {
            return Err(err(
                no,
                format!("expected: {tag} policy T buf filter cache"),
            ));
        }
        Ok(LsmConfig {
            policy: Policy::parse(&f[1]).map_err(|e| err(no, e.to_string()))?,
            size_ratio: num(&f[2]).map_err(|m| err(no, m))?,
            buf_bytes: num(&f[3]).map_err(|m| err(no, m))?,
            filter_bytes: num(&f[4]).map_err(|m| err(no, m))?,
            cache_bytes: num(&f[5]).map_err(|m| err(no, m))?,
        })
    };
    let active = parse_cfg("active")?;
    let target = parse_cfg("target")?;

    let (no, seq_fields) = next_line("next_seq")?;
    if seq_fields.len() != 2 || seq_fields[0] != "next_seq" {
        return Err(err(no, "expected: next_seq value".to_string()));
    }
    let next_seq = num(&seq_fields[1]).map_err(|m| err(no, m))?;

    let mut runs = Vec::new();
    for (idx, line) in lines {
        let no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "run" {
            return Err(err(no, "expected: run level seq bits_per_key".to_string()));
        }
        let bits_per_key: f64 = num(f[3]).map_err(|m| err(no, m))?;
        if !bits_per_key.is_finite() || bits_per_key < 0.0 {
            return Err(err(no, format!("bits_per_key {bits_per_key} invalid")));
        }
        runs.push(ManifestRun {
            level: num(f[1]).map_err(|m| err(no, m))?,
            seq: num(f[2]).map_err(|m| err(no, m))?,
            bits_per_key,
        });
    }
    Ok(ManifestData {
        env,
        active,
        target,
        next_seq,
        runs,
    })
}
