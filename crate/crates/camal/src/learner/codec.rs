//! Model files: line-oriented text, one value per line, floats rendered
//! with 17 significant digits so they parse back bit-identical.
//!
//! ```text
//! camal model 1
//! kind poly|trees
//! label <label kind>
//! features <16-hex feature-order fingerprint>
//! samples <n>
//! seed <u64>
//! ```
//! then for `poly` twelve `coef <float>` lines, and for `trees` a header
//! `base`, `rate`, `trees <count>`, then per tree `tree <node count>`
//! followed by preorder `split <feature> <threshold>` / `leaf <value>`
//! lines.

use std::path::Path;

use crate::error::{Error, Result};

use super::{
    LabelKind, ModelMeta, ModelParams, PolyModel, RegressionTree, TrainedModel, TreeNode,
    TreesModel, BASIS_DIM, RAW_DIM,
};

const MAGIC: &str = "camal model 1";
const MAX_TREES: usize = 100_000;
const MAX_NODES: usize = 1_000_000;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn save_model(model: &TrainedModel) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "kind {}\n",
        match model.params {
            ModelParams::Poly(_) => "poly",
            ModelParams::Trees(_) => "trees",
        }
    ));
    out.push_str(&format!("label {}\n", model.meta.label.as_str()));
    out.push_str(&format!("features {:016x}\n", model.meta.feature_hash));
    out.push_str(&format!("samples {}\n", model.meta.n_samples));
    out.push_str(&format!("seed {}\n", model.meta.seed));
    match &model.params {
        ModelParams::Poly(p) => {
            for c in &p.beta {
                out.push_str(&format!("coef {}\n", fmt(*c)));
            }
        }
        ModelParams::Trees(t) => {
            out.push_str(&format!("base {}\n", fmt(t.base)));
            out.push_str(&format!("rate {}\n", fmt(t.learning_rate)));
            out.push_str(&format!("trees {}\n", t.trees.len()));
            for tree in &t.trees {
                out.push_str(&format!("tree {}\n", tree.nodes.len()));
                for node in &tree.nodes {
                    match node {
                        TreeNode::Split {
                            feature, threshold, ..
                        } => out.push_str(&format!("split {feature} {}\n", fmt(*threshold))),
                        TreeNode::Leaf(v) => out.push_str(&format!("leaf {}\n", fmt(*v))),
                    }
                }
            }
        }
    }
    out
}

struct Lines<'a> {
    file: &'a str,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.iter.next() {
            Some((i, line)) => Ok((i + 1, line)),
            None => Err(Error::parse(
                self.file,
                0,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    /// Next line split as `key value`, enforcing the key.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (no, line) = self.next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((no, v)),
            _ => Err(Error::parse(
                self.file,
                no,
                format!("expected `{key} ...`, got {line:?}"),
            )),
        }
    }
}

fn parse_f64(file: &str, no: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::parse(file, no, format!("bad float {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(file, no, format!("non-finite value {s:?}")));
    }
    Ok(v)
}

fn parse_usize(file: &str, no: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::parse(file, no, format!("bad count {s:?}")))
}

/// Rebuilds preorder child links; returns the index just past the subtree.
fn link_subtree(file: &str, nodes: &mut [TreeNode], at: usize) -> Result<usize> {
    if at >= nodes.len() {
        return Err(Error::parse(file, 0, "truncated tree node list"));
    }
    match nodes[at] {
        TreeNode::Leaf(_) => Ok(at + 1),
        TreeNode::Split { .. } => {
            let after_left = link_subtree(file, nodes, at + 1)?;
            if let TreeNode::Split { right, .. } = &mut nodes[at] {
                *right = after_left;
            }
            link_subtree(file, nodes, after_left)
        }
    }
}

pub fn parse_model(file: &str, text: &str) -> Result<TrainedModel> {
    let mut lines = Lines {
        file,
        iter: text.lines().enumerate(),
    };
    let (no, magic) = lines.next("header")?;
    if magic != MAGIC {
        return Err(Error::parse(file, no, format!("bad header {magic:?}")));
    }
    let (no, kind) = lines.field("kind")?;
    let kind = kind.to_string();
    if kind != "poly" && kind != "trees" {
        return Err(Error::parse(file, no, format!("unknown kind {kind:?}")));
    }
    let (no, label) = lines.field("label")?;
    let label =
        LabelKind::parse(label).map_err(|e| Error::parse(file, no, e.to_string()))?;
    let (no, hash) = lines.field("features")?;
    let feature_hash = u64::from_str_radix(hash, 16)
        .map_err(|_| Error::parse(file, no, format!("bad fingerprint {hash:?}")))?;
    let (no, samples) = lines.field("samples")?;
    let n_samples = parse_usize(file, no, samples)?;
    let (no, seed) = lines.field("seed")?;
    let seed: u64 = seed
        .parse()
        .map_err(|_| Error::parse(file, no, format!("bad seed {seed:?}")))?;
    let meta = ModelMeta {
        label,
        n_samples,
        seed,
        feature_hash,
    };

    let params = if kind == "poly" {
        let mut beta = [0.0f64; BASIS_DIM];
        for b in beta.iter_mut() {
            let (no, v) = lines.field("coef")?;
            *b = parse_f64(file, no, v)?;
        }
        ModelParams::Poly(PolyModel { beta })
    } else {
        let (no, base) = lines.field("base")?;
        let base = parse_f64(file, no, base)?;
        let (no, rate) = lines.field("rate")?;
        let learning_rate = parse_f64(file, no, rate)?;
        let (no, count) = lines.field("trees")?;
        let count = parse_usize(file, no, count)?;
        if count > MAX_TREES {
            return Err(Error::parse(file, no, format!("absurd tree count {count}")));
        }
        let mut trees = Vec::new();
        for _ in 0..count {
            let (no, n_nodes) = lines.field("tree")?;
            let n_nodes = parse_usize(file, no, n_nodes)?;
            if n_nodes == 0 || n_nodes > MAX_NODES {
                return Err(Error::parse(file, no, format!("bad node count {n_nodes}")));
            }
            let mut nodes = Vec::new();
            for _ in 0..n_nodes {
                let (no, line) = lines.next("tree node")?;
                let node = if let Some(rest) = line.strip_prefix("split ") {
                    let (feat, thr) = rest.split_once(' ').ok_or_else(|| {
                        Error::parse(file, no, format!("bad split line {line:?}"))
                    })?;
                    let feature = parse_usize(file, no, feat)?;
                    if feature >= RAW_DIM {
                        return Err(Error::parse(
                            file,
                            no,
                            format!("feature index {feature} out of range"),
                        ));
                    }
                    TreeNode::Split {
                        feature,
                        threshold: parse_f64(file, no, thr)?,
                        right: 0,
                    }
                } else if let Some(v) = line.strip_prefix("leaf ") {
                    TreeNode::Leaf(parse_f64(file, no, v)?)
                } else {
                    return Err(Error::parse(file, no, format!("bad node line {line:?}")));
                };
                nodes.push(node);
            }
            let end = link_subtree(file, &mut nodes, 0)?;
            if end != nodes.len() {
                return Err(Error::parse(
                    file,
                    0,
                    format!("tree has {} nodes but preorder consumes {end}", nodes.len()),
                ));
            }
            trees.push(RegressionTree { nodes });
        }
        ModelParams::Trees(TreesModel {
            base,
            learning_rate,
            trees,
            train_rmse: Vec::new(),
        })
    };
    if let Some((no, line)) = lines.iter.next() {
        if !line.trim().is_empty() {
            return Err(Error::parse(
                file,
                no + 1,
                format!("trailing content {line:?}"),
            ));
        }
    }
    Ok(TrainedModel { meta, params })
}

pub fn save_model_file(path: &Path, model: &TrainedModel) -> Result<()> {
    std::fs::write(path, save_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model_file(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&path.display().to_string(), &text)
}
