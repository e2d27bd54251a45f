//! Class-aware propagation.
//!
//! Each class `c` gets a virtual anchor node carrying the confidence-weighted
//! mean feature of all nodes pseudo-labeled `c`, where a node's confidence is
//! one minus the normalized label entropy of its closed neighborhood. Every
//! node of class `c` with a missing entry is then pulled toward the anchor in
//! one step:
//!
//! ```text
//! x̂_i = ŷ_i x̃_i + (1 - ŷ_i) x*_c,    ŷ_i = softmax(z_i / T)_c
//! ```
//!
//! which is row `i` of `W^(c) [X̃_-^(c); x*_c]` with `W^(c)` holding `ŷ_i` on
//! the diagonal, `1 - ŷ_i` in the anchor column and a unit self-loop on the
//! anchor row. Observed entries are restored afterwards.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::Graph;
use crate::labels::PseudoLabelSet;
use crate::masking::Mask;

/// Normalized neighborhood label entropy `S` and confidence `w = 1 - S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyWeights {
    pub entropy: Vec<f64>,
    pub weight: Vec<f64>,
}

/// `S_i = -(1 / ln|N̂_i|) Σ_c P_i(c) ln P_i(c)` with `N̂_i = N(i) ∪ {i}` and
/// `P_i(c)` the share of `N̂_i` labeled `c`. A node with no neighbors has
/// `S_i = 0`; `0 ln 0` counts as zero.
pub fn neighborhood_entropy(g: &Graph, labels: &[usize]) -> Result<EntropyWeights> {
    let n = g.node_count();
    if labels.len() != n {
        return Err(Error::shape(format!("{n} labels"), labels.len()));
    }
    let mut entropy = Vec::with_capacity(n);
    let mut hood = Vec::new();
    for i in 0..n {
        hood.clear();
        hood.push(labels[i]);
        hood.extend(g.neighbors(i).iter().map(|&j| labels[j as usize]));
        let size = hood.len();
        if size == 1 {
            entropy.push(0.0);
            continue;
        }
        hood.sort_unstable();
        let mut h = 0.0;
        let mut start = 0;
        while start < size {
            let mut end = start + 1;
            while end < size && hood[end] == hood[start] {
                end += 1;
            }
            let p = (end - start) as f64 / size as f64;
            h -= p * p.ln();
            start = end;
        }
        entropy.push((h / (size as f64).ln()).clamp(0.0, 1.0));
    }
    let weight = entropy.iter().map(|s| 1.0 - s).collect();
    Ok(EntropyWeights { entropy, weight })
}

pub fn temperature_softmax(z: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Param(format!("temperature must be positive and finite, got {t}")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|&v| ((v - max) / t).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    /// Anchor per class; `None` for classes nobody is labeled with.
    pub vectors: Vec<Option<Vec<f64>>>,
    /// Classes whose confidence weights summed to zero and fell back to the
    /// unweighted mean.
    pub unweighted_fallback: Vec<usize>,
    pub empty_classes: Vec<usize>,
}

/// Confidence-weighted mean features per class over every node carrying that
/// pseudo-label.
pub fn class_anchor(xt: &FeatureMatrix, labels: &PseudoLabelSet, w: &EntropyWeights) -> Result<Anchors> {
    let n = xt.rows();
    if labels.len() != n || w.weight.len() != n {
        return Err(Error::shape(
            format!("{n} labels and weights"),
            format!("{} labels, {} weights", labels.len(), w.weight.len()),
        ));
    }
    let classes = labels.classes();
    let f = xt.cols();
    let mut weighted = vec![vec![0.0; f]; classes];
    let mut plain = vec![vec![0.0; f]; classes];
    let mut weight_sum = vec![0.0; classes];
    let mut count = vec![0usize; classes];
    for i in 0..n {
        let c = labels.label(i);
        let wi = w.weight[i];
        for (l, &v) in xt.row(i).iter().enumerate() {
            weighted[c][l] += wi * v;
            plain[c][l] += v;
        }
        weight_sum[c] += wi;
        count[c] += 1;
    }
    let mut anchors = Anchors {
        vectors: Vec::with_capacity(classes),
        unweighted_fallback: Vec::new(),
        empty_classes: Vec::new(),
    };
    for c in 0..classes {
        if count[c] == 0 {
            anchors.empty_classes.push(c);
            anchors.vectors.push(None);
        } else if weight_sum[c] > 0.0 {
            anchors.vectors.push(Some(weighted[c].iter().map(|v| v / weight_sum[c]).collect()));
        } else {
            anchors.unweighted_fallback.push(c);
            anchors.vectors.push(Some(plain[c].iter().map(|v| v / count[c] as f64).collect()));
        }
    }
    Ok(anchors)
}

/// One class graph: the class's incomplete nodes plus its anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGraph {
    pub class_id: usize,
    /// Nodes labeled `class_id` with at least one masked entry, ascending.
    pub missing_nodes: Vec<usize>,
    pub anchor: Vec<f64>,
    /// `ŷ_i` per entry of `missing_nodes`.
    pub self_weights: Vec<f64>,
}

impl ClassGraph {
    /// Refined row for the `k`-th missing node.
    pub fn refine_row(&self, k: usize, row: &[f64]) -> Vec<f64> {
        let y = self.self_weights[k];
        row.iter()
            .zip(&self.anchor)
            .map(|(&x, &a)| {
                // rounding can land one ulp outside the segment's endpoints
                (y * x + (1.0 - y) * a).clamp(x.min(a), x.max(a))
            })
            .collect()
    }
}

pub fn build_class_graphs(xt: &FeatureMatrix, mask: &Mask, labels: &PseudoLabelSet, t: f64, w: &EntropyWeights) -> Result<(Vec<ClassGraph>, Anchors)> {
    mask.check_shape(xt)?;
    let anchors = class_anchor(xt, labels, w)?;
    let mut members = vec![Vec::new(); labels.classes()];
    for i in 0..xt.rows() {
        if !mask.row_fully_observed(i) {
            members[labels.label(i)].push(i);
        }
    }
    let mut graphs = Vec::new();
    for (c, nodes) in members.into_iter().enumerate() {
        let Some(anchor) = anchors.vectors[c].clone() else {
            continue;
        };
        if nodes.is_empty() {
            continue;
        }
        let self_weights = nodes
            .iter()
            .map(|&i| temperature_softmax(&labels.logits(i), t).map(|p| p[c]))
            .collect::<Result<Vec<_>>>()?;
        graphs.push(ClassGraph {
            class_id: c,
            missing_nodes: nodes,
            anchor,
            self_weights,
        });
    }
    Ok((graphs, anchors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class_id: usize,
    pub nodes: usize,
    pub refined_nodes: usize,
    pub mean_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapReport {
    pub temperature: f64,
    pub classes: Vec<ClassSummary>,
    pub unweighted_fallback: Vec<usize>,
    pub empty_classes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CapOutput {
    pub features: FeatureMatrix,
    pub entropy: EntropyWeights,
    pub class_graphs: Vec<ClassGraph>,
    pub anchors: Anchors,
    pub report: CapReport,
}

/// Refines `xt` class by class and restores every observed entry of `xt`
/// (which for FSD output equals the input) bit for bit.
pub fn cap_refine(xt: &FeatureMatrix, mask: &Mask, labels: &PseudoLabelSet, t: f64, w: &EntropyWeights) -> Result<CapOutput> {
    let (graphs, anchors) = build_class_graphs(xt, mask, labels, t, w)?;
    let mut out = xt.clone();
    for cg in &graphs {
        for (k, &i) in cg.missing_nodes.iter().enumerate() {
            let refined = cg.refine_row(k, xt.row(i));
            for (l, v) in refined.into_iter().enumerate() {
                if !mask.observed(i, l) {
                    out.set(i, l, v);
                }
            }
        }
    }
    let sizes = labels.class_sizes();
    let classes = (0..labels.classes())
        .map(|c| {
            let cg = graphs.iter().find(|g| g.class_id == c);
            ClassSummary {
                class_id: c,
                nodes: sizes[c],
                refined_nodes: cg.map_or(0, |g| g.missing_nodes.len()),
                mean_confidence: cg.map(|g| g.self_weights.iter().sum::<f64>() / g.self_weights.len() as f64),
            }
        })
        .collect();
    let report = CapReport {
        temperature: t,
        classes,
        unweighted_fallback: anchors.unweighted_fallback.clone(),
        empty_classes: anchors.empty_classes.clone(),
    };
    Ok(CapOutput {
        features: out,
        entropy: w.clone(),
        class_graphs: graphs,
        anchors,
        report,
    })
}

/// Entropy weighting, anchors and refinement in one call.
pub fn class_aware_propagation(g: &Graph, xt: &FeatureMatrix, mask: &Mask, labels: &PseudoLabelSet, t: f64) -> Result<CapOutput> {
    let w = neighborhood_entropy(g, labels.labels())?;
    cap_refine(xt, mask, labels, t, &w)
}

impl CapOutput {
    /// `node,label,entropy,confidence` per node; confidence is `ŷ` for
    /// refined nodes and empty otherwise.
    pub fn write_node_csv<W: Write>(&self, labels: &PseudoLabelSet, mut out: W) -> std::io::Result<()> {
        let mut yhat = vec![None; labels.len()];
        for cg in &self.class_graphs {
            for (&i, &y) in cg.missing_nodes.iter().zip(&cg.self_weights) {
                yhat[i] = Some(y);
            }
        }
        writeln!(out, "node,label,entropy,confidence")?;
        for (i, y) in yhat.iter().enumerate() {
            let y = y.map_or(String::new(), |y| y.to_string());
            writeln!(out, "{i},{},{},{y}", labels.label(i), self.entropy.entropy[i])?;
        }
        out.flush()
    }

    /// `class,f0,f1,...` per non-empty class.
    pub fn write_anchor_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (c, a) in self.anchors.vectors.iter().enumerate() {
            if let Some(a) = a {
                let row: Vec<String> = a.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{c},{}", row.join(","))?;
            }
        }
        out.flush()
    }
}
