//! Pseudo-labels for class-aware refinement: imported classifier scores or
//! built-in label propagation.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::fractional::build_fractional;
use crate::graph::{Graph, NormalizedAdjacency};

/// Added before taking logs of propagation mass.
pub const LOGIT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Classifier logits, used as-is.
    Logits,
    /// Nonnegative mass; logits are `ln(score + 1e-12)`.
    Mass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    labels: Vec<usize>,
    scores: Vec<f64>,
    classes: usize,
    labeled: Vec<usize>,
    kind: ScoreKind,
}

/// First index of the maximum; ties go to the lowest class.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

impl PseudoLabelSet {
    /// `scores` is row-major `n x classes`. Labeled nodes keep their given
    /// class; all others take the argmax of their scores.
    pub fn from_scores(scores: Vec<f64>, classes: usize, labeled: &[(usize, usize)], kind: ScoreKind) -> Result<Self> {
        if classes == 0 || !scores.len().is_multiple_of(classes) {
            return Err(Error::shape(format!("a multiple of {classes} scores"), scores.len()));
        }
        let n = scores.len() / classes;
        let mut labels: Vec<usize> = scores.chunks_exact(classes).map(argmax).collect();
        let mut labeled_set = Vec::with_capacity(labeled.len());
        for &(v, c) in labeled {
            if v >= n {
                return Err(Error::Validation(format!("labeled node {v} out of range for {n} nodes")));
            }
            if c >= classes {
                return Err(Error::Validation(format!(
                    "class {c} of node {v} out of range for {classes} classes"
                )));
            }
            labels[v] = c;
            labeled_set.push(v);
        }
        labeled_set.sort_unstable();
        labeled_set.dedup();
        Ok(Self {
            labels,
            scores,
            classes,
            labeled: labeled_set,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn scores(&self, v: usize) -> &[f64] {
        &self.scores[v * self.classes..(v + 1) * self.classes]
    }

    pub fn labeled_nodes(&self) -> &[usize] {
        &self.labeled
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    /// Logits fed to the temperature softmax.
    pub fn logits(&self, v: usize) -> Vec<f64> {
        match self.kind {
            ScoreKind::Logits => self.scores(v).to_vec(),
            ScoreKind::Mass => self.scores(v).iter().map(|s| (s + LOGIT_EPS).ln()).collect(),
        }
    }

    /// Nodes per class.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Reads `node,class` pairs, one per line.
pub fn load_labeled_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_labeled_pairs(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn parse_labeled_pairs<R: BufRead>(reader: R, source: &str) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Option<(usize, usize)> = match fields.as_slice() {
            [a, b] => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        let Some(pair) = parsed else {
            return Err(Error::Parse {
                path: source.into(),
                line: lineno + 1,
                message: format!("expected `node,class`, got {trimmed:?}"),
            });
        };
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Imports a score CSV (one row per node, one column per class) as logits.
pub fn load_pseudo_labels(path: &Path, n: usize, labeled: &[(usize, usize)]) -> Result<PseudoLabelSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let scores = FeatureMatrix::read_csv(std::io::BufReader::new(file), &path.display().to_string())?;
    if scores.rows() != n {
        return Err(Error::shape(format!("{n} score rows"), scores.rows()));
    }
    PseudoLabelSet::from_scores(scores.as_slice().to_vec(), scores.cols(), labeled, ScoreKind::Logits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub alpha: f64,
    pub iters: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { alpha: 0.9, iters: 50 }
    }
}

/// Iterates `s <- alpha * P s + (1 - alpha) * s0` with `P` the row-normalized
/// adjacency and `s0` one-hot on labeled nodes, clamping labeled rows back to
/// one-hot after every step. Updates are synchronous.
pub fn label_propagation(
    g: &Graph,
    adj: &NormalizedAdjacency,
    labeled: &[(usize, usize)],
    classes: usize,
    cfg: &PropagationConfig,
) -> Result<PseudoLabelSet> {
    if classes < 2 {
        return Err(Error::Param(format!("label propagation needs at least 2 classes, got {classes}")));
    }
    if labeled.is_empty() {
        return Err(Error::Param("label propagation needs at least one labeled node".into()));
    }
    if cfg.iters == 0 {
        return Err(Error::Param("label propagation needs at least one iteration".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Param(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    let n = g.node_count();
    let mut seed = vec![0.0; n * classes];
    let mut is_labeled = vec![false; n];
    for &(v, c) in labeled {
        if v >= n || c >= classes {
            return Err(Error::Validation(format!("labeled pair ({v}, {c}) out of range")));
        }
        seed[v * classes..(v + 1) * classes].fill(0.0);
        seed[v * classes + c] = 1.0;
        is_labeled[v] = true;
    }
    let op = build_fractional(&adj.to_view_adjacency(g), 1.0)?;
    let mut s = seed.clone();
    let mut next = vec![0.0; n * classes];
    for _ in 0..cfg.iters {
        for i in 0..n {
            let out = &mut next[i * classes..(i + 1) * classes];
            if is_labeled[i] {
                out.copy_from_slice(&seed[i * classes..(i + 1) * classes]);
                continue;
            }
            out.fill(0.0);
            let (cols, w) = op.row(i);
            for (&j, &w) in cols.iter().zip(w) {
                let j = j as usize;
                for (o, sj) in out.iter_mut().zip(&s[j * classes..(j + 1) * classes]) {
                    *o += w * sj;
                }
            }
            for (o, s0) in out.iter_mut().zip(&seed[i * classes..(i + 1) * classes]) {
                *o = cfg.alpha * *o + (1.0 - cfg.alpha) * s0;
            }
        }
        std::mem::swap(&mut s, &mut next);
    }
    PseudoLabelSet::from_scores(s, classes, labeled, ScoreKind::Mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::sym_normalize;
    use proptest::prelude::*;

    #[test]
    fn import_overrides_and_breaks_ties_low() {
        let scores = vec![2.0, 1.0, 0.0, 5.0, 3.0, 3.0];
        let set = PseudoLabelSet::from_scores(scores, 2, &[(1, 0)], ScoreKind::Logits).unwrap();
        assert_eq!(set.labels(), &[0, 0, 0]);
        assert_eq!(set.labeled_nodes(), &[1]);
        assert_eq!(set.scores(1), &[0.0, 5.0]);
    }

    #[test]
    fn fully_labeled_ignores_scores() {
        let scores = vec![9.0, 0.0, 0.0, 9.0];
        let set = PseudoLabelSet::from_scores(scores, 2, &[(0, 1), (1, 0)], ScoreKind::Logits).unwrap();
        assert_eq!(set.labels(), &[1, 0]);
    }

    #[test]
    fn unlabeled_is_pure_argmax() {
        let set = PseudoLabelSet::from_scores(vec![0.1, 0.7, 0.2], 3, &[], ScoreKind::Logits).unwrap();
        assert_eq!(set.labels(), &[1]);
    }

    #[test]
    fn import_rejects_bad_class() {
        assert!(PseudoLabelSet::from_scores(vec![0.0; 4], 2, &[(0, 2)], ScoreKind::Logits).is_err());
        assert!(PseudoLabelSet::from_scores(vec![0.0; 5], 2, &[], ScoreKind::Logits).is_err());
    }

    #[test]
    fn pairs_parse_commas_and_spaces() {
        let pairs = parse_labeled_pairs("0,1\n# c\n4 2\n".as_bytes(), "t").unwrap();
        assert_eq!(pairs, vec![(0, 1), (4, 2)]);
        assert!(parse_labeled_pairs("0,1,2\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn symmetric_path_ties_to_first_class() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let adj = sym_normalize(&g, false).unwrap();
        let set = label_propagation(&g, &adj, &[(0, 0), (2, 1)], 2, &PropagationConfig::default()).unwrap();
        assert_eq!(set.scores(1)[0], set.scores(1)[1]);
        assert_eq!(set.labels(), &[0, 0, 1]);
    }

    #[test]
    fn all_labeled_returns_inputs() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let adj = sym_normalize(&g, false).unwrap();
        let given = [(0, 2), (1, 0), (2, 1)];
        let set = label_propagation(&g, &adj, &given, 3, &PropagationConfig::default()).unwrap();
        assert_eq!(set.labels(), &[2, 0, 1]);
    }

    #[test]
    fn disconnected_cliques_take_their_seed_class() {
        // cliques {0..4} and {4..8}; mass of the foreign class stays exactly 0
        let mut edges = Vec::new();
        for base in [0, 4] {
            for i in base..base + 4 {
                for j in i + 1..base + 4 {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edges(8, edges).unwrap();
        let adj = sym_normalize(&g, false).unwrap();
        let set = label_propagation(&g, &adj, &[(1, 0), (6, 1)], 2, &PropagationConfig::default()).unwrap();
        assert_eq!(set.labels(), &[0, 0, 0, 0, 1, 1, 1, 1]);
        for v in 0..4 {
            assert_eq!(set.scores(v)[1], 0.0);
            assert!(set.scores(v)[0] > 0.0);
        }
        // closed form on a 4-clique: unlabeled nodes share one value u with
        // u = alpha * (1 + 2u) / 3, so u = alpha / (3 - 2 alpha)
        let u = 0.9 / (3.0 - 1.8);
        assert!((set.scores(0)[0] - u).abs() < 1e-9);
    }

    #[test]
    fn propagation_rejects_bad_inputs() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let adj = sym_normalize(&g, false).unwrap();
        let cfg = PropagationConfig::default();
        assert!(label_propagation(&g, &adj, &[(0, 0)], 1, &cfg).is_err());
        assert!(label_propagation(&g, &adj, &[], 2, &cfg).is_err());
        assert!(label_propagation(&g, &adj, &[(0, 0)], 2, &PropagationConfig { alpha: 1.0, iters: 5 }).is_err());
    }

    proptest! {
        #[test]
        fn argmax_is_scale_invariant(row in prop::collection::vec(0.0f64..10.0, 2..8), k in 0.01f64..100.0) {
            let scaled: Vec<f64> = row.iter().map(|v| v * k).collect();
            prop_assert_eq!(argmax(&row), argmax(&scaled));
        }
    }
}
