//! Stochastic block model with planted class means, for self-contained runs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub classes: usize,
    pub nodes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Class `c` has mean `mean_scale * e_c`.
    pub mean_scale: f64,
    pub noise_std: f64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            classes: 5,
            nodes: 400,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 16,
            mean_scale: 1.0,
            noise_std: 0.3,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.nodes < self.classes {
            return Err(Error::Param(format!(
                "need at least 2 classes and one node per class, got {} classes over {} nodes",
                self.classes, self.nodes
            )));
        }
        if self.feature_dim < self.classes {
            return Err(Error::Param(format!(
                "feature_dim {} cannot hold {} orthogonal class means",
                self.feature_dim, self.classes
            )));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Param(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) || !self.mean_scale.is_finite() {
            return Err(Error::Param("noise_std must be finite and nonnegative, mean_scale finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub classes: Vec<usize>,
}

/// Nodes are split into contiguous, near-equal class blocks.
pub fn generate_sbm(cfg: &SbmConfig, seed: u64) -> Result<SyntheticGraph> {
    cfg.validate()?;
    let n = cfg.nodes;
    let classes: Vec<usize> = (0..n).map(|i| i * cfg.classes / n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if classes[i] == classes[j] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::from_edges(n, edges)?;
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Param(e.to_string()))?;
    let mut values = Vec::with_capacity(n * cfg.feature_dim);
    for &c in &classes {
        for l in 0..cfg.feature_dim {
            let mean = if l == c { cfg.mean_scale } else { 0.0 };
            values.push(mean + noise.sample(&mut rng));
        }
    }
    let features = FeatureMatrix::from_vec(n, cfg.feature_dim, values)?;
    Ok(SyntheticGraph { graph, features, classes })
}

/// Keeps `round(fraction * len)` of the `(node, class)` pairs (at least one),
/// in their original order.
pub fn sample_labeled(pairs: &[(usize, usize)], fraction: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Param(format!("labeled fraction must lie in (0, 1], got {fraction}")));
    }
    let n = pairs.len();
    if n == 0 {
        return Err(Error::Validation("no labeled nodes to sample from".into()));
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pairs[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sbm_shape_and_determinism() {
        let a = generate_sbm(&SbmConfig::default(), 3).unwrap();
        let b = generate_sbm(&SbmConfig::default(), 3).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.features, b.features);
        assert_eq!(a.features.shape(), (400, 16));
        assert_eq!(a.classes.iter().filter(|&&c| c == 4).count(), 80);
        // expected degree is about 0.05 * 79 + 0.005 * 320 = 5.55
        let mean_degree = 2.0 * a.graph.edge_count() as f64 / 400.0;
        assert!((4.5..6.5).contains(&mean_degree), "{mean_degree}");
    }

    #[test]
    fn intra_edges_dominate() {
        let s = generate_sbm(&SbmConfig::default(), 11).unwrap();
        let intra = s.graph.edges().filter(|&(i, j)| s.classes[i] == s.classes[j]).count();
        assert!(intra * 2 > s.graph.edge_count());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SbmConfig { classes: 1, ..Default::default() },
            SbmConfig { feature_dim: 3, ..Default::default() },
            SbmConfig { p_in: 1.5, ..Default::default() },
            SbmConfig { noise_std: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(generate_sbm(&cfg, 0).is_err());
        }
    }

    #[test]
    fn labeled_sample() {
        let classes: Vec<usize> = (0..400).map(|i| i / 80).collect();
        let pairs: Vec<(usize, usize)> = classes.iter().copied().enumerate().collect();
        let l = sample_labeled(&pairs, 0.1, 5).unwrap();
        assert_eq!(l.len(), 40);
        assert!(l.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(l.iter().all(|&(i, c)| classes[i] == c));
        assert_eq!(l, sample_labeled(&pairs, 0.1, 5).unwrap());
        assert!(sample_labeled(&pairs, 0.0, 5).is_err());
    }
}
