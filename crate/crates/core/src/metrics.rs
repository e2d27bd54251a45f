//! Evaluation metrics: masked-entry reconstruction error, class cosine
//! similarity, distance-bucketed summaries and Dirichlet energy.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::{Distances, Graph, NormalizedAdjacency};
use crate::masking::Mask;

pub const DEFAULT_SAMPLE_CAP: usize = 200_000;

pub const SIMILARITY_METHOD: &str = "mean pairwise cosine; zero-norm rows excluded";

pub const DIRICHLET_FORMULA: &str = "0.5 * sum over undirected edges (i,j) of ||x_i/sqrt(d_i) - x_j/sqrt(d_j)||^2";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionError {
    pub rmse: f64,
    pub mae: f64,
    pub masked_entries: usize,
}

/// RMSE and MAE over the entries `mask` hides.
pub fn reconstruction_error(xhat: &FeatureMatrix, xtrue: &FeatureMatrix, mask: &Mask) -> Result<ReconstructionError> {
    if xhat.shape() != xtrue.shape() {
        return Err(Error::shape(format!("{:?}", xtrue.shape()), format!("{:?}", xhat.shape())));
    }
    mask.check_shape(xtrue)?;
    let (mut sq, mut abs, mut count) = (0.0, 0.0, 0usize);
    for i in 0..xtrue.rows() {
        for (l, (&a, &b)) in xhat.row(i).iter().zip(xtrue.row(i)).enumerate() {
            if !mask.observed(i, l) {
                let d = a - b;
                sq += d * d;
                abs += d.abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Validation("mask hides no entries; reconstruction error is undefined".into()));
    }
    Ok(ReconstructionError {
        rmse: (sq / count as f64).sqrt(),
        mae: abs / count as f64,
        masked_entries: count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSimilarity {
    pub class_id: usize,
    /// Nonzero rows of this class.
    pub nodes: usize,
    pub intra: Option<f64>,
    pub pairs: usize,
    pub sampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub method: String,
    pub classes: Vec<ClassSimilarity>,
    /// Classes with fewer than two nonzero rows.
    pub undefined_classes: Vec<usize>,
    pub average_intra: Option<f64>,
    pub inter: Option<f64>,
    pub inter_pairs: usize,
    pub inter_sampled: bool,
    /// `None` when `inter` is zero or either side is undefined.
    pub ratio: Option<f64>,
    pub ratio_infinite: bool,
    pub zero_norm_rows: usize,
    pub sample_cap: usize,
    pub seed: u64,
}

fn unit_rows(x: &FeatureMatrix) -> (Vec<Option<Vec<f64>>>, usize) {
    let mut zero = 0;
    let rows = (0..x.rows())
        .map(|i| {
            let r = x.row(i);
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                Some(r.iter().map(|v| v / norm).collect())
            } else {
                zero += 1;
                None
            }
        })
        .collect();
    (rows, zero)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

/// Mean pairwise cosine similarity within and across classes. Nodes whose
/// label is `None` are ignored. Statistics with more than `sample_cap` pairs
/// are estimated from `sample_cap` uniformly drawn pairs.
pub fn class_similarity(x: &FeatureMatrix, labels: &[Option<usize>], sample_cap: usize, seed: u64) -> Result<SimilarityReport> {
    if labels.len() != x.rows() {
        return Err(Error::shape(format!("{} labels", x.rows()), labels.len()));
    }
    if sample_cap == 0 {
        return Err(Error::Param("similarity sample cap must be at least 1".into()));
    }
    let (units, zero_norm_rows) = unit_rows(x);
    let classes = labels.iter().flatten().max().map_or(0, |&c| c + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, l) in labels.iter().enumerate() {
        if let (Some(c), Some(_)) = (l, &units[i]) {
            members[*c].push(i);
        }
    }
    let present: Vec<usize> = (0..classes).filter(|&c| !members[c].is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::Validation(format!(
            "class similarity needs at least two classes with nonzero rows, found {}",
            present.len()
        )));
    }
    let unit = |i: usize| units[i].as_deref().expect("member rows are nonzero");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut per_class = Vec::new();
    let mut undefined = Vec::new();
    for &c in &present {
        let m = &members[c];
        let total = m.len() * (m.len() - 1) / 2;
        let mut entry = ClassSimilarity {
            class_id: c,
            nodes: m.len(),
            intra: None,
            pairs: 0,
            sampled: false,
        };
        if total == 0 {
            undefined.push(c);
        } else if total <= sample_cap {
            let mut sum = 0.0;
            for a in 0..m.len() {
                for b in a + 1..m.len() {
                    sum += cosine(unit(m[a]), unit(m[b]));
                }
            }
            entry.intra = Some(sum / total as f64);
            entry.pairs = total;
        } else {
            let mut sum = 0.0;
            for _ in 0..sample_cap {
                let a = rng.random_range(0..m.len());
                let mut b = rng.random_range(0..m.len() - 1);
                if b >= a {
                    b += 1;
                }
                sum += cosine(unit(m[a]), unit(m[b]));
            }
            entry.intra = Some(sum / sample_cap as f64);
            entry.pairs = sample_cap;
            entry.sampled = true;
        }
        per_class.push(entry);
    }
    let defined: Vec<f64> = per_class.iter().filter_map(|c| c.intra).collect();
    let average_intra = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);

    let pool: Vec<(usize, usize)> = present.iter().flat_map(|&c| members[c].iter().map(move |&i| (i, c))).collect();
    let mut cross_total = 0usize;
    let mut seen = 0usize;
    for &c in &present {
        cross_total += seen * members[c].len();
        seen += members[c].len();
    }
    let (inter, inter_pairs, inter_sampled) = if cross_total <= sample_cap {
        let mut sum = 0.0;
        for (a, &(i, ci)) in pool.iter().enumerate() {
            for &(j, cj) in &pool[a + 1..] {
                if ci != cj {
                    sum += cosine(unit(i), unit(j));
                }
            }
        }
        (sum / cross_total as f64, cross_total, false)
    } else {
        let mut sum = 0.0;
        let mut drawn = 0;
        while drawn < sample_cap {
            let (i, ci) = pool[rng.random_range(0..pool.len())];
            let (j, cj) = pool[rng.random_range(0..pool.len())];
            if ci != cj {
                sum += cosine(unit(i), unit(j));
                drawn += 1;
            }
        }
        (sum / sample_cap as f64, sample_cap, true)
    };

    let (ratio, ratio_infinite) = match average_intra {
        Some(a) if inter != 0.0 => (Some(a / inter), false),
        Some(a) => (None, a > 0.0),
        None => (None, false),
    };
    Ok(SimilarityReport {
        method: SIMILARITY_METHOD.into(),
        classes: per_class,
        undefined_classes: undefined,
        average_intra,
        inter: Some(inter),
        inter_pairs,
        inter_sampled,
        ratio,
        ratio_infinite,
        zero_norm_rows,
        sample_cap,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBucket {
    pub distance: usize,
    pub count: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub buckets: Vec<DistanceBucket>,
    pub unreachable_count: usize,
    pub unreachable_mean: Option<f64>,
    pub total: usize,
}

/// Groups the included nodes by distance and averages `metric` per group.
pub fn distance_report(dist: &Distances, metric: &[f64], include: &[bool]) -> Result<DistanceReport> {
    if metric.len() != dist.len() || include.len() != dist.len() {
        return Err(Error::shape(
            format!("{} distances, metrics and filter flags", dist.len()),
            format!("{} metrics, {} flags", metric.len(), include.len()),
        ));
    }
    let mut sums: Vec<(usize, f64)> = Vec::new();
    let (mut un_count, mut un_sum) = (0usize, 0.0);
    for (i, d) in dist.iter().enumerate() {
        if !include[i] {
            continue;
        }
        match d {
            Some(d) => {
                if sums.len() <= d {
                    sums.resize(d + 1, (0, 0.0));
                }
                sums[d].0 += 1;
                sums[d].1 += metric[i];
            }
            None => {
                un_count += 1;
                un_sum += metric[i];
            }
        }
    }
    let buckets: Vec<DistanceBucket> = sums
        .into_iter()
        .enumerate()
        .filter(|(_, (c, _))| *c > 0)
        .map(|(d, (c, s))| DistanceBucket { distance: d, count: c, mean: s / c as f64 })
        .collect();
    let total = buckets.iter().map(|b| b.count).sum::<usize>() + un_count;
    Ok(DistanceReport {
        buckets,
        unreachable_count: un_count,
        unreachable_mean: (un_count > 0).then(|| un_sum / un_count as f64),
        total,
    })
}

impl DistanceReport {
    /// `distance,count,mean` rows; unreachable nodes use distance `inf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "distance,count,mean")?;
        for b in &self.buckets {
            writeln!(out, "{},{},{}", b.distance, b.count, b.mean)?;
        }
        if let Some(m) = self.unreachable_mean {
            writeln!(out, "inf,{},{m}", self.unreachable_count)?;
        }
        out.flush()
    }
}

/// Per-node RMSE over the node's masked entries; `None` for complete rows.
pub fn per_node_rmse(xhat: &FeatureMatrix, xtrue: &FeatureMatrix, mask: &Mask) -> Vec<Option<f64>> {
    (0..xtrue.rows())
        .map(|i| {
            let (mut sq, mut n) = (0.0, 0usize);
            for (l, (&a, &b)) in xhat.row(i).iter().zip(xtrue.row(i)).enumerate() {
                if !mask.observed(i, l) {
                    sq += (a - b) * (a - b);
                    n += 1;
                }
            }
            (n > 0).then(|| (sq / n as f64).sqrt())
        })
        .collect()
}

/// See [`DIRICHLET_FORMULA`]; `d` comes from `adj`, so self-loops count.
pub fn dirichlet_energy(g: &Graph, adj: &NormalizedAdjacency, x: &FeatureMatrix) -> Result<f64> {
    if x.rows() != g.node_count() {
        return Err(Error::shape(g.node_count(), x.rows()));
    }
    let inv: Vec<f64> = adj.degrees().iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut e = 0.0;
    for (i, j) in g.edges() {
        for (&a, &b) in x.row(i).iter().zip(x.row(j)) {
            let d = a * inv[i] - b * inv[j];
            e += d * d;
        }
    }
    Ok(0.5 * e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bfs_distance_to_set, sym_normalize};
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn reconstruction_examples() {
        let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let mask = Mask::from_bits(2, 2, vec![true, false, false, true]).unwrap();
        let e = reconstruction_error(&x, &x, &mask).unwrap();
        assert_eq!((e.rmse, e.mae), (0.0, 0.0));

        let one = Mask::from_bits(2, 2, vec![true, false, true, true]).unwrap();
        let xh = m(&[&[1.0, 4.0], &[3.0, 4.0]]);
        let e = reconstruction_error(&xh, &x, &one).unwrap();
        assert_eq!((e.rmse, e.mae), (2.0, 2.0));

        let xh = m(&[&[1.0, 4.0], &[3.0, 4.0]]);
        let two = Mask::from_bits(2, 2, vec![true, false, false, true]).unwrap();
        let e = reconstruction_error(&xh, &x, &two).unwrap();
        assert!((e.rmse - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(e.mae, 1.0);

        assert!(reconstruction_error(&x, &x, &Mask::all_observed(2, 2)).is_err());
    }

    #[test]
    fn orthogonal_classes() {
        let x = m(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 3.0], &[0.0, 3.0]]);
        let r = class_similarity(&x, &[Some(0), Some(0), Some(1), Some(1)], 100, 0).unwrap();
        assert_eq!(r.average_intra, Some(1.0));
        assert_eq!(r.inter, Some(0.0));
        assert_eq!(r.ratio, None);
        assert!(r.ratio_infinite);
    }

    #[test]
    fn identical_rows() {
        let r: &[f64] = &[1.0, 2.0];
        let x = m(&[r; 4]);
        let r = class_similarity(&x, &[Some(0), Some(0), Some(1), Some(1)], 100, 0).unwrap();
        assert!((r.ratio.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.inter.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_class_and_zero_rows_are_flagged() {
        let x = m(&[&[1.0, 0.0], &[1.0, 0.1], &[0.0, 1.0], &[0.0, 0.0]]);
        let r = class_similarity(&x, &[Some(0), Some(0), Some(1), Some(1)], 100, 0).unwrap();
        assert_eq!(r.undefined_classes, vec![1]);
        assert_eq!(r.zero_norm_rows, 1);
        assert_eq!(r.classes[1].intra, None);
        let one = class_similarity(&x, &[Some(0), Some(0), None, None], 100, 0);
        assert!(one.is_err());
    }

    #[test]
    fn sampled_estimate_is_close_and_seeded() {
        let rows: Vec<Vec<f64>> = (0..120).map(|i| vec![1.0 + (i % 7) as f64, (i % 5) as f64, (i % 3) as f64]).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let labels: Vec<Option<usize>> = (0..120).map(|i| Some(i % 3)).collect();
        let full = class_similarity(&x, &labels, usize::MAX, 0).unwrap();
        let a = class_similarity(&x, &labels, 2000, 9).unwrap();
        let b = class_similarity(&x, &labels, 2000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.inter_sampled && a.classes.iter().all(|c| !c.sampled));
        assert!((a.inter.unwrap() - full.inter.unwrap()).abs() < 0.02);
    }

    #[test]
    fn distance_examples() {
        let g = Graph::from_edges(3, [(0, 1), (0, 2)]).unwrap();
        let d = bfs_distance_to_set(&g, &[0]).unwrap();
        let r = distance_report(&d, &[1.0, 0.0, 1.0], &[true; 3]).unwrap();
        assert_eq!(r.buckets.len(), 2);
        assert_eq!(r.buckets[0].mean, 1.0);
        assert_eq!(r.buckets[1].mean, 0.5);
        assert_eq!(r.total, 3);

        let d = bfs_distance_to_set(&g, &[0, 1, 2]).unwrap();
        assert_eq!(distance_report(&d, &[0.0; 3], &[true; 3]).unwrap().buckets.len(), 1);
        assert_eq!(distance_report(&d, &[0.0; 3], &[false; 3]).unwrap(), DistanceReport::default());
    }

    #[test]
    fn unreachable_nodes_are_separate() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let d = bfs_distance_to_set(&g, &[0]).unwrap();
        let r = distance_report(&d, &[0.0, 1.0, 4.0], &[true; 3]).unwrap();
        assert_eq!(r.unreachable_count, 1);
        assert_eq!(r.unreachable_mean, Some(4.0));
        assert_eq!(r.total, 3);
    }

    #[test]
    fn dirichlet_examples() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let adj = sym_normalize(&g, false).unwrap();
        assert_eq!(dirichlet_energy(&g, &adj, &m(&[&[0.0], &[2.0]])).unwrap(), 2.0);

        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let adj = sym_normalize(&g, false).unwrap();
        let x = m(&[&[1.0], &[2f64.sqrt()], &[1.0]]);
        assert!(dirichlet_energy(&g, &adj, &x).unwrap() < 1e-24);
    }

    proptest! {
        #[test]
        fn similarity_ignores_row_scale(
            rows in prop::collection::vec(prop::collection::vec(0.1f64..2.0, 3), 6..20),
            scales in prop::collection::vec(0.01f64..100.0, 20),
        ) {
            let labels: Vec<Option<usize>> = (0..rows.len()).map(|i| Some(i % 2)).collect();
            let x = FeatureMatrix::from_rows(&rows).unwrap();
            let scaled: Vec<Vec<f64>> = rows.iter().zip(&scales).map(|(r, s)| r.iter().map(|v| v * s).collect()).collect();
            let y = FeatureMatrix::from_rows(&scaled).unwrap();
            let a = class_similarity(&x, &labels, 1000, 0).unwrap();
            let b = class_similarity(&y, &labels, 1000, 0).unwrap();
            prop_assert!((a.average_intra.unwrap() - b.average_intra.unwrap()).abs() < 1e-12);
            prop_assert!((a.inter.unwrap() - b.inter.unwrap()).abs() < 1e-12);
        }

        #[test]
        fn bucket_counts_conserve_filter(seeds in prop::collection::vec(any::<bool>(), 8), include in prop::collection::vec(any::<bool>(), 8)) {
            let g = Graph::from_edges(8, (0..7).map(|i| (i, i + 1))).unwrap();
            let s: Vec<usize> = (0..8).filter(|&i| seeds[i]).collect();
            prop_assume!(!s.is_empty());
            let d = bfs_distance_to_set(&g, &s).unwrap();
            let r = distance_report(&d, &[1.0; 8], &include).unwrap();
            prop_assert_eq!(r.total, include.iter().filter(|&&b| b).count());
        }
    }
}
