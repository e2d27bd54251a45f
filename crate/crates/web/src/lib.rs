//! Browser bindings for the demo page in `www/`.

use fsdcap::fractional::fractional_row;
use fsdcap::graph::{bfs_distance_to_set, largest_connected_component, sym_normalize};
use fsdcap::masking::{apply_mask, generate_mask, MissingMode};
use fsdcap::metrics::{class_similarity, reconstruction_error};
use fsdcap::synthetic::{generate_sbm, sample_labeled, SbmConfig};
use fsdcap::{class_aware_propagation, fp_baseline, fsd_impute, label_propagation, FeatureMatrix, FsdConfig, PropagationConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: fsdcap::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Fractional reweighting of one row of positive weights.
#[wasm_bindgen]
pub fn fractional_weights(row: Vec<f64>, gamma: f64) -> Result<Vec<f64>, JsError> {
    fsdcap::fractional::check_gamma(gamma).map_err(js_err)?;
    if row.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
        return Err(JsError::new("weights must be positive"));
    }
    Ok(fractional_row(&row, gamma))
}

/// Nodes reached by each diffusion layer: entry `m` counts nodes within `m`
/// hops of the observed rows of a structural mask on the default block
/// model. The last entry counts unreachable nodes.
#[wasm_bindgen]
pub fn layer_coverage(seed: u64, mr: f64) -> Result<Vec<u32>, JsError> {
    let s = generate_sbm(&SbmConfig::default(), seed.wrapping_add(1)).map_err(js_err)?;
    let (g, _) = largest_connected_component(&s.graph).map_err(js_err)?;
    let mask = generate_mask(MissingMode::Structural, g.node_count(), 1, mr, seed).map_err(js_err)?;
    let observed = mask.observed_nodes(0);
    let dist = bfs_distance_to_set(&g, &observed).map_err(js_err)?;
    let layers = dist.max_finite().unwrap_or(0);
    let mut counts: Vec<u32> = (0..=layers).map(|m| dist.within(m).len() as u32).collect();
    counts.push(dist.unreachable_count() as u32);
    Ok(counts)
}

#[derive(Serialize)]
struct MethodResult {
    method: &'static str,
    rmse: f64,
    ratio: Option<f64>,
    /// Per-class mean of the imputed rows, `classes x dims`, row-major.
    class_means: Vec<f64>,
}

#[derive(Serialize)]
struct DemoResult {
    nodes: usize,
    edges: usize,
    observed_rows: usize,
    classes: usize,
    dims: usize,
    label_agreement: f64,
    methods: Vec<MethodResult>,
}

fn class_means(x: &FeatureMatrix, classes: &[usize], c: usize) -> Vec<f64> {
    let f = x.cols();
    let mut sums = vec![0.0; c * f];
    let mut counts = vec![0usize; c];
    for (i, &k) in classes.iter().enumerate() {
        counts[k] += 1;
        for (s, v) in sums[k * f..(k + 1) * f].iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for (k, &n) in counts.iter().enumerate() {
        for s in &mut sums[k * f..(k + 1) * f] {
            *s /= n.max(1) as f64;
        }
    }
    sums
}

/// Masks the default block model, imputes with FP, FSD and FSD-CAP, and
/// returns metrics plus class-mean heatmaps as JSON.
#[wasm_bindgen]
pub fn sbm_demo(seed: u64, mr: f64, gamma: f64, lambda: f64, temperature: f64) -> Result<String, JsError> {
    let sbm = SbmConfig::default();
    let s = generate_sbm(&sbm, seed.wrapping_add(1)).map_err(js_err)?;
    let (g, map) = largest_connected_component(&s.graph).map_err(js_err)?;
    let x = s.features.select_rows(&map);
    let classes: Vec<usize> = map.new_to_old.iter().map(|&o| s.classes[o]).collect();
    let adj = sym_normalize(&g, false).map_err(js_err)?;
    let mask = generate_mask(MissingMode::Structural, g.node_count(), x.cols(), mr, seed).map_err(js_err)?;
    let masked = apply_mask(&x, &mask).map_err(js_err)?;

    let cfg = FsdConfig { gamma, lambda, ..Default::default() };
    let fp = fp_baseline(&g, &adj, &masked, &mask, cfg.k, cfg.convergence_tol).map_err(js_err)?.features;
    let fsd = fsd_impute(&g, &adj, &masked, &mask, &cfg).map_err(js_err)?.features;
    let pairs: Vec<(usize, usize)> = classes.iter().copied().enumerate().collect();
    let train = sample_labeled(&pairs, 0.1, seed.wrapping_add(2)).map_err(js_err)?;
    let labels = label_propagation(&g, &adj, &train, sbm.classes, &PropagationConfig::default()).map_err(js_err)?;
    let cap = class_aware_propagation(&g, &fsd, &mask, &labels, temperature).map_err(js_err)?.features;

    let truth: Vec<Option<usize>> = classes.iter().map(|&c| Some(c)).collect();
    let mut methods = Vec::new();
    for (name, out) in [("fp", &fp), ("fsd", &fsd), ("fsd-cap", &cap)] {
        let rmse = reconstruction_error(out, &x, &mask).map_err(js_err)?.rmse;
        let ratio = class_similarity(out, &truth, 200_000, seed.wrapping_add(3)).ok().and_then(|r| r.ratio);
        methods.push(MethodResult {
            method: name,
            rmse,
            ratio,
            class_means: class_means(out, &classes, sbm.classes),
        });
    }
    let hits = classes.iter().enumerate().filter(|&(i, &c)| labels.label(i) == c).count();
    let result = DemoResult {
        nodes: g.node_count(),
        edges: g.edge_count(),
        observed_rows: (0..mask.rows()).filter(|&i| mask.row_has_observed(i)).count(),
        classes: sbm.classes,
        dims: x.cols(),
        label_agreement: hits as f64 / classes.len() as f64,
        methods,
    };
    serde_json::to_string(&result).map_err(|e| JsError::new(&e.to_string()))
}
