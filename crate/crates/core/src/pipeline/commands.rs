use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{seed_offset, Method, PipelineConfig, Source};
use super::report::*;
use crate::cap::class_aware_propagation;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::fsd::{fp_baseline, fsd_impute, Imputation};
use crate::graph::{bfs_distance_to_set, largest_connected_component, load_edge_list, sym_normalize, Graph, NodeMapping, NormalizedAdjacency};
use crate::labels::{label_propagation, load_labeled_pairs, PseudoLabelSet, ScoreKind};
use crate::masking::{apply_mask, generate_mask, Mask};
use crate::metrics::{class_similarity, dirichlet_energy, distance_report, per_node_rmse, reconstruction_error, SimilarityReport, DIRICHLET_FORMULA};
use crate::synthetic::{generate_sbm, sample_labeled};

/// Graph, features and labels after component extraction, in processed
/// node order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub mapping: NodeMapping,
    pub input_nodes: usize,
    pub input_components: usize,
    /// Evaluation labels, `(node, class)` in processed indexing.
    pub labels: Vec<(usize, usize)>,
    pub classes: Option<usize>,
    source: Source,
}

impl Dataset {
    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            source: match self.source {
                Source::Files => "files".into(),
                Source::Synthetic => "synthetic".into(),
            },
            input_nodes: self.input_nodes,
            nodes: self.graph.node_count(),
            edges: self.graph.edge_count(),
            features: self.features.cols(),
            input_components: self.input_components,
            dropped_nodes: self.input_nodes - self.graph.node_count(),
            classes: self.classes,
            labeled_nodes: self.labels.len(),
        }
    }

    pub fn label_vector(&self) -> Option<Vec<Option<usize>>> {
        if self.labels.is_empty() {
            return None;
        }
        let mut v = vec![None; self.graph.node_count()];
        for &(i, c) in &self.labels {
            v[i] = Some(c);
        }
        Some(v)
    }

    fn remap_pairs(&self, pairs: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(pairs.len());
        for &(v, c) in pairs {
            if v >= self.input_nodes {
                return Err(Error::Validation(format!("labeled node {v} out of range for {} nodes", self.input_nodes)));
            }
            if let Some(new) = self.mapping.old_to_new[v] {
                out.push((new, c));
            }
        }
        out.sort_unstable();
        out.dedup_by_key(|p| p.0);
        Ok(out)
    }
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Param(format!("{key} is required when source = files")))
}

pub fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    let (graph, features, labels) = match cfg.source {
        Source::Synthetic => {
            let s = generate_sbm(&cfg.sbm, cfg.seed_for(seed_offset::SBM))?;
            let labels: Vec<(usize, usize)> = s.classes.iter().copied().enumerate().collect();
            (s.graph, s.features, labels)
        }
        Source::Files => {
            let features = FeatureMatrix::read(required(&cfg.features_path, "features")?)?;
            let graph = load_edge_list(required(&cfg.graph_path, "graph")?, Some(features.rows()))?;
            if graph.node_count() != features.rows() {
                return Err(Error::shape(
                    format!("{} feature rows", graph.node_count()),
                    features.rows(),
                ));
            }
            let labels = match &cfg.labels_path {
                Some(p) => load_labeled_pairs(p)?,
                None => Vec::new(),
            };
            (graph, features, labels)
        }
    };
    let input_nodes = graph.node_count();
    let (_, input_components) = graph.connected_components();
    let (graph, mapping) = if cfg.largest_component {
        largest_connected_component(&graph)?
    } else {
        (graph, NodeMapping::identity(input_nodes))
    };
    let features = if mapping.is_identity() { features } else { features.select_rows(&mapping) };
    let mut ds = Dataset {
        graph,
        features,
        mapping,
        input_nodes,
        input_components,
        labels: Vec::new(),
        classes: None,
        source: cfg.source,
    };
    ds.labels = ds.remap_pairs(&labels)?;
    ds.classes = labels.iter().map(|&(_, c)| c + 1).max();
    Ok(ds)
}

fn stage<T>(name: &'static str, timings: &mut Timings, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(name))?;
    timings.stages.push((name.to_string(), start.elapsed().as_secs_f64() * 1e3));
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<std::fs::File>) -> std::io::Result<()>,
{
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn write_edge_list(path: &Path, g: &Graph) -> Result<()> {
    write_with(path, |out| {
        writeln!(out, "# nodes {}", g.node_count())?;
        for (i, j) in g.edges() {
            writeln!(out, "{i} {j}")?;
        }
        Ok(())
    })
}

fn write_pairs(path: &Path, pairs: &[(usize, usize)]) -> Result<()> {
    write_with(path, |out| {
        for (v, c) in pairs {
            writeln!(out, "{v},{c}")?;
        }
        Ok(())
    })
}

/// Mask for the processed dataset: loaded from `mask_path` or generated.
fn obtain_mask(cfg: &PipelineConfig, n: usize, f: usize) -> Result<(Mask, MaskSummary)> {
    match &cfg.mask_path {
        Some(p) => {
            let mask = Mask::load(p)?;
            if (mask.rows(), mask.cols()) != (n, f) {
                return Err(Error::shape(format!("{n}x{f} mask"), format!("{}x{}", mask.rows(), mask.cols())));
            }
            let summary = MaskSummary::new(&mask, None, None, None);
            Ok((mask, summary))
        }
        None => {
            let seed = cfg.seed_for(seed_offset::MASK);
            let mask = generate_mask(cfg.mask_mode, n, f, cfg.mr, seed)?;
            let summary = MaskSummary::new(&mask, Some(cfg.mask_mode), Some(cfg.mr), Some(seed));
            Ok((mask, summary))
        }
    }
}

/// Writes `mask.fmsk` and `mask_summary.json`. With `shape` the mask is
/// generated for that size; otherwise for the processed dataset.
pub fn cmd_mask(cfg: &PipelineConfig, shape: Option<(usize, usize)>) -> Result<MaskSummary> {
    cfg.validate()?;
    let (n, f) = match shape {
        Some(s) => s,
        None => {
            let ds = load_dataset(cfg).map_err(|e| e.in_stage("load"))?;
            ds.features.shape()
        }
    };
    let seed = cfg.seed_for(seed_offset::MASK);
    let mask = generate_mask(cfg.mask_mode, n, f, cfg.mr, seed).map_err(|e| e.in_stage("mask"))?;
    let summary = MaskSummary::new(&mask, Some(cfg.mask_mode), Some(cfg.mr), Some(seed));
    create_dir(&cfg.output_dir)?;
    mask.save(&cfg.output_dir.join("mask.fmsk"))?;
    write_json(&cfg.output_dir.join("mask_summary.json"), &summary)?;
    Ok(summary)
}

/// Training labels for label propagation, in processed indexing.
fn training_labels(cfg: &PipelineConfig, ds: &Dataset) -> Result<Vec<(usize, usize)>> {
    if let Some(p) = &cfg.train_labels_path {
        return ds.remap_pairs(&load_labeled_pairs(p)?);
    }
    if ds.labels.is_empty() {
        return Ok(Vec::new());
    }
    sample_labeled(&ds.labels, cfg.label_fraction, cfg.seed_for(seed_offset::LABELS))
}

fn pseudo_labels(cfg: &PipelineConfig, ds: &Dataset, adj: &NormalizedAdjacency) -> Result<(PseudoLabelSet, LabelSummary)> {
    let train = training_labels(cfg, ds)?;
    let (set, source) = if let Some(p) = &cfg.scores_path {
        let scores = FeatureMatrix::read(p)?;
        if scores.rows() != ds.input_nodes {
            return Err(Error::shape(format!("{} score rows", ds.input_nodes), scores.rows()));
        }
        let scores = if ds.mapping.is_identity() { scores } else { scores.select_rows(&ds.mapping) };
        let set = PseudoLabelSet::from_scores(scores.as_slice().to_vec(), scores.cols(), &train, ScoreKind::Logits)?;
        (set, "scores")
    } else if !train.is_empty() {
        let classes = ds.classes.unwrap_or(0).max(train.iter().map(|&(_, c)| c + 1).max().unwrap_or(0));
        let set = label_propagation(&ds.graph, adj, &train, classes, &cfg.propagation_config())?;
        (set, "propagation")
    } else {
        return Err(Error::Param(
            "method fsd-cap needs a label source: set scores, labels or train_labels".into(),
        ));
    };
    let agreement = (!ds.labels.is_empty()).then(|| {
        let hits = ds.labels.iter().filter(|&&(i, c)| set.label(i) == c).count();
        hits as f64 / ds.labels.len() as f64
    });
    let summary = LabelSummary {
        source: source.into(),
        classes: set.classes(),
        seed_labels: train.len(),
        class_sizes: set.class_sizes(),
        agreement,
    };
    Ok((set, summary))
}

struct Imputed {
    features: FeatureMatrix,
    report: MethodReport,
    cap_dump: Option<(crate::cap::CapOutput, PseudoLabelSet)>,
}

#[allow(clippy::too_many_arguments)]
fn impute_method(
    cfg: &PipelineConfig,
    method: Method,
    ds: &Dataset,
    adj: &NormalizedAdjacency,
    masked: &FeatureMatrix,
    mask: &Mask,
    fsd_cache: &mut Option<Imputation>,
    timings: &mut Timings,
) -> Result<Imputed> {
    let mut report = MethodReport {
        method,
        fsd: None,
        labels: None,
        cap: None,
        evaluation: None,
        output: String::new(),
    };
    let g = &ds.graph;
    let features = match method {
        Method::Zero => masked.clone(),
        Method::Fp => {
            let out = stage("fp", timings, || fp_baseline(g, adj, masked, mask, cfg.k, cfg.convergence_tol))?;
            report.fsd = Some(out.diagnostics);
            out.features
        }
        Method::Fsd | Method::FsdCap => {
            let out = match fsd_cache {
                Some(out) => out.clone(),
                None => {
                    let out = stage("fsd", timings, || fsd_impute(g, adj, masked, mask, &cfg.fsd_config()))?;
                    *fsd_cache = Some(out.clone());
                    out
                }
            };
            report.fsd = Some(out.diagnostics);
            out.features
        }
    };
    if method != Method::FsdCap {
        return Ok(Imputed { features, report, cap_dump: None });
    }
    let (labels, summary) = stage("labels", timings, || pseudo_labels(cfg, ds, adj))?;
    report.labels = Some(summary);
    let cap = stage("cap", timings, || class_aware_propagation(g, &features, mask, &labels, cfg.temperature))?;
    report.cap = Some(cap.report.clone());
    Ok(Imputed {
        features: cap.features.clone(),
        report,
        cap_dump: Some((cap, labels)),
    })
}

/// Similarity is undefined when fewer than two classes keep a nonzero row,
/// as with zero-filled structural masks; that is reported, not fatal.
fn similarity_section(x: &FeatureMatrix, labels: &[Option<usize>], cap: usize, seed: u64) -> Result<(Option<SimilarityReport>, Option<String>)> {
    match class_similarity(x, labels, cap, seed) {
        Ok(r) => Ok((Some(r), None)),
        Err(Error::Validation(msg)) => Ok((None, Some(msg))),
        Err(e) => Err(e),
    }
}

/// Per-node RMSE of incomplete rows, bucketed by hop distance to the nearest
/// node with an observed entry.
fn distance_section(g: &Graph, xhat: &FeatureMatrix, truth: &FeatureMatrix, mask: &Mask) -> Result<Option<crate::metrics::DistanceReport>> {
    let seeds: Vec<usize> = (0..mask.rows()).filter(|&i| mask.row_has_observed(i)).collect();
    if seeds.is_empty() {
        return Ok(None);
    }
    let dist = bfs_distance_to_set(g, &seeds)?;
    let rmse = per_node_rmse(xhat, truth, mask);
    let include: Vec<bool> = rmse.iter().map(Option::is_some).collect();
    let metric: Vec<f64> = rmse.iter().map(|r| r.unwrap_or(0.0)).collect();
    distance_report(&dist, &metric, &include).map(Some)
}

fn evaluate(
    ds: &Dataset,
    adj: &NormalizedAdjacency,
    xhat: &FeatureMatrix,
    masked: &FeatureMatrix,
    mask: &Mask,
    sample_cap: usize,
    seed: u64,
) -> Result<Evaluation> {
    let truth = &ds.features;
    let reconstruction = if mask.masked_count() > 0 {
        Some(reconstruction_error(xhat, truth, mask)?)
    } else {
        None
    };
    let (similarity, similarity_note) = match ds.label_vector() {
        Some(labels) => similarity_section(xhat, &labels, sample_cap, seed)?,
        None => (None, None),
    };
    let distance = distance_section(&ds.graph, xhat, truth, mask)?;
    let dirichlet = DirichletSummary {
        formula: DIRICHLET_FORMULA.into(),
        masked_input: dirichlet_energy(&ds.graph, adj, masked)?,
        output: dirichlet_energy(&ds.graph, adj, xhat)?,
        truth: Some(dirichlet_energy(&ds.graph, adj, truth)?),
    };
    Ok(Evaluation {
        reconstruction,
        similarity,
        similarity_note,
        distance,
        dirichlet: Some(dirichlet),
    })
}

fn fsd_warnings(report: &MethodReport, warnings: &mut Vec<String>) {
    if let Some(d) = &report.fsd {
        if !d.empty_channels.is_empty() {
            warnings.push(format!(
                "{}: {} channel(s) have no observed entry and were left at zero: {:?}",
                report.method,
                d.empty_channels.len(),
                d.empty_channels
            ));
        }
        let unreachable = d.total_unreachable();
        if unreachable > 0 {
            warnings.push(format!("{}: {unreachable} node-channel entries unreachable from observed nodes, left at zero", report.method));
        }
    }
    if let Some(c) = &report.cap {
        if !c.unweighted_fallback.is_empty() {
            warnings.push(format!("cap: classes {:?} had zero total confidence; anchors use the plain mean", c.unweighted_fallback));
        }
    }
}

/// Diffusion without retention stays inside the observed value range; with
/// `lambda > 0` the retained term is re-amplified on every layer and can
/// leave it by orders of magnitude.
fn range_warning(method: Method, masked: &FeatureMatrix, mask: &Mask, out: &FeatureMatrix, warnings: &mut Vec<String>) {
    let mut observed_max = 0f64;
    for i in 0..mask.rows() {
        for (l, v) in masked.row(i).iter().enumerate() {
            if mask.observed(i, l) {
                observed_max = observed_max.max(v.abs());
            }
        }
    }
    let out_max = out.as_slice().iter().fold(0f64, |m, v| m.max(v.abs()));
    if observed_max > 0.0 && out_max > 10.0 * observed_max {
        warnings.push(format!(
            "{method}: imputed magnitude reaches {out_max:.3e}, {:.1}x the largest observed value; lower lambda to curb retention growth",
            out_max / observed_max
        ));
    }
}

/// Result of `impute` or `run`: the report plus every imputed matrix.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Timings,
    pub outputs: Vec<(Method, FeatureMatrix)>,
}

fn execute(cfg: &PipelineConfig, command: &str, methods: &[Method], with_eval: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut timings = Timings { format_version: FORMAT_VERSION, stages: Vec::new() };
    let ds = stage("load", &mut timings, || load_dataset(cfg))?;
    let adj = stage("normalize", &mut timings, || sym_normalize(&ds.graph, cfg.add_self_loops))?;
    let (n, f) = ds.features.shape();
    let (mask, mask_summary) = stage("mask", &mut timings, || obtain_mask(cfg, n, f))?;
    let masked = apply_mask(&ds.features, &mask)?;

    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let mut artifacts = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut method_reports = Vec::new();
    let mut outputs = Vec::new();
    let mut fsd_cache = None;
    for &method in methods {
        let imputed = impute_method(cfg, method, &ds, &adj, &masked, &mask, &mut fsd_cache, &mut timings)?;
        let mut report = imputed.report;
        let name = if methods.len() == 1 { "imputed.fsdx".to_string() } else { format!("imputed_{method}.fsdx") };
        imputed.features.save_binary(&dir.join(&name)).map_err(|e| e.in_stage("write"))?;
        report.output = name.clone();
        artifacts.insert(format!("imputed_{method}"), name);
        if let Some((cap, labels)) = &imputed.cap_dump {
            let path = dir.join("cap_nodes.csv");
            write_with(&path, |out| cap.write_node_csv(labels, out))?;
            artifacts.insert("cap_nodes".into(), "cap_nodes.csv".into());
            write_with(&dir.join("cap_anchors.csv"), |out| cap.write_anchor_csv(out))?;
            artifacts.insert("cap_anchors".into(), "cap_anchors.csv".into());
        }
        if with_eval {
            let seed = cfg.seed_for(seed_offset::SAMPLING);
            let eval = stage("evaluate", &mut timings, || {
                evaluate(&ds, &adj, &imputed.features, &masked, &mask, cfg.similarity_sample_cap, seed)
            })?;
            if let Some(d) = &eval.distance {
                let file = format!("distance_{method}.csv");
                write_with(&dir.join(&file), |out| d.write_csv(out))?;
                artifacts.insert(format!("distance_{method}"), file);
            }
            report.evaluation = Some(eval);
        }
        fsd_warnings(&report, &mut warnings);
        range_warning(method, &masked, &mask, &imputed.features, &mut warnings);
        method_reports.push(report);
        outputs.push((method, imputed.features));
    }

    mask.save(&dir.join("mask.fmsk"))?;
    artifacts.insert("mask".into(), "mask.fmsk".into());
    ds.features.save_binary(&dir.join("truth.fsdx"))?;
    artifacts.insert("truth".into(), "truth.fsdx".into());
    write_edge_list(&dir.join("graph.txt"), &ds.graph)?;
    artifacts.insert("graph".into(), "graph.txt".into());
    if !ds.labels.is_empty() {
        write_pairs(&dir.join("labels.txt"), &ds.labels)?;
        artifacts.insert("labels".into(), "labels.txt".into());
    }
    if !ds.mapping.is_identity() {
        ds.mapping.write(&dir.join("node_map.txt"))?;
        artifacts.insert("node_map".into(), "node_map.txt".into());
    }
    artifacts.insert("report".into(), "report.json".into());
    artifacts.insert("timings".into(), "timings.json".into());

    let comparison = (methods.len() > 1).then(|| method_reports.iter().map(ComparisonRow::from_report).collect());
    let report = RunReport {
        format_version: FORMAT_VERSION,
        command: command.to_string(),
        config: cfg.clone(),
        dataset: ds.summary(),
        mask: mask_summary,
        methods: method_reports,
        comparison,
        artifacts,
        warnings,
    };
    write_json(&dir.join("report.json"), &report)?;
    write_json(&dir.join("timings.json"), &timings)?;
    Ok(RunOutcome { report, timings, outputs })
}

/// Loads, masks and imputes with the configured method. Writes the imputed
/// matrix, the mask, the processed graph and ground truth, and the report.
pub fn cmd_impute(cfg: &PipelineConfig) -> Result<RunOutcome> {
    execute(cfg, "impute", &[cfg.method], false)
}

/// [`cmd_impute`] followed by evaluation. With `compare` every method runs
/// on the same mask and the report gains a side-by-side table.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<RunOutcome> {
    let methods: Vec<Method> = if cfg.compare { Method::ALL.to_vec() } else { vec![cfg.method] };
    execute(cfg, "run", &methods, true)
}

#[derive(Debug, Clone)]
pub struct EvalInputs {
    pub imputed: PathBuf,
    pub truth: PathBuf,
    pub mask: PathBuf,
    pub graph: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub add_self_loops: bool,
    pub sample_cap: usize,
    pub seed: u64,
}

/// Metrics for an imputed matrix against ground truth, all in the same
/// node order. Graph-based sections need `graph`; similarity needs `labels`.
pub fn cmd_eval(inputs: &EvalInputs) -> Result<Evaluation> {
    let xhat = FeatureMatrix::read(&inputs.imputed)?;
    let truth = FeatureMatrix::read(&inputs.truth)?;
    let mask = Mask::load(&inputs.mask)?;
    if xhat.shape() != truth.shape() {
        return Err(Error::shape(format!("{:?}", truth.shape()), format!("{:?}", xhat.shape())));
    }
    mask.check_shape(&truth)?;
    let reconstruction = if mask.masked_count() > 0 {
        Some(reconstruction_error(&xhat, &truth, &mask)?)
    } else {
        None
    };
    let (similarity, similarity_note) = match &inputs.labels {
        Some(p) => {
            let mut labels = vec![None; truth.rows()];
            for (v, c) in load_labeled_pairs(p)? {
                *labels.get_mut(v).ok_or_else(|| Error::Validation(format!("labeled node {v} out of range")))? = Some(c);
            }
            similarity_section(&xhat, &labels, inputs.sample_cap, inputs.seed)?
        }
        None => (None, None),
    };
    let (distance, dirichlet) = match &inputs.graph {
        Some(p) => {
            let g = load_edge_list(p, Some(truth.rows()))?;
            if g.node_count() != truth.rows() {
                return Err(Error::shape(format!("{} graph nodes", truth.rows()), g.node_count()));
            }
            let distance = distance_section(&g, &xhat, &truth, &mask)?;
            let adj = sym_normalize(&g, inputs.add_self_loops)?;
            let masked = apply_mask(&truth, &mask)?;
            let d = DirichletSummary {
                formula: DIRICHLET_FORMULA.into(),
                masked_input: dirichlet_energy(&g, &adj, &masked)?,
                output: dirichlet_energy(&g, &adj, &xhat)?,
                truth: Some(dirichlet_energy(&g, &adj, &truth)?),
            };
            (distance, Some(d))
        }
        None => (None, None),
    };
    Ok(Evaluation {
        reconstruction,
        similarity,
        similarity_note,
        distance,
        dirichlet,
    })
}

impl PipelineConfig {
    /// The config echoed in a report, for replaying a run.
    pub fn from_report(path: &Path) -> Result<PipelineConfig> {
        Ok(read_report(path)?.config)
    }
}
