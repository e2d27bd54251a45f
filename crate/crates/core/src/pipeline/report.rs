//! JSON report types. Timings live in a separate file so that two runs with
//! the same config produce byte-identical reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Method, PipelineConfig};
use crate::cap::CapReport;
use crate::error::{Error, Result};
use crate::fsd::FsdDiagnostics;
use crate::masking::{Mask, MissingMode};
use crate::metrics::{DistanceReport, ReconstructionError, SimilarityReport};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub input_nodes: usize,
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub input_components: usize,
    pub dropped_nodes: usize,
    pub classes: Option<usize>,
    pub labeled_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    /// `None` when the mask was loaded from a file.
    pub mode: Option<MissingMode>,
    pub mr: Option<f64>,
    pub seed: Option<u64>,
    pub prng: String,
    pub rows: usize,
    pub cols: usize,
    pub observed_entries: usize,
    pub masked_entries: usize,
    pub rows_with_observed: usize,
    pub row_observed: Vec<usize>,
    pub col_observed: Vec<usize>,
}

impl MaskSummary {
    pub fn new(mask: &Mask, mode: Option<MissingMode>, mr: Option<f64>, seed: Option<u64>) -> Self {
        let row_observed = mask.row_counts();
        MaskSummary {
            mode,
            mr,
            seed,
            prng: crate::masking::PRNG_NAME.to_string(),
            rows: mask.rows(),
            cols: mask.cols(),
            observed_entries: mask.observed_count(),
            masked_entries: mask.masked_count(),
            rows_with_observed: row_observed.iter().filter(|&&c| c > 0).count(),
            row_observed,
            col_observed: mask.col_counts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    /// `scores` or `propagation`.
    pub source: String,
    pub classes: usize,
    pub seed_labels: usize,
    pub class_sizes: Vec<usize>,
    /// Share of evaluation labels the pseudo-labels agree with.
    pub agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletSummary {
    pub formula: String,
    pub masked_input: f64,
    pub output: f64,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reconstruction: Option<ReconstructionError>,
    pub similarity: Option<SimilarityReport>,
    /// Why `similarity` is missing despite labels being available.
    pub similarity_note: Option<String>,
    pub distance: Option<DistanceReport>,
    pub dirichlet: Option<DirichletSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub fsd: Option<FsdDiagnostics>,
    pub labels: Option<LabelSummary>,
    pub cap: Option<CapReport>,
    pub evaluation: Option<Evaluation>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub average_intra: Option<f64>,
    pub inter: Option<f64>,
    pub ratio: Option<f64>,
    pub dirichlet: Option<f64>,
}

impl ComparisonRow {
    pub fn from_report(m: &MethodReport) -> Self {
        let e = m.evaluation.as_ref();
        let sim = e.and_then(|e| e.similarity.as_ref());
        ComparisonRow {
            method: m.method,
            rmse: e.and_then(|e| e.reconstruction).map(|r| r.rmse),
            mae: e.and_then(|e| e.reconstruction).map(|r| r.mae),
            average_intra: sim.and_then(|s| s.average_intra),
            inter: sim.and_then(|s| s.inter),
            ratio: sim.and_then(|s| s.ratio),
            dirichlet: e.and_then(|e| e.dirichlet.as_ref()).map(|d| d.output),
        }
    }
}

/// Fixed-width text table of a comparison.
pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    let mut s = format!("{:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>14}\n", "method", "rmse", "mae", "intra", "inter", "ratio", "dirichlet");
    for r in rows {
        s.push_str(&format!(
            "{:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>14}\n",
            r.method.name(),
            cell(r.rmse),
            cell(r.mae),
            cell(r.average_intra),
            cell(r.inter),
            cell(r.ratio),
            cell(r.dirichlet)
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub command: String,
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub mask: MaskSummary,
    pub methods: Vec<MethodReport>,
    pub comparison: Option<Vec<ComparisonRow>>,
    /// Output files, relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub format_version: u32,
    /// Wall-clock milliseconds per stage, in execution order.
    pub stages: Vec<(String, f64)>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("report serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a report, refusing unknown format versions.
pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let version = value.get("format_version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Error::Validation(format!(
            "{} has format_version {version:?}, expected {FORMAT_VERSION}",
            path.display()
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })
}
