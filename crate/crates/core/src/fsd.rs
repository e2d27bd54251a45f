//! Fractional subgraph diffusion.
//!
//! For every channel, diffusion starts on the subgraph induced by the nodes
//! that observe that channel and grows one hop per layer. On layer `m` each
//! connected component of the `m`-hop view is iterated with
//!
//! ```text
//! x(t) = x(0) ⊙ M + (A^{γ,m} x(t-1) + λ x^{(m-1)}) ⊙ (1 - M)
//! ```
//!
//! where `x(0)` holds the observed values (zero elsewhere) and `x^{(m-1)}` is
//! the previous layer's result, zero for nodes that layer did not contain.
//! With at least one observed node per component the iteration is a
//! contraction and converges to `(I - G)^{-1} b` with `G = Q A^{γ,m}` and
//! `b = P x(0) + λ Q x^{(m-1)}`.
//!
//! Note that `λ > 0` moves the fixed point: the retention term is added on
//! every iteration, so the previous layer's values are amplified through
//! `(I - G)^{-1}` rather than merely blended in.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::fractional::{build_fractional, check_gamma, FracOperator};
use crate::graph::{bfs_distance_to_set, Graph, NormalizedAdjacency, SubgraphView, ViewAdjacency};
use crate::masking::Mask;
use crate::parallel::par_map;

/// Which degrees normalize a layer's adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeScope {
    /// Degrees counted inside the layer's induced subgraph.
    #[default]
    View,
    /// Degrees of the full graph; the view only restricts the support.
    Global,
}

impl std::str::FromStr for DegreeScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "view" => Ok(DegreeScope::View),
            "global" => Ok(DegreeScope::Global),
            other => Err(Error::Param(format!("unknown degree scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsdConfig {
    pub gamma: f64,
    /// Retention coefficient.
    pub lambda: f64,
    /// Iteration cap per layer.
    pub k: usize,
    /// Largest hop radius to diffuse to; `None` runs until the view stops
    /// growing.
    pub max_layers: Option<usize>,
    pub convergence_tol: f64,
    pub degree_scope: DegreeScope,
}

impl Default for FsdConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda: 0.0,
            k: 100,
            max_layers: None,
            convergence_tol: 1e-7,
            degree_scope: DegreeScope::View,
        }
    }
}

impl FsdConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.k == 0 {
            return Err(Error::Param("K must be at least 1".into()));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::Param(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// Per-channel iteration state on one layer, indexed by the view's local
/// node order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub channel: usize,
    pub layer: usize,
    /// `x(0)`: observed values, zero on missing entries.
    pub initial: Vec<f64>,
    pub observed: Vec<bool>,
    /// Previous layer's converged values, zero where that layer had no node.
    pub prev_layer_values: Vec<f64>,
    /// Current iterate; updated in place by [`layer_iterate`].
    pub values: Vec<f64>,
}

impl ChannelState {
    /// Fresh state starting from `x(0)`.
    pub fn new(channel: usize, layer: usize, initial: Vec<f64>, observed: Vec<bool>, prev: Vec<f64>) -> Self {
        Self {
            channel,
            layer,
            values: initial.clone(),
            initial,
            observed,
            prev_layer_values: prev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LayerOutcome {
    /// Largest iteration count over the layer's components.
    pub iterations: usize,
    /// Largest final per-entry change over the layer's components.
    pub residual: f64,
    /// Components left untouched because they observe nothing.
    pub skipped_components: usize,
}

/// Runs the masked retention update on every component of `view` that
/// contains an observed node, each for at most `cfg.k` iterations and until
/// its largest per-entry change drops below `cfg.convergence_tol`.
pub fn layer_iterate(view: &SubgraphView<'_>, op: &FracOperator, state: &mut ChannelState, cfg: &FsdConfig) -> Result<LayerOutcome> {
    let len = view.len();
    for (what, got) in [
        ("operator", op.len()),
        ("initial", state.initial.len()),
        ("observed", state.observed.len()),
        ("prev_layer_values", state.prev_layer_values.len()),
        ("values", state.values.len()),
    ] {
        if got != len {
            return Err(Error::shape(format!("{len} ({what})"), got));
        }
    }
    Ok(iterate_components(
        op,
        &view.components(),
        &state.initial,
        &state.observed,
        &state.prev_layer_values,
        &mut state.values,
        cfg.lambda,
        cfg.k,
        cfg.convergence_tol,
    ))
}

#[allow(clippy::too_many_arguments)]
fn iterate_components(
    op: &FracOperator,
    components: &[Vec<usize>],
    initial: &[f64],
    observed: &[bool],
    prev: &[f64],
    values: &mut [f64],
    lambda: f64,
    k: usize,
    tol: f64,
) -> LayerOutcome {
    let mut outcome = LayerOutcome::default();
    let mut next = values.to_vec();
    for comp in components {
        if !comp.iter().any(|&i| observed[i]) {
            outcome.skipped_components += 1;
            continue;
        }
        let mut residual = f64::INFINITY;
        let mut t = 0;
        while t < k {
            t += 1;
            residual = 0.0;
            for &i in comp {
                let v = if observed[i] {
                    initial[i]
                } else {
                    op.row_dot(i, values) + lambda * prev[i]
                };
                residual = f64::max(residual, (v - values[i]).abs());
                next[i] = v;
            }
            for &i in comp {
                values[i] = next[i];
            }
            if residual < tol {
                break;
            }
        }
        outcome.iterations = outcome.iterations.max(t);
        outcome.residual = outcome.residual.max(residual);
    }
    outcome
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDiagnostics {
    pub channel: usize,
    pub observed: usize,
    /// Layers diffused, counting the observed-only layer 0.
    pub layers: usize,
    /// Iterations summed over layers.
    pub iterations: usize,
    pub final_residual: f64,
    /// Nodes with no path to an observed node; left at zero.
    pub unreachable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsdDiagnostics {
    pub channels: Vec<ChannelDiagnostics>,
    /// Channels without any observed entry; output as all-zero.
    pub empty_channels: Vec<usize>,
    /// Distinct observed sets, each sharing one set of layer views and
    /// operators.
    pub distinct_observed_sets: usize,
}

impl FsdDiagnostics {
    pub fn total_unreachable(&self) -> usize {
        self.channels.iter().map(|c| c.unreachable).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Imputation {
    pub features: FeatureMatrix,
    pub diagnostics: FsdDiagnostics,
}

struct Layer<'g> {
    view: SubgraphView<'g>,
    /// `None` when every view node is observed, which makes the layer a no-op.
    op: Option<FracOperator>,
    components: Vec<Vec<usize>>,
}

/// Views and operators shared by all channels with the same observed set.
struct LayerPlan<'g> {
    layers: Vec<Layer<'g>>,
    unreachable: usize,
}

impl<'g> LayerPlan<'g> {
    fn build(g: &'g Graph, adj: &NormalizedAdjacency, observed: &[usize], cfg: &FsdConfig) -> Result<Self> {
        let dist = bfs_distance_to_set(g, observed)?;
        let reach = dist.max_finite().unwrap_or(0);
        let last = cfg.max_layers.map_or(reach, |cap| cap.min(reach));
        let mut layers = Vec::with_capacity(last + 1);
        for m in 0..=last {
            let members = dist.within(m);
            let view = SubgraphView::from_members(g, members)?;
            let op = if m == 0 {
                None
            } else {
                let weights = match cfg.degree_scope {
                    DegreeScope::View => ViewAdjacency::renormalized(&view, adj.has_self_loops()),
                    DegreeScope::Global => adj.restrict(&view),
                };
                Some(build_fractional(&weights, cfg.gamma)?)
            };
            let components = view.components();
            layers.push(Layer { view, op, components });
        }
        Ok(Self {
            layers,
            unreachable: dist.unreachable_count(),
        })
    }

    fn run_channel(&self, x: &FeatureMatrix, mask: &Mask, channel: usize, cfg: &FsdConfig) -> (Vec<f64>, ChannelDiagnostics) {
        let n = x.rows();
        let mut prev = vec![0.0; n];
        let mut diag = ChannelDiagnostics {
            channel,
            observed: 0,
            layers: 0,
            iterations: 0,
            final_residual: 0.0,
            unreachable: self.unreachable,
        };
        for layer in &self.layers {
            let members = layer.view.members();
            let observed: Vec<bool> = members.iter().map(|&v| mask.observed(v, channel)).collect();
            let initial: Vec<f64> = members
                .iter()
                .zip(&observed)
                .map(|(&v, &o)| if o { x.get(v, channel) } else { 0.0 })
                .collect();
            let mut values = initial.clone();
            let mut outcome = LayerOutcome::default();
            if let Some(op) = &layer.op {
                let prev_local: Vec<f64> = members.iter().map(|&v| prev[v]).collect();
                outcome = iterate_components(
                    op,
                    &layer.components,
                    &initial,
                    &observed,
                    &prev_local,
                    &mut values,
                    cfg.lambda,
                    cfg.k,
                    cfg.convergence_tol,
                );
            }
            prev.fill(0.0);
            for (&v, &val) in members.iter().zip(&values) {
                prev[v] = val;
            }
            diag.layers += 1;
            diag.iterations += outcome.iterations;
            diag.final_residual = outcome.residual;
        }
        diag.observed = (0..n).filter(|&v| mask.observed(v, channel)).count();
        // observed entries are copied from the input, never recomputed
        for (v, out) in prev.iter_mut().enumerate() {
            if mask.observed(v, channel) {
                *out = x.get(v, channel);
            }
        }
        (prev, diag)
    }
}

fn check_inputs(g: &Graph, x: &FeatureMatrix, mask: &Mask) -> Result<()> {
    mask.check_shape(x)?;
    if x.rows() != g.node_count() {
        return Err(Error::shape(format!("{} feature rows", g.node_count()), x.rows()));
    }
    for i in 0..x.rows() {
        for l in 0..x.cols() {
            if mask.observed(i, l) && !x.get(i, l).is_finite() {
                return Err(Error::Numeric(format!("non-finite observed value at ({i}, {l})")));
            }
        }
    }
    Ok(())
}

/// Groups channels by observed node set, ordered deterministically.
fn group_channels(mask: &Mask) -> (BTreeMap<Vec<usize>, Vec<usize>>, Vec<usize>) {
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    let mut empty = Vec::new();
    for l in 0..mask.cols() {
        let observed = mask.observed_nodes(l);
        if observed.is_empty() {
            empty.push(l);
        } else {
            groups.entry(observed).or_default().push(l);
        }
    }
    (groups, empty)
}

type ChannelResult = (usize, Vec<f64>, ChannelDiagnostics);

/// Stage-one imputation. Observed entries are returned bit-identical;
/// channels with no observed entry and nodes unreachable from a channel's
/// observed set come back as zero and are listed in the diagnostics.
pub fn fsd_impute(g: &Graph, adj: &NormalizedAdjacency, x: &FeatureMatrix, mask: &Mask, cfg: &FsdConfig) -> Result<Imputation> {
    cfg.validate()?;
    check_inputs(g, x, mask)?;
    let (groups, empty_channels) = group_channels(mask);
    let groups: Vec<(Vec<usize>, Vec<usize>)> = groups.into_iter().collect();
    let distinct = groups.len();

    let results: Vec<Result<Vec<ChannelResult>>> = par_map(&groups, |(observed, channels)| {
        let plan = LayerPlan::build(g, adj, observed, cfg)?;
        Ok(par_map(channels, |&l| {
            let (col, diag) = plan.run_channel(x, mask, l, cfg);
            (l, col, diag)
        }))
    });

    let mut out = FeatureMatrix::zeros(x.rows(), x.cols());
    let mut channels = Vec::with_capacity(x.cols());
    for group in results {
        for (l, col, diag) in group? {
            out.set_column(l, &col);
            channels.push(diag);
        }
    }
    for &l in &empty_channels {
        channels.push(ChannelDiagnostics {
            channel: l,
            observed: 0,
            layers: 0,
            iterations: 0,
            final_residual: 0.0,
            unreachable: x.rows(),
        });
    }
    channels.sort_by_key(|d| d.channel);
    Ok(Imputation {
        features: out,
        diagnostics: FsdDiagnostics {
            channels,
            empty_channels,
            distinct_observed_sets: distinct,
        },
    })
}

/// Masked diffusion over the whole graph at once, no layering and no
/// retention.
pub fn global_diffusion(g: &Graph, adj: &NormalizedAdjacency, x: &FeatureMatrix, mask: &Mask, gamma: f64, k: usize, tol: f64) -> Result<Imputation> {
    let cfg = FsdConfig {
        gamma,
        lambda: 0.0,
        k,
        max_layers: None,
        convergence_tol: tol,
        degree_scope: DegreeScope::Global,
    };
    cfg.validate()?;
    check_inputs(g, x, mask)?;
    let n = g.node_count();
    let op = build_fractional(&adj.to_view_adjacency(g), gamma)?;
    let everything = vec![(0..n).collect::<Vec<_>>()];
    let zeros = vec![0.0; n];
    let (_, empty_channels) = group_channels(mask);
    let channels: Vec<usize> = (0..x.cols()).collect();
    let results = par_map(&channels, |&l| {
        let observed = mask.column(l);
        let initial: Vec<f64> = (0..n)
            .map(|v| if observed[v] { x.get(v, l) } else { 0.0 })
            .collect();
        let mut values = initial.clone();
        let outcome = if observed.iter().any(|&o| o) {
            iterate_components(&op, &everything, &initial, &observed, &zeros, &mut values, 0.0, k, tol)
        } else {
            LayerOutcome::default()
        };
        let diag = ChannelDiagnostics {
            channel: l,
            observed: observed.iter().filter(|&&o| o).count(),
            layers: 1,
            iterations: outcome.iterations,
            final_residual: outcome.residual,
            unreachable: match observed.iter().any(|&o| o) {
                true => bfs_distance_to_set(g, &mask.observed_nodes(l)).map_or(n, |d| d.unreachable_count()),
                false => n,
            },
        };
        (values, diag)
    });
    let mut out = FeatureMatrix::zeros(x.rows(), x.cols());
    let mut diags = Vec::with_capacity(x.cols());
    for (l, (col, diag)) in results.into_iter().enumerate() {
        out.set_column(l, &col);
        diags.push(diag);
    }
    let (groups, _) = group_channels(mask);
    Ok(Imputation {
        features: out,
        diagnostics: FsdDiagnostics {
            channels: diags,
            empty_channels,
            distinct_observed_sets: groups.len(),
        },
    })
}

/// Feature-propagation baseline: [`global_diffusion`] at `gamma = 1`.
pub fn fp_baseline(g: &Graph, adj: &NormalizedAdjacency, x: &FeatureMatrix, mask: &Mask, k: usize, tol: f64) -> Result<Imputation> {
    global_diffusion(g, adj, x, mask, 1.0, k, tol)
}
