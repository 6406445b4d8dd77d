//! Path execution against ground-truth noisy slip, and the evaluation
//! protocol: solved rate, success rate, total time, and maximum slip per
//! method variant.

use std::path::Path as FsPath;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::LikelihoodMap;
use crate::gp::GPModel;
use crate::grid::Cell;
use crate::planner::{
    astar, build_cost_map, EdgePredictionTable, HeuristicMode, Path, PlanOutcome, RiskMetric,
};
use crate::risk::RiskConfig;
use crate::terrain::{sample_slip, ProblemInstance};
use crate::{Error, Result};

/// Traversability model behind the planner: the full mixture or the
/// argmax-class single GP baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sgp,
    Mgp,
}

/// A planner variant: prediction model plus risk statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub model: ModelKind,
    pub metric: RiskMetric,
}

impl Method {
    pub fn label(&self) -> String {
        let model = match self.model {
            ModelKind::Sgp => "sgp",
            ModelKind::Mgp => "mgp",
        };
        format!("{model}+{}", self.metric.name())
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (model, metric) = s
            .split_once('+')
            .ok_or_else(|| Error::param(format!("method '{s}' is not of the form model+metric")))?;
        let model = match model.to_ascii_lowercase().as_str() {
            "sgp" => ModelKind::Sgp,
            "mgp" => ModelKind::Mgp,
            other => return Err(Error::param(format!("unknown model kind '{other}'"))),
        };
        Ok(Method { model, metric: RiskMetric::parse(metric)? })
    }
}

/// All six evaluated variants, in reporting order.
pub fn all_methods() -> Vec<Method> {
    let mut out = Vec::new();
    for model in [ModelKind::Sgp, ModelKind::Mgp] {
        for metric in [RiskMetric::Ev, RiskMetric::Var, RiskMetric::Cvar] {
            out.push(Method { model, metric });
        }
    }
    out
}

// ── execution ────────────────────────────────────────────────────────────────

/// Outcome of driving one planned path over the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    /// Experienced slip per traversed edge, including a failing edge.
    pub per_edge_slips: Vec<f64>,
    /// True iff every experienced slip stayed inside (-1, 1).
    pub success: bool,
    /// Source cell of the edge where the rover got stuck or lost control.
    pub failure_position: Option<Cell>,
    /// Accumulated travel time in seconds; meaningful when `success`.
    pub total_time: f64,
    /// 100 x max experienced slip.
    pub max_slip_pct: f64,
}

/// Drive `path` at `u_ref`, drawing an edge-wise noisy slip from the
/// instance ground truth. Noise streams are keyed by (instance seed, edge),
/// so the slip an edge produces does not depend on the path that reached it.
/// Execution aborts at the first slip outside (-1, 1).
pub fn execute_path(
    instance: &ProblemInstance,
    path: &Path,
    u_ref: f64,
) -> Result<ExecutionResult> {
    if !(u_ref > 0.0) {
        return Err(Error::param("u_ref must be positive"));
    }
    if path.vertices.is_empty() {
        return Err(Error::param("path has no vertices"));
    }
    for v in &path.vertices {
        if !instance.heightmap.in_bounds(*v) {
            return Err(Error::param(format!("path vertex ({},{}) outside the map", v.x, v.y)));
        }
    }

    let mut slips = Vec::with_capacity(path.vertices.len().saturating_sub(1));
    let mut total_time = 0.0;
    let mut success = true;
    let mut failure_position = None;

    for pair in path.vertices.windows(2) {
        let (from, to) = (pair[0], pair[1]);
        let dir = from
            .direction_to(to)
            .ok_or_else(|| Error::param("consecutive path vertices are not 8-neighbors"))?;
        let mut rng = instance.edge_noise_stream(from, dir);
        let s = sample_slip(instance, from, to, &mut rng)?;
        slips.push(s);
        if s >= 1.0 || s <= -1.0 {
            success = false;
            failure_position = Some(from);
            break;
        }
        let phi = instance.heightmap.pitch_at_edge(from, to)?;
        let u = if phi >= 0.0 { (1.0 - s) * u_ref } else { u_ref / (1.0 + s) };
        total_time += instance.heightmap.edge_length(from, to) / u;
    }

    let max_slip_pct = 100.0 * slips.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_slip_pct = if slips.is_empty() { 0.0 } else { max_slip_pct };
    Ok(ExecutionResult { per_edge_slips: slips, success, failure_position, total_time, max_slip_pct })
}

// ── evaluation protocol ──────────────────────────────────────────────────────

/// Everything a suite run needs besides the data itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub risk: RiskConfig,
    pub u_ref: f64,
    pub heuristic: HeuristicMode,
    pub start: Cell,
    pub goal: Cell,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            risk: RiskConfig::default(),
            u_ref: 0.1,
            heuristic: HeuristicMode::Zero,
            start: Cell::new(8, 8),
            goal: Cell::new(88, 88),
        }
    }
}

/// One instance x method evaluation record (a `results.csv` row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub instance: String,
    pub method: String,
    pub alpha: f64,
    pub solved: bool,
    pub success: bool,
    /// Planned path cost in seconds, when solved.
    pub planned_cost_s: Option<f64>,
    /// Executed travel time in seconds, when successful.
    pub total_time_s: Option<f64>,
    /// 100 x max experienced slip, when solved (a path was executed).
    pub max_slip_pct: Option<f64>,
}

/// Evaluate one instance under several (method, risk) variants, reusing the
/// per-edge GP prediction table across all of them.
pub fn evaluate_instance(
    instance: &ProblemInstance,
    likelihoods: &LikelihoodMap,
    models: &[GPModel],
    variants: &[(Method, RiskConfig)],
    cfg: &SuiteConfig,
) -> Result<Vec<EvalRow>> {
    let table = EdgePredictionTable::build(&instance.heightmap, models);
    let one_hot = likelihoods.one_hot_argmax();

    let mut rows = Vec::with_capacity(variants.len());
    for (method, risk) in variants {
        let view = match method.model {
            ModelKind::Sgp => &one_hot,
            ModelKind::Mgp => likelihoods,
        };
        let cost_map =
            build_cost_map(&instance.heightmap, &table, view, risk, method.metric, cfg.u_ref)?;
        let outcome = astar(&instance.heightmap, &cost_map, cfg.start, cfg.goal, cfg.heuristic)?;
        let row = match outcome {
            PlanOutcome::NoSolution => EvalRow {
                instance: instance.id.clone(),
                method: method.label(),
                alpha: risk.alpha,
                solved: false,
                success: false,
                planned_cost_s: None,
                total_time_s: None,
                max_slip_pct: None,
            },
            PlanOutcome::Path(path) => {
                let exec = execute_path(instance, &path, cfg.u_ref)?;
                EvalRow {
                    instance: instance.id.clone(),
                    method: method.label(),
                    alpha: risk.alpha,
                    solved: true,
                    success: exec.success,
                    planned_cost_s: Some(path.total_cost),
                    total_time_s: exec.success.then_some(exec.total_time),
                    max_slip_pct: Some(exec.max_slip_pct),
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Aggregate rates and moments for one method over one dataset, following
/// the reporting convention: total time and max slip are aggregated over
/// successful runs only, as mean ± population std, in minutes / percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub dataset: String,
    pub method: String,
    pub alpha: f64,
    pub instances: usize,
    pub solved_rate_pct: f64,
    pub success_rate_pct: f64,
    pub total_time_mean_min: Option<f64>,
    pub total_time_std_min: Option<f64>,
    pub max_slip_mean_pct: Option<f64>,
    pub max_slip_std_pct: Option<f64>,
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Summarize the rows of one (dataset, method, alpha) slice.
pub fn summarize(dataset: &str, method: &str, alpha: f64, rows: &[EvalRow]) -> MetricsSummary {
    let n = rows.len();
    let solved = rows.iter().filter(|r| r.solved).count();
    let succeeded = rows.iter().filter(|r| r.success).count();
    let times_min: Vec<f64> = rows
        .iter()
        .filter(|r| r.success)
        .filter_map(|r| r.total_time_s.map(|t| t / 60.0))
        .collect();
    let slips: Vec<f64> = rows
        .iter()
        .filter(|r| r.success)
        .filter_map(|r| r.max_slip_pct)
        .collect();
    let time_stats = mean_std(&times_min);
    let slip_stats = mean_std(&slips);
    MetricsSummary {
        dataset: dataset.to_string(),
        method: method.to_string(),
        alpha,
        instances: n,
        solved_rate_pct: 100.0 * solved as f64 / n.max(1) as f64,
        success_rate_pct: 100.0 * succeeded as f64 / n.max(1) as f64,
        total_time_mean_min: time_stats.map(|s| s.0),
        total_time_std_min: time_stats.map(|s| s.1),
        max_slip_mean_pct: slip_stats.map(|s| s.0),
        max_slip_std_pct: slip_stats.map(|s| s.1),
    }
}

/// A full evaluation of one dataset: the raw rows plus per-method summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub dataset: String,
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<MetricsSummary>,
}

impl SuiteReport {
    pub fn summary_for(&self, label: &str, alpha: f64) -> Option<&MetricsSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == label && s.alpha == alpha)
    }
}

/// Plan and execute every instance under every method. Instances evaluate
/// in parallel; rows come back in (instance, method) order.
pub fn evaluate_suite(
    dataset: &str,
    instances: &[ProblemInstance],
    likelihoods: &[LikelihoodMap],
    models: &[GPModel],
    methods: &[Method],
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    if methods.is_empty() {
        return Err(Error::config("method list is empty"));
    }
    if instances.len() != likelihoods.len() {
        return Err(Error::config("one likelihood map per instance is required"));
    }
    let variants: Vec<(Method, RiskConfig)> =
        methods.iter().map(|&m| (m, cfg.risk)).collect();

    let per_instance: Vec<Vec<EvalRow>> = instances
        .par_iter()
        .zip(likelihoods.par_iter())
        .map(|(inst, lik)| evaluate_instance(inst, lik, models, &variants, cfg))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<EvalRow> = per_instance.into_iter().flatten().collect();
    let summaries = methods
        .iter()
        .map(|m| {
            let label = m.label();
            let slice: Vec<EvalRow> =
                rows.iter().filter(|r| r.method == label).cloned().collect();
            summarize(dataset, &label, cfg.risk.alpha, &slice)
        })
        .collect();
    Ok(SuiteReport { dataset: dataset.to_string(), rows, summaries })
}

/// Run the MGP+CVaR planner across an alpha grid (the safety/efficiency
/// trade-off study). Returns one report per alpha, in grid order.
pub fn alpha_sweep(
    dataset: &str,
    instances: &[ProblemInstance],
    likelihoods: &[LikelihoodMap],
    models: &[GPModel],
    alphas: &[f64],
    cfg: &SuiteConfig,
) -> Result<Vec<SuiteReport>> {
    if alphas.is_empty() {
        return Err(Error::config("alpha grid is empty"));
    }
    if instances.len() != likelihoods.len() {
        return Err(Error::config("one likelihood map per instance is required"));
    }
    let method = Method { model: ModelKind::Mgp, metric: RiskMetric::Cvar };
    let variants: Vec<(Method, RiskConfig)> = alphas
        .iter()
        .map(|&alpha| (method, RiskConfig { alpha, ..cfg.risk }))
        .collect();

    let per_instance: Vec<Vec<EvalRow>> = instances
        .par_iter()
        .zip(likelihoods.par_iter())
        .map(|(inst, lik)| evaluate_instance(inst, lik, models, &variants, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(alphas.len());
    for (k, &alpha) in alphas.iter().enumerate() {
        let rows: Vec<EvalRow> =
            per_instance.iter().map(|rows| rows[k].clone()).collect();
        let summary = summarize(dataset, &method.label(), alpha, &rows);
        reports.push(SuiteReport {
            dataset: dataset.to_string(),
            rows,
            summaries: vec![summary],
        });
    }
    Ok(reports)
}

// ── report files ─────────────────────────────────────────────────────────────

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `results.csv`: one row per instance x method.
pub fn write_results_csv(path: &FsPath, rows: &[EvalRow]) -> Result<()> {
    let mut out = String::from(
        "instance,method,alpha,solved,success,planned_cost_s,total_time_s,max_slip_pct\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.instance,
            r.method,
            r.alpha,
            r.solved as u8,
            r.success as u8,
            fmt_opt(r.planned_cost_s),
            fmt_opt(r.total_time_s),
            fmt_opt(r.max_slip_pct),
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write `summary.json`: the aggregate table.
pub fn write_summary_json(path: &FsPath, summaries: &[MetricsSummary]) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(&summaries)?)?;
    Ok(())
}
