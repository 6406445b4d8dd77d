//! 8-connected planning graph, risk-aware travel-time edge costs, and A*.
//!
//! Edge costs are built per directed edge: the slip-as-risk statistic is
//! extracted twice (once with the likelihoods at each endpoint), converted
//! to a rover velocity, and the two travel times are averaged. Edges whose
//! pessimistic slip stalls or destabilizes the rover get infinite cost; this
//! is how unsolvable instances arise.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path as FsPath;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::LikelihoodMap;
use crate::gp::GPModel;
use crate::grid::{write_f32_raster, Cell, Grid};
use crate::risk::{
    analytic_risk_mean, cvar_mut, mixture_from_predictions, slip_as_risk_samples, var_mut,
    RiskConfig,
};
use crate::rng::{derive_stream, domain};
use crate::terrain::HeightMap;
use crate::{Error, Result};

/// Statistic extracted from the slip-as-risk distribution for edge costing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskMetric {
    Ev,
    Var,
    Cvar,
}

impl RiskMetric {
    pub fn name(self) -> &'static str {
        match self {
            RiskMetric::Ev => "ev",
            RiskMetric::Var => "var",
            RiskMetric::Cvar => "cvar",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ev" => Ok(RiskMetric::Ev),
            "var" => Ok(RiskMetric::Var),
            "cvar" => Ok(RiskMetric::Cvar),
            other => Err(Error::param(format!("unknown risk metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicMode {
    /// No heuristic: Dijkstra-equivalent expansion, unconditionally optimal.
    Zero,
    /// 3-D straight-line distance over the fastest velocity realized in the
    /// cost map; admissible and consistent by construction.
    EuclidOverUmax,
}

/// Rover velocity under a given slip, per the slip definition: ascending
/// edges slow down as `(1 - s) * u_ref`, descending edges follow
/// `u_ref / (1 + s)`. Returns `None` when the edge is impassable
/// (`s >= 1` ascending, `s <= -1` descending).
pub fn risk_velocity(s_risk: f64, phi: f64, u_ref: f64) -> Option<f64> {
    debug_assert!(u_ref > 0.0);
    if phi >= 0.0 {
        if s_risk >= 1.0 {
            None
        } else {
            Some((1.0 - s_risk) * u_ref)
        }
    } else if s_risk <= -1.0 {
        None
    } else {
        Some(u_ref / (1.0 + s_risk))
    }
}

/// Travel time for one endpoint's risk estimate; infinite when impassable.
fn side_cost(edge_len: f64, s_risk: f64, phi: f64, u_ref: f64) -> f64 {
    match risk_velocity(s_risk, phi, u_ref) {
        Some(u) if u > 0.0 => edge_len / u,
        _ => f64::INFINITY,
    }
}

// ── per-edge GP prediction table ─────────────────────────────────────────────

/// Cached per-class GP predictions for every directed edge of an instance.
/// Shared across planner variants so that SGP/MGP and all metrics price the
/// same geometry identically.
pub struct EdgePredictionTable {
    width: usize,
    num_classes: usize,
    /// (mean, variance) per (edge, class); `[(cell*8 + dir) * C + class]`.
    preds: Vec<(f64, f64)>,
    /// Pitch per directed edge; NaN where the neighbor is out of bounds.
    pitches: Vec<f64>,
    /// 3-D edge length per directed edge; NaN out of bounds.
    lengths: Vec<f64>,
    /// Per-class predictions at zero pitch.
    zero_preds: Vec<(f64, f64)>,
}

impl EdgePredictionTable {
    pub fn build(heightmap: &HeightMap, models: &[GPModel]) -> Self {
        let (w, h) = (heightmap.width(), heightmap.height());
        let c = models.len();
        let zero_preds: Vec<(f64, f64)> = models.iter().map(|m| m.predict(0.0)).collect();
        let grid: Grid<()> = Grid::filled(w, h, ());

        let rows: Vec<Vec<((f64, f64), Vec<(f64, f64)>)>> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut row = Vec::with_capacity(w * 8);
                for x in 0..w {
                    let cell = Cell::new(x, y);
                    for dir in 0..8 {
                        match grid.neighbor(cell, dir) {
                            Some(n) => {
                                let phi = heightmap.pitch_at_edge(cell, n).expect("neighbor");
                                let len = heightmap.edge_length(cell, n);
                                let preds = models.iter().map(|m| m.predict(phi)).collect();
                                row.push(((phi, len), preds));
                            }
                            None => row.push(((f64::NAN, f64::NAN), vec![(0.0, 1.0); c])),
                        }
                    }
                }
                row
            })
            .collect();

        let mut pitches = Vec::with_capacity(w * h * 8);
        let mut lengths = Vec::with_capacity(w * h * 8);
        let mut preds = Vec::with_capacity(w * h * 8 * c);
        for row in rows {
            for ((phi, len), edge_preds) in row {
                pitches.push(phi);
                lengths.push(len);
                preds.extend(edge_preds);
            }
        }
        EdgePredictionTable { width: w, num_classes: c, preds, pitches, lengths, zero_preds }
    }

    fn edge_index(&self, cell: Cell, dir: usize) -> usize {
        (cell.y * self.width + cell.x) * 8 + dir
    }

    pub fn pitch(&self, cell: Cell, dir: usize) -> f64 {
        self.pitches[self.edge_index(cell, dir)]
    }

    pub fn predictions(&self, cell: Cell, dir: usize) -> &[(f64, f64)] {
        let e = self.edge_index(cell, dir);
        &self.preds[e * self.num_classes..(e + 1) * self.num_classes]
    }

    pub fn zero_predictions(&self) -> &[(f64, f64)] {
        &self.zero_preds
    }
}

// ── cost maps ────────────────────────────────────────────────────────────────

/// Directed edge costs in seconds; `[cell * 8 + dir]`, infinite where
/// impassable, NaN where the neighbor is out of bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    width: usize,
    height: usize,
    costs: Vec<f64>,
}

impl CostMap {
    pub fn from_costs(width: usize, height: usize, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != width * height * 8 {
            return Err(Error::data("cost buffer does not match 8 planes"));
        }
        Ok(CostMap { width, height, costs })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cost(&self, cell: Cell, dir: usize) -> f64 {
        self.costs[(cell.y * self.width + cell.x) * 8 + dir]
    }

    /// Export as 8 class-major f32 planes (one per neighbor direction).
    pub fn save(&self, path: &FsPath) -> Result<()> {
        let n = self.width * self.height;
        let mut planes = Vec::with_capacity(self.costs.len());
        for dir in 0..8 {
            for cell in 0..n {
                planes.push(self.costs[cell * 8 + dir] as f32);
            }
        }
        write_f32_raster(path, &planes)
    }
}

/// Compute the slip-as-risk statistic for one endpoint's likelihoods.
#[allow(clippy::too_many_arguments)]
fn side_risk(
    weights: &[f64],
    preds_phi: &[(f64, f64)],
    zero_preds: &[(f64, f64)],
    phi: f64,
    metric: RiskMetric,
    risk: &RiskConfig,
    src_index: u64,
    dir: usize,
    side: u64,
) -> Result<f64> {
    let mix_phi = mixture_from_predictions(weights, preds_phi)?;
    // The expectation has a closed form; CVaR at alpha = 0 is the
    // expectation by definition, so it shares the analytic path.
    let analytic = metric == RiskMetric::Ev || (metric == RiskMetric::Cvar && risk.alpha == 0.0);
    let needs_zero = phi < 0.0;
    let mix_zero = if needs_zero {
        Some(mixture_from_predictions(weights, zero_preds)?)
    } else {
        None
    };
    if analytic {
        let zero_ref = mix_zero.as_ref().unwrap_or(&mix_phi);
        return Ok(analytic_risk_mean(&mix_phi, zero_ref, phi));
    }
    let mut rng = derive_stream(risk.seed, &[domain::EDGE_RISK, src_index, dir as u64, side]);
    let zero_ref = mix_zero.as_ref().unwrap_or(&mix_phi);
    let mut samples = slip_as_risk_samples(
        &mix_phi,
        zero_ref,
        phi,
        &mut rng,
        risk.mc_samples,
        risk.class_draw,
    )?;
    match metric {
        RiskMetric::Ev => unreachable!("EV handled analytically"),
        RiskMetric::Var => var_mut(&mut samples, risk.alpha),
        RiskMetric::Cvar => cvar_mut(&mut samples, risk.alpha),
    }
}

/// Build the full directed-edge cost map for one planner variant.
pub fn build_cost_map(
    heightmap: &HeightMap,
    table: &EdgePredictionTable,
    likelihoods: &LikelihoodMap,
    risk: &RiskConfig,
    metric: RiskMetric,
    u_ref: f64,
) -> Result<CostMap> {
    risk.validate()?;
    if !(u_ref > 0.0) {
        return Err(Error::param("u_ref must be positive"));
    }
    let (w, h) = (heightmap.width(), heightmap.height());
    if likelihoods.width() != w || likelihoods.height() != h {
        return Err(Error::data("likelihood map dimensions do not match the heightmap"));
    }
    if likelihoods.num_classes() != table.num_classes {
        return Err(Error::config("likelihood classes do not match the fitted models"));
    }
    let grid: Grid<()> = Grid::filled(w, h, ());

    let rows: Vec<Result<Vec<f64>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(w * 8);
            for x in 0..w {
                let cell = Cell::new(x, y);
                let src_index = (y * w + x) as u64;
                for dir in 0..8 {
                    let Some(neighbor) = grid.neighbor(cell, dir) else {
                        row.push(f64::NAN);
                        continue;
                    };
                    let phi = table.pitch(cell, dir);
                    let len = table.lengths[table.edge_index(cell, dir)];
                    let preds = table.predictions(cell, dir);
                    let zero = table.zero_predictions();

                    let s_src = side_risk(
                        likelihoods.cell_probs(cell),
                        preds,
                        zero,
                        phi,
                        metric,
                        risk,
                        src_index,
                        dir,
                        0,
                    )?;
                    let s_dst = side_risk(
                        likelihoods.cell_probs(neighbor),
                        preds,
                        zero,
                        phi,
                        metric,
                        risk,
                        src_index,
                        dir,
                        1,
                    )?;
                    let a = side_cost(len, s_src, phi, u_ref);
                    let b = side_cost(len, s_dst, phi, u_ref);
                    row.push(0.5 * (a + b));
                }
            }
            Ok(row)
        })
        .collect();

    let mut costs = Vec::with_capacity(w * h * 8);
    for row in rows {
        costs.extend(row?);
    }
    CostMap::from_costs(w, h, costs)
}

// ── A* search ────────────────────────────────────────────────────────────────

/// An optimal path: ordered vertices and the summed edge cost in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub vertices: Vec<Cell>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Path(Path),
    /// The goal is not reachable through finite-cost edges.
    NoSolution,
}

impl PlanOutcome {
    pub fn path(&self) -> Option<&Path> {
        match self {
            PlanOutcome::Path(p) => Some(p),
            PlanOutcome::NoSolution => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    f: f64,
    h: f64,
    g: f64,
    idx: u32,
}

// Lexicographic (f, h, idx) orientation for a min-heap behind Reverse.
impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.f
            .total_cmp(&other.f)
            .then(self.h.total_cmp(&other.h))
            .then(self.idx.cmp(&other.idx))
    }
}

/// A* over the directed cost map. Tie-breaking is lexicographic on
/// (f, h, vertex index), so searches are reproducible.
pub fn astar(
    heightmap: &HeightMap,
    cost_map: &CostMap,
    start: Cell,
    goal: Cell,
    mode: HeuristicMode,
) -> Result<PlanOutcome> {
    let (w, h) = (cost_map.width(), cost_map.height());
    if !heightmap.in_bounds(start) || !heightmap.in_bounds(goal) {
        return Err(Error::param("start or goal outside the map"));
    }
    if heightmap.width() != w || heightmap.height() != h {
        return Err(Error::data("cost map dimensions do not match the heightmap"));
    }
    if start == goal {
        return Ok(PlanOutcome::Path(Path { vertices: vec![start], total_cost: 0.0 }));
    }

    // Fastest velocity realized anywhere in the cost map; division by it
    // keeps the straight-line heuristic admissible.
    let u_max = match mode {
        HeuristicMode::Zero => f64::INFINITY,
        HeuristicMode::EuclidOverUmax => {
            let grid: Grid<()> = Grid::filled(w, h, ());
            let mut u = 0.0f64;
            for cell in grid.cells() {
                for dir in 0..8 {
                    if let Some(n) = grid.neighbor(cell, dir) {
                        let c = cost_map.cost(cell, dir);
                        if c.is_finite() && c > 0.0 {
                            u = u.max(heightmap.edge_length(cell, n) / c);
                        }
                    }
                }
            }
            if u > 0.0 {
                u
            } else {
                f64::INFINITY
            }
        }
    };
    let heuristic = |cell: Cell| -> f64 {
        if u_max.is_infinite() {
            return 0.0;
        }
        let a = heightmap.position(cell);
        let b = heightmap.position(goal);
        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        d / u_max
    };

    let grid: Grid<()> = Grid::filled(w, h, ());
    let n = w * h;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![u32::MAX; n];
    let mut closed = vec![false; n];
    let start_idx = (start.y * w + start.x) as u32;
    let goal_idx = (goal.y * w + goal.x) as u32;

    let mut heap = BinaryHeap::new();
    g[start_idx as usize] = 0.0;
    let h0 = heuristic(start);
    heap.push(std::cmp::Reverse(HeapEntry { f: h0, h: h0, g: 0.0, idx: start_idx }));

    while let Some(std::cmp::Reverse(entry)) = heap.pop() {
        let idx = entry.idx as usize;
        if entry.g > g[idx] || closed[idx] {
            continue;
        }
        closed[idx] = true;
        if entry.idx == goal_idx {
            break;
        }
        let cell = Cell::new(idx % w, idx / w);
        for dir in 0..8 {
            let Some(next) = grid.neighbor(cell, dir) else { continue };
            let cost = cost_map.cost(cell, dir);
            if !cost.is_finite() {
                continue;
            }
            let next_idx = next.y * w + next.x;
            let cand = g[idx] + cost;
            if cand < g[next_idx] {
                g[next_idx] = cand;
                parent[next_idx] = entry.idx;
                let hv = heuristic(next);
                heap.push(std::cmp::Reverse(HeapEntry {
                    f: cand + hv,
                    h: hv,
                    g: cand,
                    idx: next_idx as u32,
                }));
            }
        }
    }

    if !g[goal_idx as usize].is_finite() {
        return Ok(PlanOutcome::NoSolution);
    }
    let mut vertices = vec![goal];
    let mut cursor = goal_idx;
    while cursor != start_idx {
        cursor = parent[cursor as usize];
        vertices.push(Cell::new(cursor as usize % w, cursor as usize / w));
    }
    vertices.reverse();
    Ok(PlanOutcome::Path(Path { vertices, total_cost: g[goal_idx as usize] }))
}

/// Serializable path record with its per-edge cost breakdown.
#[derive(Debug, Serialize, Deserialize)]
pub struct PathRecord {
    pub instance: String,
    pub method: String,
    pub vertices: Vec<(usize, usize)>,
    pub edge_costs: Vec<f64>,
    pub total_cost: f64,
}

impl PathRecord {
    pub fn new(instance: &str, method: &str, path: &Path, cost_map: &CostMap) -> Self {
        let vertices: Vec<(usize, usize)> = path.vertices.iter().map(|c| (c.x, c.y)).collect();
        let edge_costs = path
            .vertices
            .windows(2)
            .map(|p| cost_map.cost(p[0], p[0].direction_to(p[1]).expect("adjacent")))
            .collect();
        PathRecord {
            instance: instance.to_string(),
            method: method.to_string(),
            vertices,
            edge_costs,
            total_cost: path.total_cost,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::synthetic_classify;
    use crate::gp::{fit_with_hyperparams, GPHyperparams, GPModel, TrainingSet};
    use crate::terrain::{make_dataset, DatasetKind, DatasetParams, Split};

    fn toy_models(n: usize) -> Vec<GPModel> {
        (0..n)
            .map(|c| {
                let hp = GPHyperparams {
                    lengthscale: 0.3,
                    signal_variance: 0.05,
                    noise_variance: 0.01,
                };
                let slope = 0.2 + 0.1 * c as f64;
                let pitches: Vec<f64> = (-5..=5).map(|i| i as f64 * 0.12).collect();
                let slips: Vec<f64> = pitches.iter().map(|p| slope * (2.0 * p).tanh()).collect();
                fit_with_hyperparams(
                    TrainingSet { pitches, slips, class_id: c as u16 },
                    hp,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn velocity_follows_the_slip_conversion() {
        assert_eq!(risk_velocity(0.0, 0.0, 0.1), Some(0.1));
        assert_eq!(risk_velocity(0.5, 0.2, 0.1), Some(0.05));
        let v = risk_velocity(0.25, -0.2, 0.1).unwrap();
        assert!((v - 0.08).abs() < 1e-15);
        assert_eq!(risk_velocity(1.0, 0.2, 0.1), None);
        assert_eq!(risk_velocity(-1.0, -0.2, 0.1), None);
        // Negative slip speeds up an ascent; large positive slip slows a
        // descent without stalling it.
        assert_eq!(risk_velocity(-0.5, 0.1, 0.1), Some(0.15000000000000002));
        assert!(risk_velocity(2.0, -0.1, 0.1).unwrap() > 0.0);
    }

    #[test]
    fn flat_edge_travel_time_is_distance_over_velocity() {
        assert_eq!(side_cost(1.0, 0.0, 0.0, 0.1), 10.0);
        let diag = side_cost(3.0f64.sqrt(), 0.0, 0.0, 0.1);
        assert!((diag - 10.0 * 3.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(side_cost(1.0, 1.0, 0.5, 0.1), f64::INFINITY);
    }

    fn tiny_world() -> (crate::terrain::ProblemInstance, Vec<GPModel>) {
        let p = DatasetParams { width: 12, height: 12, groups: 1, ..Default::default() };
        let inst = make_dataset(DatasetKind::Std, Split::Test, 2, 1, &p).unwrap().remove(0);
        (inst, toy_models(10))
    }

    #[test]
    fn cost_map_is_positive_and_deterministic() {
        let (inst, models) = tiny_world();
        let likelihoods = synthetic_classify(&inst, 0.95, 1, 0).unwrap();
        let table = EdgePredictionTable::build(&inst.heightmap, &models);
        let risk = RiskConfig { alpha: 0.9, mc_samples: 500, ..Default::default() };
        let a = build_cost_map(&inst.heightmap, &table, &likelihoods, &risk, RiskMetric::Cvar, 0.1)
            .unwrap();
        let b = build_cost_map(&inst.heightmap, &table, &likelihoods, &risk, RiskMetric::Cvar, 0.1)
            .unwrap();
        // Bit-level comparison: the out-of-bounds slots are NaN.
        let bits = |m: &CostMap| m.costs.iter().map(|c| c.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let grid: Grid<()> = Grid::filled(12, 12, ());
        for cell in grid.cells() {
            for dir in 0..8 {
                let c = a.cost(cell, dir);
                if grid.neighbor(cell, dir).is_some() {
                    assert!(c > 0.0, "cost must be strictly positive");
                } else {
                    assert!(c.is_nan());
                }
            }
        }
    }

    // Oracle: independently coded single-GP costing.
    #[test]
    fn one_hot_ev_costs_match_a_single_gp_oracle() {
        let (inst, models) = tiny_world();
        let soft = synthetic_classify(&inst, 0.95, 1, 0).unwrap();
        let one_hot = soft.one_hot_argmax();
        let table = EdgePredictionTable::build(&inst.heightmap, &models);
        let risk = RiskConfig { alpha: 0.0, mc_samples: 1000, ..Default::default() };
        let map =
            build_cost_map(&inst.heightmap, &table, &one_hot, &risk, RiskMetric::Ev, 0.1).unwrap();

        let grid: Grid<()> = Grid::filled(12, 12, ());
        for cell in grid.cells() {
            for dir in 0..8 {
                let Some(n) = grid.neighbor(cell, dir) else { continue };
                let phi = inst.heightmap.pitch_at_edge(cell, n).unwrap();
                let len = inst.heightmap.edge_length(cell, n);
                let s_for = |at: Cell| {
                    let class = one_hot.argmax_class(at) as usize;
                    let mu_phi = models[class].predict(phi).0;
                    if phi >= 0.0 {
                        mu_phi
                    } else {
                        2.0 * models[class].predict(0.0).0 - mu_phi
                    }
                };
                let cost = |s: f64| {
                    let u = if phi >= 0.0 { (1.0 - s) * 0.1 } else { 0.1 / (1.0 + s) };
                    if u > 0.0 { len / u } else { f64::INFINITY }
                };
                let expect = 0.5 * (cost(s_for(cell)) + cost(s_for(n)));
                let got = map.cost(cell, dir);
                assert!(
                    (got - expect).abs() < 1e-12 || (got.is_infinite() && expect.is_infinite()),
                    "cost {got} vs oracle {expect}"
                );
            }
        }
    }

    #[test]
    fn start_equals_goal_is_a_trivial_path() {
        let (inst, models) = tiny_world();
        let likelihoods = synthetic_classify(&inst, 1.0, 0, 0).unwrap();
        let table = EdgePredictionTable::build(&inst.heightmap, &models);
        let risk = RiskConfig { alpha: 0.0, ..Default::default() };
        let map =
            build_cost_map(&inst.heightmap, &table, &likelihoods, &risk, RiskMetric::Ev, 0.1)
                .unwrap();
        let out = astar(&inst.heightmap, &map, Cell::new(3, 3), Cell::new(3, 3), HeuristicMode::Zero)
            .unwrap();
        let path = out.path().unwrap();
        assert_eq!(path.vertices, vec![Cell::new(3, 3)]);
        assert_eq!(path.total_cost, 0.0);
    }

    /// Simple reference Dijkstra, coded independently of the A* above.
    fn dijkstra_cost(map: &CostMap, start: Cell, goal: Cell) -> Option<f64> {
        let (w, h) = (map.width(), map.height());
        let grid: Grid<()> = Grid::filled(w, h, ());
        let mut dist = vec![f64::INFINITY; w * h];
        let mut visited = vec![false; w * h];
        dist[start.y * w + start.x] = 0.0;
        loop {
            let mut best: Option<usize> = None;
            for i in 0..dist.len() {
                if !visited[i]
                    && dist[i].is_finite()
                    && best.map_or(true, |b| dist[i] < dist[b])
                {
                    best = Some(i);
                }
            }
            let Some(u) = best else { break };
            visited[u] = true;
            let cell = Cell::new(u % w, u / w);
            for dir in 0..8 {
                if let Some(nb) = grid.neighbor(cell, dir) {
                    let c = map.cost(cell, dir);
                    if c.is_finite() {
                        let v = nb.y * w + nb.x;
                        if dist[u] + c < dist[v] {
                            dist[v] = dist[u] + c;
                        }
                    }
                }
            }
        }
        let d = dist[goal.y * w + goal.x];
        d.is_finite().then_some(d)
    }

    #[test]
    fn uniform_costs_give_chebyshev_optimal_paths() {
        let flat = HeightMap::from_parts(8, 8, 1.0, vec![0.0; 64]).unwrap();
        let costs = vec![1.0; 64 * 8];
        let map = CostMap::from_costs(8, 8, costs).unwrap();
        for mode in [HeuristicMode::Zero, HeuristicMode::EuclidOverUmax] {
            let out = astar(&flat, &map, Cell::new(1, 2), Cell::new(6, 4), mode).unwrap();
            let path = out.path().unwrap();
            // Chebyshev distance: max(5, 2) = 5 unit-cost steps.
            assert_eq!(path.vertices.len(), 6);
            assert_eq!(path.total_cost, 5.0);
            assert_eq!(
                Some(path.total_cost),
                dijkstra_cost(&map, Cell::new(1, 2), Cell::new(6, 4))
            );
        }
    }

    #[test]
    fn both_heuristics_match_dijkstra_on_random_costs() {
        use rand::Rng;
        let mut rng = crate::rng::derive_stream(31, &[0x77]);
        for case in 0..10 {
            let hm = crate::terrain::generate_heightmap(case, 12, 12, 0.6).unwrap();
            let mut costs = vec![f64::NAN; 12 * 12 * 8];
            let grid: Grid<()> = Grid::filled(12, 12, ());
            for cell in grid.cells() {
                for dir in 0..8 {
                    if grid.neighbor(cell, dir).is_some() {
                        let c: f64 = if rng.gen::<f64>() < 0.1 {
                            f64::INFINITY
                        } else {
                            rng.gen_range(0.2..10.0)
                        };
                        costs[(cell.y * 12 + cell.x) * 8 + dir] = c;
                    }
                }
            }
            let map = CostMap::from_costs(12, 12, costs).unwrap();
            let start = Cell::new(0, 0);
            let goal = Cell::new(11, 11);
            let oracle = dijkstra_cost(&map, start, goal);
            for mode in [HeuristicMode::Zero, HeuristicMode::EuclidOverUmax] {
                let out = astar(&hm, &map, start, goal, mode).unwrap();
                match (out.path(), oracle) {
                    (Some(p), Some(d)) => {
                        assert_eq!(p.total_cost, d, "case {case}: optimal cost mismatch")
                    }
                    (None, None) => {}
                    (got, want) => panic!("case {case}: solvability mismatch {got:?} vs {want:?}"),
                }
            }
        }
    }

    #[test]
    fn enclosed_goal_has_no_solution() {
        let flat = HeightMap::from_parts(4, 4, 1.0, vec![0.0; 16]).unwrap();
        let mut costs = vec![1.0; 16 * 8];
        // Make every edge *into* the goal corner infinite.
        let grid: Grid<()> = Grid::filled(4, 4, ());
        let goal = Cell::new(3, 3);
        for cell in grid.cells() {
            for dir in 0..8 {
                if grid.neighbor(cell, dir) == Some(goal) {
                    costs[(cell.y * 4 + cell.x) * 8 + dir] = f64::INFINITY;
                }
            }
        }
        let map = CostMap::from_costs(4, 4, costs).unwrap();
        let out = astar(&flat, &map, Cell::new(0, 0), goal, HeuristicMode::Zero).unwrap();
        assert_eq!(out, PlanOutcome::NoSolution);
    }

    #[test]
    fn path_vertices_are_adjacent_and_anchored() {
        let (inst, models) = tiny_world();
        let likelihoods = synthetic_classify(&inst, 0.95, 1, 0).unwrap();
        let table = EdgePredictionTable::build(&inst.heightmap, &models);
        let risk = RiskConfig { alpha: 0.6, mc_samples: 300, ..Default::default() };
        let map =
            build_cost_map(&inst.heightmap, &table, &likelihoods, &risk, RiskMetric::Cvar, 0.1)
                .unwrap();
        let start = Cell::new(1, 1);
        let goal = Cell::new(10, 10);
        let out = astar(&inst.heightmap, &map, start, goal, HeuristicMode::Zero).unwrap();
        let path = out.path().expect("solvable tiny world");
        assert_eq!(path.vertices.first(), Some(&start));
        assert_eq!(path.vertices.last(), Some(&goal));
        let mut sum = 0.0;
        for pair in path.vertices.windows(2) {
            let dir = pair[0].direction_to(pair[1]).expect("adjacent vertices");
            sum += map.cost(pair[0], dir);
        }
        assert!((sum - path.total_cost).abs() < 1e-9);
    }

    #[test]
    fn cost_map_raster_exports_eight_planes() {
        let map = CostMap::from_costs(2, 2, vec![1.5; 32]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cost.f32");
        map.save(&path).unwrap();
        let back = crate::grid::read_f32_raster(&path, 32).unwrap();
        assert!(back.iter().all(|&v| v == 1.5));
    }
}
