//! Commander-facing mission modes over a sealed cost graph.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::apulse::{self, precompute_heuristics, HeuristicMaps, SolverConfig, SolverStats};
use crate::error::{Error, Result};
use crate::risk::{RiskField, ThreatSpec};
use crate::terrain::{build_graph, Cell, CostGraph, MobilityModel, NodeId, TerrainGrid};

/// Risk thresholds separating the low / medium / high exposure bins.
pub const EXPOSURE_BINS: [f64; 2] = [0.15, 0.5];

pub const DEFAULT_REPLAN_SLACK: f64 = 0.25;

/// Planning objective selected by the commander.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum Mode {
    /// Weighted trade-off: 1 is fastest, 0 is safest.
    Balanced { alpha: f64 },
    /// Fastest route whose every cell stays at or below the risk ceiling.
    FastWithinRisk { max_risk: f64 },
    /// Safest route arriving within the time budget.
    SafeWithinTime { budget_s: f64 },
}

impl Mode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Mode::Balanced { alpha } if !(0.0..=1.0).contains(&alpha) => Err(Error::validation(
                "mode.alpha",
                format!("must lie in [0, 1], got {alpha}"),
            )),
            Mode::FastWithinRisk { max_risk } if !(0.0..=1.0).contains(&max_risk) => {
                Err(Error::validation(
                    "mode.max_risk",
                    format!("must lie in [0, 1], got {max_risk}"),
                ))
            }
            Mode::SafeWithinTime { budget_s } if !(budget_s > 0.0) => Err(Error::validation(
                "mode.budget_s",
                format!("must be positive, got {budget_s}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionRequest {
    pub start: Cell,
    pub goal: Cell,
    pub mode: Mode,
    #[serde(default)]
    pub formation_width_m: f64,
    #[serde(default = "default_slack")]
    pub replan_slack: f64,
}

fn default_slack() -> f64 {
    DEFAULT_REPLAN_SLACK
}

impl MissionRequest {
    pub fn new(start: Cell, goal: Cell, mode: Mode) -> Self {
        MissionRequest {
            start,
            goal,
            mode,
            formation_width_m: 0.0,
            replan_slack: DEFAULT_REPLAN_SLACK,
        }
    }

    pub fn with_formation_width(mut self, width_m: f64) -> Self {
        self.formation_width_m = width_m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.start == self.goal {
            return Err(Error::validation("goal", "start and goal must differ"));
        }
        self.mode.validate()?;
        if !(self.formation_width_m >= 0.0 && self.formation_width_m.is_finite()) {
            return Err(Error::validation(
                "formation_width_m",
                "must be finite and >= 0",
            ));
        }
        if !(self.replan_slack >= 0.0 && self.replan_slack.is_finite()) {
            return Err(Error::validation("replan_slack", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreatApproach {
    pub threat_id: String,
    pub distance_m: f64,
    pub cell: Cell,
}

/// Distance travelled per risk band, meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RiskExposure {
    pub low_m: f64,
    pub medium_m: f64,
    pub high_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fallback {
    pub requested_ceiling: f64,
    pub effective_ceiling: f64,
}

// Kpis is flattened into PlanResult, and flattened maps only hand over
// string keys, so the class numbers are parsed here.
fn class_keys<'de, D: serde::Deserializer<'de>>(
    de: D,
) -> std::result::Result<BTreeMap<u16, f64>, D::Error> {
    let raw = BTreeMap::<String, f64>::deserialize(de)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse().map(|k| (k, v)).map_err(|_| {
                serde::de::Error::custom(format!("land-cover class `{k}` is not a u16"))
            })
        })
        .collect()
}

/// Path metrics recomputed from the graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kpis {
    pub total_distance_m: f64,
    pub total_time_s: f64,
    pub total_log_risk: f64,
    pub survival_probability: f64,
    pub max_cell_risk: f64,
    pub closest_approach: Vec<ThreatApproach>,
    pub exposure: RiskExposure,
    /// Distance per land-cover class of the cells entered, meters.
    #[serde(deserialize_with = "class_keys")]
    pub terrain_composition: BTreeMap<u16, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub path: Vec<Cell>,
    #[serde(flatten)]
    pub kpis: Kpis,
    pub mode: Mode,
    pub formation_width_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<Fallback>,
    #[serde(default)]
    pub fallback_used: bool,
    #[serde(default)]
    pub anytime: bool,
    pub solver_stats: SolverStats,
}

impl PlanResult {
    pub fn start(&self) -> Cell {
        self.path[0]
    }

    pub fn goal(&self) -> Cell {
        *self.path.last().expect("non-empty path")
    }
}

/// Fills every KPI for a path. The path must be connected in `graph`.
pub fn compute_kpis(
    grid: &TerrainGrid,
    graph: &CostGraph,
    threats: &[ThreatSpec],
    path: &[Cell],
) -> Result<Kpis> {
    let nodes = graph.path_nodes(path)?;
    let totals = graph.path_totals(&nodes);
    let mut exposure = RiskExposure::default();
    let mut composition = BTreeMap::new();
    let mut max_cell_risk = 0.0f64;
    for &n in &nodes {
        max_cell_risk = max_cell_risk.max(graph.risk(n));
    }
    for w in nodes.windows(2) {
        let e = graph.edge(w[0], w[1]).expect("validated");
        let r = graph.risk(w[1]);
        let bin = if r < EXPOSURE_BINS[0] {
            &mut exposure.low_m
        } else if r <= EXPOSURE_BINS[1] {
            &mut exposure.medium_m
        } else {
            &mut exposure.high_m
        };
        *bin += e.distance;
        *composition
            .entry(grid.land_cover(graph.cell(w[1])))
            .or_insert(0.0) += e.distance;
    }
    let closest_approach = threats
        .iter()
        .map(|t| {
            let [tx, ty] = t.prior.mean_location(grid);
            let (cell, d) = path
                .iter()
                .map(|&c| {
                    let [x, y] = grid.centroid(c);
                    (c, (x - tx).hypot(y - ty))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty path");
            ThreatApproach {
                threat_id: t.id.clone(),
                distance_m: d,
                cell,
            }
        })
        .collect();
    Ok(Kpis {
        total_distance_m: totals.distance,
        total_time_s: totals.time,
        total_log_risk: totals.log_risk,
        survival_probability: (-totals.log_risk).exp(),
        max_cell_risk,
        closest_approach,
        exposure,
        terrain_composition: composition,
    })
}

/// Everything a planner query reads: terrain, the risk-weighted graph and the threats.
#[derive(Clone, Copy)]
pub struct PlanContext<'a> {
    pub grid: &'a TerrainGrid,
    pub graph: &'a CostGraph,
    pub threats: &'a [ThreatSpec],
}

impl PlanContext<'_> {
    fn endpoints(&self, req: &MissionRequest) -> Result<(NodeId, NodeId)> {
        req.validate()?;
        let lookup = |cell: Cell, field: &str| {
            if !self.grid.contains(cell) {
                return Err(Error::validation(
                    field,
                    format!("cell {cell:?} is outside the grid"),
                ));
            }
            self.graph
                .node(cell)
                .ok_or_else(|| Error::validation(field, format!("cell {cell:?} is an obstacle")))
        };
        Ok((lookup(req.start, "start")?, lookup(req.goal, "goal")?))
    }

    fn finish(&self, req: &MissionRequest, route: Route) -> Result<PlanResult> {
        let path: Vec<Cell> = route.nodes.iter().map(|&n| self.graph.cell(n)).collect();
        let kpis = compute_kpis(self.grid, self.graph, self.threats, &path)?;
        Ok(PlanResult {
            path,
            kpis,
            mode: req.mode,
            formation_width_m: req.formation_width_m,
            fallback_used: route.fallback.is_some(),
            fallback: route.fallback,
            anytime: route.anytime,
            solver_stats: route.stats,
        })
    }
}

/// A solved route before KPI evaluation.
#[derive(Clone, Debug)]
pub struct Route {
    pub nodes: Vec<NodeId>,
    pub stats: SolverStats,
    pub anytime: bool,
    pub fallback: Option<Fallback>,
}

#[derive(Clone, Copy)]
struct Open {
    f: f64,
    g_time: f64,
    node: u32,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g_time.total_cmp(&self.g_time))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* with a consistent heuristic; equal costs resolved by lower accumulated
/// time, then lower node index.
fn astar(
    graph: &CostGraph,
    start: NodeId,
    goal: NodeId,
    mask: Option<&[bool]>,
    cost: impl Fn(&crate::terrain::Edge) -> f64,
    heuristic: impl Fn(NodeId) -> f64,
) -> Option<(Vec<NodeId>, SolverStats)> {
    let started = Instant::now();
    let n = graph.node_count();
    let mut g = vec![f64::INFINITY; n];
    let mut g_time = vec![f64::INFINITY; n];
    let mut parent = vec![u32::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut stats = SolverStats::default();
    g[start.index()] = 0.0;
    g_time[start.index()] = 0.0;
    heap.push(Open {
        f: heuristic(start),
        g_time: 0.0,
        node: start.0,
    });
    stats.labels_pushed = 1;
    while let Some(Open { node, .. }) = heap.pop() {
        stats.labels_popped += 1;
        let u = NodeId(node);
        if closed[u.index()] {
            continue;
        }
        closed[u.index()] = true;
        if u == goal {
            let mut nodes = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = NodeId(parent[cur.index()]);
                nodes.push(cur);
            }
            nodes.reverse();
            stats.wall_time = started.elapsed();
            return Some((nodes, stats));
        }
        stats.expansions += 1;
        for e in graph.edges(u) {
            let v = e.to;
            if closed[v.index()] || mask.is_some_and(|m| !m[v.index()]) {
                continue;
            }
            let cand = g[u.index()] + cost(e);
            let cand_time = g_time[u.index()] + e.time;
            let better =
                cand < g[v.index()] || (cand == g[v.index()] && cand_time < g_time[v.index()]);
            if better {
                g[v.index()] = cand;
                g_time[v.index()] = cand_time;
                parent[v.index()] = u.0;
                let h = heuristic(v);
                if h.is_finite() {
                    heap.push(Open {
                        f: cand + h,
                        g_time: cand_time,
                        node: v.0,
                    });
                    stats.labels_pushed += 1;
                }
            }
        }
    }
    None
}

/// Normalized weighted sum of time and log-risk. Time is scaled by the
/// minimum achievable time and risk by the minimum achievable risk (1 when
/// that is zero), so both terms are O(1) at the extremes.
pub fn route_balanced(
    graph: &CostGraph,
    start: NodeId,
    goal: NodeId,
    alpha: f64,
    heuristics: &HeuristicMaps,
) -> Result<Route> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::validation("mode.alpha", "must lie in [0, 1]"));
    }
    let t_ref = heuristics.time_to_goal(start);
    if !t_ref.is_finite() {
        return Err(no_path(graph, start, goal));
    }
    let t_ref = if t_ref > 0.0 { t_ref } else { 1.0 };
    let l_ref = match heuristics.risk_to_goal(start) {
        l if l > 0.0 => l,
        _ => 1.0,
    };
    let wt = alpha / t_ref;
    let wl = (1.0 - alpha) / l_ref;
    let (nodes, stats) = astar(
        graph,
        start,
        goal,
        None,
        |e| wt * e.time + wl * graph.log_risk(e.to),
        |v| wt * heuristics.time_to_goal(v) + wl * heuristics.risk_to_goal(v),
    )
    .ok_or_else(|| no_path(graph, start, goal))?;
    Ok(Route {
        nodes,
        stats,
        anytime: false,
        fallback: None,
    })
}

/// Minimum-time route through cells whose dilated risk is at most
/// `max_risk`; when none exists, the ceiling is raised to the smallest cell
/// risk value that reconnects start and goal.
pub fn route_fast_within_risk(
    graph: &CostGraph,
    start: NodeId,
    goal: NodeId,
    max_risk: f64,
    heuristics: &HeuristicMaps,
) -> Result<Route> {
    if !(0.0..=1.0).contains(&max_risk) {
        return Err(Error::validation("mode.max_risk", "must lie in [0, 1]"));
    }
    let mask_for =
        |ceiling: f64| -> Vec<bool> { graph.nodes().map(|n| graph.risk(n) <= ceiling).collect() };
    let connected = |ceiling: f64| -> bool {
        let mask = mask_for(ceiling);
        mask[start.index()] && mask[goal.index()] && reachable(graph, start, goal, &mask)
    };

    let mut ceiling = max_risk;
    let mut fallback = None;
    if !connected(max_risk) {
        let mut candidates: Vec<f64> = graph
            .risks()
            .iter()
            .copied()
            .filter(|&r| r > max_risk)
            .collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        let Some(&highest) = candidates.last() else {
            return Err(no_path(graph, start, goal));
        };
        if !connected(highest) {
            return Err(no_path(graph, start, goal));
        }
        // smallest candidate that connects; connectivity is monotone in the ceiling
        let idx = candidates.partition_point(|&c| !connected(c));
        ceiling = candidates[idx];
        fallback = Some(Fallback {
            requested_ceiling: max_risk,
            effective_ceiling: ceiling,
        });
    }

    let mask = mask_for(ceiling);
    let (nodes, stats) = astar(
        graph,
        start,
        goal,
        Some(&mask),
        |e| e.time,
        |v| heuristics.time_to_goal(v),
    )
    .ok_or_else(|| no_path(graph, start, goal))?;
    let worst = nodes.iter().map(|&n| graph.risk(n)).fold(0.0, f64::max);
    assert!(
        worst <= ceiling,
        "route cell risk {worst} exceeds ceiling {ceiling}"
    );
    Ok(Route {
        nodes,
        stats,
        anytime: false,
        fallback,
    })
}

/// Minimum-risk route within a time budget.
pub fn route_safe_within_time(
    graph: &CostGraph,
    start: NodeId,
    goal: NodeId,
    budget_s: f64,
    heuristics: &HeuristicMaps,
    config: &SolverConfig,
) -> Result<Route> {
    let out = apulse::solve_with(graph, start, goal, budget_s, config, heuristics, None)?;
    Ok(Route {
        nodes: out.nodes,
        stats: out.stats,
        anytime: out.anytime,
        fallback: None,
    })
}

fn reachable(graph: &CostGraph, start: NodeId, goal: NodeId, mask: &[bool]) -> bool {
    let mut seen = vec![false; graph.node_count()];
    let mut stack = vec![start];
    seen[start.index()] = true;
    while let Some(u) = stack.pop() {
        if u == goal {
            return true;
        }
        for e in graph.edges(u) {
            let v = e.to.index();
            if mask[v] && !seen[v] {
                seen[v] = true;
                stack.push(e.to);
            }
        }
    }
    false
}

fn no_path(graph: &CostGraph, start: NodeId, goal: NodeId) -> Error {
    Error::NoPath {
        start: graph.cell(start).into(),
        goal: graph.cell(goal).into(),
    }
}

pub fn plan_balanced(ctx: &PlanContext<'_>, req: &MissionRequest) -> Result<PlanResult> {
    plan(ctx, req, &SolverConfig::default())
}

pub fn plan_fast_within_risk(ctx: &PlanContext<'_>, req: &MissionRequest) -> Result<PlanResult> {
    plan(ctx, req, &SolverConfig::default())
}

pub fn plan_safe_within_time(
    ctx: &PlanContext<'_>,
    req: &MissionRequest,
    config: &SolverConfig,
) -> Result<PlanResult> {
    plan(ctx, req, config)
}

/// Dispatches on the request's mode.
pub fn plan(
    ctx: &PlanContext<'_>,
    req: &MissionRequest,
    config: &SolverConfig,
) -> Result<PlanResult> {
    let (start, goal) = ctx.endpoints(req)?;
    let heuristics = precompute_heuristics(ctx.graph, goal);
    let route = match req.mode {
        Mode::Balanced { alpha } => route_balanced(ctx.graph, start, goal, alpha, &heuristics)?,
        Mode::FastWithinRisk { max_risk } => {
            route_fast_within_risk(ctx.graph, start, goal, max_risk, &heuristics)?
        }
        Mode::SafeWithinTime { budget_s } => {
            route_safe_within_time(ctx.graph, start, goal, budget_s, &heuristics, config)?
        }
    };
    let result = ctx.finish(req, route)?;
    if let Mode::SafeWithinTime { budget_s } = req.mode {
        assert!(result.kpis.total_time_s <= budget_s + apulse::BUDGET_TOLERANCE);
    }
    Ok(result)
}

/// Terrain, mobility and threats: the immutable inputs of a planning session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub terrain: TerrainGrid,
    #[serde(default)]
    pub mobility: MobilityModel,
    #[serde(default)]
    pub threats: Vec<ThreatSpec>,
}

/// Risk field and risk-weighted graph for one formation width.
#[derive(Clone, Debug)]
pub struct PreparedScenario {
    pub field: RiskField,
    pub graph: CostGraph,
}

impl Scenario {
    pub fn new(
        terrain: TerrainGrid,
        mobility: MobilityModel,
        threats: Vec<ThreatSpec>,
    ) -> Result<Self> {
        let s = Scenario {
            terrain,
            mobility,
            threats,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.terrain.check_classes(&self.mobility)?;
        for t in &self.threats {
            t.check_against(&self.terrain)?;
        }
        Ok(())
    }

    pub fn prepare(&self, formation_width_m: f64) -> Result<PreparedScenario> {
        let base = build_graph(&self.terrain, &self.mobility)?;
        self.prepare_on(&base, formation_width_m)
    }

    /// Like [`Scenario::prepare`] but reusing an already built zero-risk graph.
    pub fn prepare_on(&self, base: &CostGraph, formation_width_m: f64) -> Result<PreparedScenario> {
        let field = RiskField::compute(&self.terrain, &self.threats, formation_width_m)?;
        let graph = field.apply_to(base)?;
        Ok(PreparedScenario { field, graph })
    }

    pub fn context<'a>(&'a self, prepared: &'a PreparedScenario) -> PlanContext<'a> {
        PlanContext {
            grid: &self.terrain,
            graph: &prepared.graph,
            threats: &self.threats,
        }
    }

    /// Full pipeline: risk field for the request's formation width, then the mode's solver.
    pub fn plan(&self, req: &MissionRequest, config: &SolverConfig) -> Result<PlanResult> {
        req.validate()?;
        let prepared = self.prepare(req.formation_width_m)?;
        plan(&self.context(&prepared), req, config)
    }
}

/// One sample of the along-route profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub index: usize,
    pub cell: Cell,
    pub x_m: f64,
    pub y_m: f64,
    pub altitude_m: f64,
    pub risk: f64,
    pub log_risk: f64,
    pub land_cover: u16,
    pub elapsed_s: f64,
    pub distance_m: f64,
}

/// Per-cell altitude, risk and cumulative time/distance along a path.
pub fn route_profile(
    grid: &TerrainGrid,
    graph: &CostGraph,
    path: &[Cell],
) -> Result<Vec<ProfilePoint>> {
    let nodes = graph.path_nodes(path)?;
    let mut elapsed = 0.0;
    let mut distance = 0.0;
    let mut out = Vec::with_capacity(nodes.len());
    for (i, &n) in nodes.iter().enumerate() {
        if i > 0 {
            let e = graph.edge(nodes[i - 1], n).expect("validated");
            elapsed += e.time;
            distance += e.distance;
        }
        let cell = graph.cell(n);
        let [x, y] = grid.centroid(cell);
        out.push(ProfilePoint {
            index: i,
            cell,
            x_m: x,
            y_m: y,
            altitude_m: grid.elevation(cell),
            risk: graph.risk(n),
            log_risk: graph.log_risk(n),
            land_cover: grid.land_cover(cell),
            elapsed_s: elapsed,
            distance_m: distance,
        });
    }
    Ok(out)
}
