//! Benchmark harness: seeded instances, an exhaustive oracle, an exact
//! full-Pareto label-correcting baseline, and slack sweeps.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apulse::{self, SolverConfig, BUDGET_TOLERANCE};
use crate::error::{Error, Result};
use crate::planner::{MissionRequest, Mode, PreparedScenario, Scenario};
use crate::risk::{DetectionParams, Impact, SparsePrior, ThreatSpec};
use crate::terrain::{build_graph, Cell, CostGraph, MobilityModel, NodeId, TerrainGrid};

pub const BENCH_CELL_SIZE_M: f64 = 25.0;

/// Enumeration refuses graphs larger than this unless told otherwise.
pub const DEFAULT_ORACLE_MAX_NODES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchInstance {
    pub rows: usize,
    pub cols: usize,
    pub n_threats: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub start: Cell,
    pub goal: Cell,
    /// Minimum achievable travel time, seconds.
    pub t_min_s: f64,
}

impl BenchInstance {
    /// `(1 + alpha_b) * t_min`.
    pub fn budget(&self, alpha_b: f64) -> f64 {
        (1.0 + alpha_b) * self.t_min_s
    }

    pub fn prepare(&self) -> Result<PreparedScenario> {
        self.scenario.prepare(0.0)
    }

    pub fn request(&self, alpha_b: f64) -> MissionRequest {
        MissionRequest::new(
            self.start,
            self.goal,
            Mode::SafeWithinTime {
                budget_s: self.budget(alpha_b),
            },
        )
    }

    /// Stable hash of the serialized instance.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::hash::DefaultHasher::new();
        serde_json::to_string(self)
            .expect("serializable")
            .hash(&mut h);
        h.finish()
    }
}

fn smooth_elevation(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.05..0.25),
                rng.gen_range(0.05..0.25),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let z: f64 = waves
                .iter()
                .map(|&(a, fr, fc, ph)| a * (fr * r as f64 + fc * c as f64 + ph).sin())
                .sum();
            out.push(z);
        }
    }
    out
}

fn patchy_land_cover(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<u16> {
    let sites: Vec<(f64, f64, u16)> = (0..(rows * cols / 40).clamp(3, 64))
        .map(|_| {
            (
                rng.gen_range(0.0..rows as f64),
                rng.gen_range(0.0..cols as f64),
                rng.gen_range(0..4),
            )
        })
        .collect();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (_, _, class) = sites
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 - r as f64).powi(2) + (a.1 - c as f64).powi(2);
                    let db = (b.0 - r as f64).powi(2) + (b.1 - c as f64).powi(2);
                    da.total_cmp(&db)
                })
                .copied()
                .expect("at least one site");
            out.push(class);
        }
    }
    out
}

fn random_threat(rng: &mut ChaCha8Rng, id: usize, rows: usize, cols: usize) -> Result<ThreatSpec> {
    let span = rows.min(cols) as f64;
    let range_cells = rng.gen_range(0.12..0.3) * span;
    let range_m = range_cells.max(1.5) * BENCH_CELL_SIZE_M;
    let detection =
        DetectionParams::new(range_m, rng.gen_range(0.2..0.6), rng.gen_range(1.0..3.0))?;
    let center = Cell::new(rng.gen_range(0..rows), rng.gen_range(0..cols));
    let spread = rng.gen_range(0.0..2.5) * BENCH_CELL_SIZE_M;
    let prior = SparsePrior::disk(center, spread, rows, cols, BENCH_CELL_SIZE_M);
    ThreatSpec::new(
        format!("T{id}"),
        detection,
        Impact::Scalar(rng.gen_range(0.5..1.0)),
        prior,
    )
}

/// Deterministic random instance: smooth terrain, patchy land cover, a few
/// obstacles and `n_threats` threats with small disk priors. Start and goal
/// are opposite corners.
pub fn generate_instance(
    rows: usize,
    cols: usize,
    n_threats: usize,
    seed: u64,
) -> Result<BenchInstance> {
    if rows < 2 || cols < 2 {
        return Err(Error::validation(
            "rows/cols",
            "benchmark grids need at least 2x2 cells",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elevation = smooth_elevation(&mut rng, rows, cols);
    let land_cover = patchy_land_cover(&mut rng, rows, cols);
    let start = Cell::new(0, 0);
    let goal = Cell::new(rows - 1, cols - 1);
    let mut obstacles: Vec<bool> = (0..rows * cols).map(|_| rng.gen_bool(0.06)).collect();
    obstacles[0] = false;
    obstacles[rows * cols - 1] = false;
    let threats = (0..n_threats)
        .map(|i| random_threat(&mut rng, i, rows, cols))
        .collect::<Result<Vec<_>>>()?;

    let mobility = MobilityModel::default();
    let mut terrain = TerrainGrid::new(
        rows,
        cols,
        BENCH_CELL_SIZE_M,
        [0.0, 0.0],
        elevation,
        land_cover,
        obstacles,
    )?;
    let mut t_min = min_time(&terrain, &mobility, start, goal)?;
    if t_min.is_none() {
        terrain = TerrainGrid::new(
            rows,
            cols,
            BENCH_CELL_SIZE_M,
            [0.0, 0.0],
            terrain.elevations().to_vec(),
            terrain.land_covers().to_vec(),
            vec![false; rows * cols],
        )?;
        t_min = min_time(&terrain, &mobility, start, goal)?;
    }
    let t_min_s = t_min.ok_or(Error::NoPath {
        start: start.into(),
        goal: goal.into(),
    })?;
    Ok(BenchInstance {
        rows,
        cols,
        n_threats,
        seed,
        scenario: Scenario::new(terrain, mobility, threats)?,
        start,
        goal,
        t_min_s,
    })
}

/// Narrow instance (3 rows, up to 20 columns) whose simple paths stay
/// enumerable while being longer than the dense oracle grids.
pub fn generate_corridor(seed: u64) -> Result<BenchInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_441d_0000);
    let cols = rng.gen_range(10..=20);
    let n_threats = rng.gen_range(1..=3);
    generate_instance(3, cols, n_threats, rng.gen())
}

fn min_time(
    grid: &TerrainGrid,
    mobility: &MobilityModel,
    start: Cell,
    goal: Cell,
) -> Result<Option<f64>> {
    let graph = build_graph(grid, mobility)?;
    let (Some(s), Some(g)) = (graph.node(start), graph.node(goal)) else {
        return Ok(None);
    };
    let d = reverse_dijkstra(&graph, g, |_, e| e.time);
    Ok(d[s.index()].is_finite().then_some(d[s.index()]))
}

/// Single-cost distances to `target` along reversed edges. `cost(u, e)` is
/// the cost of traversing `e` out of `u`.
fn reverse_dijkstra(
    graph: &CostGraph,
    target: NodeId,
    cost: impl Fn(NodeId, &crate::terrain::Edge) -> f64,
) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.node_count()];
    let mut heap = BinaryHeap::new();
    dist[target.index()] = 0.0;
    heap.push(Reverse((OrdF64(0.0), target.0)));
    while let Some(Reverse((OrdF64(d), v))) = heap.pop() {
        let v = NodeId(v);
        if d > dist[v.index()] {
            continue;
        }
        // every edge u -> v has a mirrored v -> u in the adjacency of v
        for back in graph.edges(v) {
            let u = back.to;
            let Some(e) = graph.edge(u, v) else { continue };
            let nd = d + cost(u, e);
            if nd < dist[u.index()] {
                dist[u.index()] = nd;
                heap.push(Reverse((OrdF64(nd), u.0)));
            }
        }
    }
    dist
}

#[derive(Clone, Copy)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub log_risk: f64,
    pub time_s: f64,
    pub path: Vec<Cell>,
    pub paths_visited: u64,
}

/// Exact constrained optimum by depth-first enumeration of simple paths,
/// pruned by time and risk lower bounds. `Ok(None)` when no path meets the
/// budget.
pub fn oracle_optimal(
    graph: &CostGraph,
    start: Cell,
    goal: Cell,
    budget_s: f64,
    max_nodes: usize,
) -> Result<Option<OracleResult>> {
    if graph.node_count() > max_nodes {
        return Err(Error::OracleTooLarge {
            nodes: graph.node_count(),
            limit: max_nodes,
        });
    }
    let lookup = |c: Cell, field: &str| {
        graph
            .node(c)
            .ok_or_else(|| Error::validation(field, format!("cell {c:?} is not traversable")))
    };
    let (s, g) = (lookup(start, "start")?, lookup(goal, "goal")?);
    let lb_time = reverse_dijkstra(graph, g, |_, e| e.time);
    let lb_risk = reverse_dijkstra(graph, g, |_, e| graph.log_risk(e.to));
    if lb_time[s.index()] > budget_s + BUDGET_TOLERANCE {
        return Ok(None);
    }

    struct Search<'a> {
        graph: &'a CostGraph,
        goal: NodeId,
        budget: f64,
        lb_time: Vec<f64>,
        lb_risk: Vec<f64>,
        on_path: Vec<bool>,
        path: Vec<NodeId>,
        best: Option<(f64, f64, Vec<NodeId>)>,
        visited: u64,
    }

    impl Search<'_> {
        fn best_risk(&self) -> f64 {
            self.best.as_ref().map_or(f64::INFINITY, |b| b.0)
        }

        fn dfs(&mut self, u: NodeId, time: f64, risk: f64) {
            self.visited += 1;
            if u == self.goal {
                if risk < self.best_risk() {
                    self.best = Some((risk, time, self.path.clone()));
                }
                return;
            }
            let mut next: Vec<(f64, NodeId, f64, f64)> = self
                .graph
                .edges(u)
                .iter()
                .filter(|e| !self.on_path[e.to.index()])
                .map(|e| {
                    let v = e.to;
                    let t = time + e.time;
                    let r = risk + self.graph.log_risk(v);
                    (r + self.lb_risk[v.index()], v, t, r)
                })
                .collect();
            next.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1 .0.cmp(&b.1 .0)));
            for (bound, v, t, r) in next {
                if t + self.lb_time[v.index()] > self.budget + BUDGET_TOLERANCE {
                    continue;
                }
                if bound >= self.best_risk() {
                    continue;
                }
                self.on_path[v.index()] = true;
                self.path.push(v);
                self.dfs(v, t, r);
                self.path.pop();
                self.on_path[v.index()] = false;
            }
        }
    }

    let mut search = Search {
        graph,
        goal: g,
        budget: budget_s,
        lb_time,
        lb_risk,
        on_path: vec![false; graph.node_count()],
        path: vec![s],
        best: None,
        visited: 0,
    };
    search.on_path[s.index()] = true;
    search.dfs(s, 0.0, 0.0);
    Ok(search.best.map(|(log_risk, time_s, nodes)| OracleResult {
        log_risk,
        time_s,
        path: nodes.into_iter().map(|n| graph.cell(n)).collect(),
        paths_visited: search.visited,
    }))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub path: Vec<Cell>,
    pub log_risk: f64,
    pub time_s: f64,
    pub labels_created: u64,
    pub labels_processed: u64,
    pub timed_out: bool,
}

struct BLabel {
    node: u32,
    parent: u32,
    time: f64,
    risk: f64,
    alive: bool,
}

/// Exact label-correcting search keeping the full Pareto front of
/// (time, log-risk) labels at every node, FIFO order, with only the
/// time-feasibility bound as pruning. Returns the best goal label found when
/// the timeout expires, flagged `timed_out`.
pub fn label_correcting(
    graph: &CostGraph,
    start: NodeId,
    goal: NodeId,
    budget_s: f64,
    timeout: Option<Duration>,
) -> Result<BaselineOutcome> {
    let started = Instant::now();
    let lb_time = reverse_dijkstra(graph, goal, |_, e| e.time);
    if lb_time[start.index()] > budget_s + BUDGET_TOLERANCE {
        return Err(Error::InfeasibleBudget {
            budget_s,
            t_min_s: lb_time[start.index()],
        });
    }
    let mut labels = vec![BLabel {
        node: start.0,
        parent: u32::MAX,
        time: 0.0,
        risk: 0.0,
        alive: true,
    }];
    let mut fronts: Vec<Vec<u32>> = vec![Vec::new(); graph.node_count()];
    fronts[start.index()].push(0);
    let mut queue = VecDeque::from([0u32]);
    let mut out = BaselineOutcome::default();

    while let Some(id) = queue.pop_front() {
        if !labels[id as usize].alive {
            continue;
        }
        out.labels_processed += 1;
        if out.labels_processed % 1024 == 0 && timeout.is_some_and(|t| started.elapsed() > t) {
            out.timed_out = true;
            break;
        }
        let (u, time, risk) = {
            let l = &labels[id as usize];
            (NodeId(l.node), l.time, l.risk)
        };
        if u == goal {
            continue;
        }
        for e in graph.edges(u) {
            let v = e.to;
            let t = time + e.time;
            if t + lb_time[v.index()] > budget_s + BUDGET_TOLERANCE {
                continue;
            }
            let r = risk + graph.log_risk(v);
            let front = &mut fronts[v.index()];
            if front.iter().any(|&o| {
                let o = &labels[o as usize];
                o.time <= t && o.risk <= r
            }) {
                continue;
            }
            front.retain(|&o| {
                let l = &mut labels[o as usize];
                let dominated = t <= l.time && r <= l.risk;
                if dominated {
                    l.alive = false;
                }
                !dominated
            });
            let new_id = labels.len() as u32;
            labels.push(BLabel {
                node: v.0,
                parent: id,
                time: t,
                risk: r,
                alive: true,
            });
            fronts[v.index()].push(new_id);
            queue.push_back(new_id);
            out.labels_created += 1;
        }
    }

    let best = fronts[goal.index()]
        .iter()
        .copied()
        .filter(|&o| labels[o as usize].alive)
        .min_by(|&a, &b| {
            let (a, b) = (&labels[a as usize], &labels[b as usize]);
            a.risk.total_cmp(&b.risk).then(a.time.total_cmp(&b.time))
        });
    let Some(mut id) = best else {
        if out.timed_out {
            return Err(Error::ResourceExhausted {
                reason: "timeout".into(),
            });
        }
        return Err(Error::NoPath {
            start: graph.cell(start).into(),
            goal: graph.cell(goal).into(),
        });
    };
    out.log_risk = labels[id as usize].risk;
    out.time_s = labels[id as usize].time;
    let mut path = Vec::new();
    loop {
        let l = &labels[id as usize];
        path.push(graph.cell(NodeId(l.node)));
        if l.parent == u32::MAX {
            break;
        }
        id = l.parent;
    }
    path.reverse();
    out.path = path;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Apulse,
    /// Full-Pareto label correcting, see [`label_correcting`].
    LabelCorrecting,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Apulse => "apulse",
            SolverKind::LabelCorrecting => "label_correcting",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apulse" => Ok(SolverKind::Apulse),
            "label_correcting" | "baseline" => Ok(SolverKind::LabelCorrecting),
            other => Err(Error::validation(
                "solvers",
                format!("unknown solver `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Square grid side lengths.
    pub sizes: Vec<usize>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Threats per instance; `None` scales with the grid side.
    pub n_threats: Option<usize>,
    pub timeout_s: f64,
    pub oracle_max_nodes: usize,
    pub solvers: Vec<SolverKind>,
    /// Concurrent sweep cells; 1 keeps wall times undisturbed.
    pub workers: usize,
    pub solver: SolverConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sizes: vec![32, 64, 128, 256],
            alphas: vec![0.1, 0.25, 0.5],
            seeds: vec![1],
            n_threats: None,
            timeout_s: 60.0,
            oracle_max_nodes: DEFAULT_ORACLE_MAX_NODES,
            solvers: vec![SolverKind::Apulse, SolverKind::LabelCorrecting],
            workers: 1,
            solver: SolverConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.iter().any(|&s| s < 2) {
            return Err(Error::validation("sizes", "every size must be >= 2"));
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::validation("alphas", "must be finite and >= 0"));
        }
        if !(self.timeout_s > 0.0) {
            return Err(Error::validation("timeout_s", "must be positive"));
        }
        if self.solvers.is_empty() {
            return Err(Error::validation(
                "solvers",
                "at least one solver is required",
            ));
        }
        self.solver.validate()
    }

    fn threats_for(&self, size: usize) -> usize {
        self.n_threats.unwrap_or((size / 8).clamp(2, 24))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Solved,
    Timeout,
    Infeasible,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub seed: u64,
    pub alpha_b: f64,
    pub solver: SolverKind,
    pub status: RunStatus,
    pub nodes: usize,
    pub t_min_s: f64,
    pub budget_s: f64,
    pub log_risk: Option<f64>,
    pub time_s: Option<f64>,
    pub expansions: u64,
    pub pruned_feasibility: u64,
    pub pruned_optimality: u64,
    pub pruned_dominance: u64,
    pub oracle_log_risk: Option<f64>,
    /// Relative gap to the oracle optimum.
    pub gap: Option<f64>,
    pub wall_ms: f64,
    pub budget_violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub baseline: String,
    pub rows: Vec<SweepRow>,
}

/// Relative gap tolerated before a run counts as non-optimal.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-9;

fn relative_gap(found: f64, optimum: f64) -> f64 {
    if optimum.abs() < 1e-12 {
        (found - optimum).abs()
    } else {
        (found - optimum) / optimum
    }
}

fn run_cell(
    inst: &BenchInstance,
    prepared: &PreparedScenario,
    alpha: f64,
    solver: SolverKind,
    cfg: &SweepConfig,
) -> SweepRow {
    let graph = &prepared.graph;
    let budget = inst.budget(alpha);
    let (s, g) = (
        graph.node(inst.start).expect("start is traversable"),
        graph.node(inst.goal).expect("goal is traversable"),
    );
    let mut row = SweepRow {
        size: inst.rows,
        seed: inst.seed,
        alpha_b: alpha,
        solver,
        status: RunStatus::Solved,
        nodes: graph.node_count(),
        t_min_s: inst.t_min_s,
        budget_s: budget,
        log_risk: None,
        time_s: None,
        expansions: 0,
        pruned_feasibility: 0,
        pruned_optimality: 0,
        pruned_dominance: 0,
        oracle_log_risk: None,
        gap: None,
        wall_ms: 0.0,
        budget_violated: false,
    };
    let started = Instant::now();
    let outcome = match solver {
        SolverKind::Apulse => {
            let config = SolverConfig {
                timeout_s: Some(cfg.timeout_s),
                ..cfg.solver.clone()
            };
            apulse::solve(graph, s, g, budget, &config).map(|o| {
                row.expansions = o.stats.expansions;
                row.pruned_feasibility = o.stats.pruned_feasibility;
                row.pruned_optimality = o.stats.pruned_optimality;
                row.pruned_dominance = o.stats.pruned_dominance;
                (o.totals.log_risk, o.totals.time, o.anytime)
            })
        }
        SolverKind::LabelCorrecting => label_correcting(
            graph,
            s,
            g,
            budget,
            Some(Duration::from_secs_f64(cfg.timeout_s)),
        )
        .map(|o| {
            row.expansions = o.labels_processed;
            (o.log_risk, o.time_s, o.timed_out)
        }),
    };
    row.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((risk, time, stopped)) => {
            row.log_risk = Some(risk);
            row.time_s = Some(time);
            row.budget_violated = time > budget + BUDGET_TOLERANCE;
            if stopped {
                row.status = RunStatus::Timeout;
            }
        }
        Err(Error::ResourceExhausted { .. }) => row.status = RunStatus::Timeout,
        Err(Error::InfeasibleBudget { .. } | Error::NoPath { .. }) => {
            row.status = RunStatus::Infeasible
        }
        Err(_) => row.status = RunStatus::Failed,
    }
    if graph.node_count() <= cfg.oracle_max_nodes {
        if let Ok(Some(o)) =
            oracle_optimal(graph, inst.start, inst.goal, budget, cfg.oracle_max_nodes)
        {
            row.oracle_log_risk = Some(o.log_risk);
            row.gap = row.log_risk.map(|r| relative_gap(r, o.log_risk));
        }
    }
    row
}

/// Runs every (size, seed, alpha_b, solver) cell. Failures are recorded as
/// rows rather than returned.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let mut instances = Vec::new();
    for &size in &config.sizes {
        for &seed in &config.seeds {
            let inst = generate_instance(size, size, config.threats_for(size), seed)?;
            let prepared = inst.prepare()?;
            instances.push((inst, prepared));
        }
    }
    let mut cells = Vec::new();
    for (i, _) in instances.iter().enumerate() {
        for &alpha in &config.alphas {
            for &solver in &config.solvers {
                cells.push((i, alpha, solver));
            }
        }
    }
    let run = |&(i, alpha, solver): &(usize, f64, SolverKind)| {
        let (inst, prepared) = &instances[i];
        run_cell(inst, prepared, alpha, solver, config)
    };
    let rows = if config.workers <= 1 {
        cells.iter().map(run).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Domain(e.to_string()))?
            .install(|| cells.par_iter().map(run).collect())
    };
    Ok(SweepReport {
        config: config.clone(),
        baseline: "exact label-correcting, full (time, log-risk) Pareto labels, FIFO, time-feasibility pruning only".into(),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.9}")).unwrap_or_default()
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "size,seed,alpha_b,solver,status,nodes,t_min_s,budget_s,log_risk,time_s,expansions,\
             pruned_feasibility,pruned_optimality,pruned_dominance,oracle_log_risk,gap,wall_ms\n",
        );
        for r in &self.rows {
            let status = serde_json::to_value(r.status).expect("serializable");
            writeln!(
                s,
                "{},{},{},{},{},{},{:.6},{:.6},{},{},{},{},{},{},{},{},{:.3}",
                r.size,
                r.seed,
                r.alpha_b,
                r.solver.name(),
                status.as_str().unwrap_or_default(),
                r.nodes,
                r.t_min_s,
                r.budget_s,
                opt(r.log_risk),
                opt(r.time_s),
                r.expansions,
                r.pruned_feasibility,
                r.pruned_optimality,
                r.pruned_dominance,
                opt(r.oracle_log_risk),
                opt(r.gap),
                r.wall_ms
            )
            .expect("writing to a string");
        }
        s
    }

    /// Mean wall time per (size, alpha_b, solver), ms; `None` if any run timed out.
    pub fn mean_wall_ms(&self, size: usize, alpha: f64, solver: SolverKind) -> Option<f64> {
        let runs: Vec<&SweepRow> = self
            .rows
            .iter()
            .filter(|r| r.size == size && r.alpha_b == alpha && r.solver == solver)
            .collect();
        if runs.is_empty() || runs.iter().any(|r| r.status == RunStatus::Timeout) {
            return None;
        }
        Some(runs.iter().map(|r| r.wall_ms).sum::<f64>() / runs.len() as f64)
    }

    /// Runtime table: one row per grid size, one column per (alpha_b, solver);
    /// "timeout" marks a size where every run timed out.
    pub fn runtime_table(&self) -> String {
        let cfg = &self.config;
        let mut s = format!("{:>10}", "grid");
        for a in &cfg.alphas {
            for solver in &cfg.solvers {
                s += &format!(" {:>22}", format!("{} a={a}", solver.name()));
            }
        }
        s.push('\n');
        for &size in &cfg.sizes {
            s += &format!("{:>10}", format!("{size}x{size}"));
            for &a in &cfg.alphas {
                for &solver in &cfg.solvers {
                    let cell = match self.mean_wall_ms(size, a, solver) {
                        Some(ms) => format!("{:.1} ms", ms),
                        None => "timeout".to_string(),
                    };
                    s += &format!(" {cell:>22}");
                }
            }
            s.push('\n');
        }
        s
    }

    /// (optimal, total) over runs of `solver` that have an oracle value.
    pub fn optimality_counts(&self, solver: SolverKind) -> (usize, usize) {
        let with_oracle: Vec<&SweepRow> = self
            .rows
            .iter()
            .filter(|r| r.solver == solver && r.oracle_log_risk.is_some())
            .collect();
        let optimal = with_oracle
            .iter()
            .filter(|r| r.gap.is_some_and(|g| g.abs() <= OPTIMALITY_TOLERANCE))
            .count();
        (optimal, with_oracle.len())
    }

    pub fn optimality_table(&self) -> String {
        let mut s = format!("{:<18} {:>10} {:>8}\n", "solver", "optimal", "total");
        for &solver in &self.config.solvers {
            let (n, total) = self.optimality_counts(solver);
            s += &format!("{:<18} {:>10} {:>8}\n", solver.name(), n, total);
        }
        s
    }

    pub fn budget_violations(&self) -> usize {
        self.rows.iter().filter(|r| r.budget_violated).count()
    }
}

/// Constructed 40x40 scenario: a strong threat sits on the straight line
/// between start and goal, and a risk-free detour exists to the north.
pub fn demo_scenario() -> Result<(Scenario, MissionRequest)> {
    let n = 40;
    let mut grid = TerrainGrid::flat(n, n, BENCH_CELL_SIZE_M, 0)?;
    for r in 0..n {
        for c in 0..n {
            let cell = Cell::new(r, c);
            let dr = r as f64 - 30.0;
            let dc = c as f64 - 12.0;
            grid = grid.with_elevation(cell, 12.0 * (-(dr * dr + dc * dc) / 60.0).exp());
            if (26..34).contains(&c) && (2..12).contains(&r) {
                grid = grid.with_land_cover(cell, 2);
            }
            if (14..18).contains(&r) && (6..10).contains(&c) {
                grid = grid.with_land_cover(cell, 1);
            }
        }
    }
    for r in 24..36 {
        grid = grid.with_obstacle(Cell::new(r, 24), true);
    }
    let threats = vec![
        ThreatSpec::new(
            "SAM-1",
            DetectionParams::new(250.0, 0.4, 2.0)?,
            Impact::Scalar(0.9),
            SparsePrior::disk(Cell::new(20, 20), 30.0, n, n, BENCH_CELL_SIZE_M),
        )?,
        ThreatSpec::new(
            "OBS-2",
            DetectionParams::new(150.0, 0.3, 1.5)?,
            Impact::Scalar(0.6),
            SparsePrior::dirac(Cell::new(30, 32)),
        )?,
    ];
    let scenario = Scenario::new(grid, MobilityModel::default(), threats)?;
    let request = MissionRequest::new(
        Cell::new(20, 1),
        Cell::new(20, 38),
        Mode::Balanced { alpha: 0.5 },
    );
    Ok((scenario, request))
}
