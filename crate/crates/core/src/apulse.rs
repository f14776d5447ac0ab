//! Time-budgeted risk minimization (resource-constrained shortest path).
//!
//! Best-first label setting ordered by `g_risk + risk_to_goal`, with three
//! pruning rules applied to every label:
//!
//! * feasibility: `g_time + time_to_goal > budget`;
//! * optimality: the risk estimate is no better than the incumbent;
//! * dominance: another label reached the same node in the same time bucket
//!   with no more risk.
//!
//! Buckets are `floor(g_time / bucket_width)`. Coarse buckets trade a small,
//! bounded loss of optimality for far fewer labels; with buckets finer than
//! any difference between distinct path times the search is exact.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::{CostGraph, NodeId, PathTotals};

/// Absolute tolerance on every budget comparison, seconds.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

const NO_PARENT: u32 = u32::MAX;

/// Exact reverse shortest-path distances to the goal under each single cost.
#[derive(Clone, Debug)]
pub struct HeuristicMaps {
    pub goal: NodeId,
    pub time_to_goal: Vec<f64>,
    pub risk_to_goal: Vec<f64>,
    /// Successor of each node on its minimum-time route to the goal.
    next_on_fastest: Vec<u32>,
}

impl HeuristicMaps {
    pub fn time_to_goal(&self, node: NodeId) -> f64 {
        self.time_to_goal[node.index()]
    }

    pub fn risk_to_goal(&self, node: NodeId) -> f64 {
        self.risk_to_goal[node.index()]
    }

    /// Minimum-time route from `from` to the goal, if reachable.
    pub fn fastest_path(&self, from: NodeId) -> Option<Vec<NodeId>> {
        if !self.time_to_goal[from.index()].is_finite() {
            return None;
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != self.goal {
            cur = NodeId(self.next_on_fastest[cur.index()]);
            path.push(cur);
        }
        Some(path)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Scored {
    cost: f64,
    node: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn allowed(mask: Option<&[bool]>, node: NodeId) -> bool {
    mask.is_none_or(|m| m[node.index()])
}

/// Reverse Dijkstra toward `goal`; `step(v, edge_out_of_v)` is the cost of
/// moving from `edge.to` into `v`.
fn reverse_dijkstra(
    graph: &CostGraph,
    goal: NodeId,
    mask: Option<&[bool]>,
    step: impl Fn(NodeId, &crate::terrain::Edge) -> f64,
) -> (Vec<f64>, Vec<u32>) {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut next = vec![NO_PARENT; n];
    let mut heap = BinaryHeap::new();
    dist[goal.index()] = 0.0;
    heap.push(Scored {
        cost: 0.0,
        node: goal.0,
    });
    while let Some(Scored { cost, node }) = heap.pop() {
        let v = NodeId(node);
        if cost > dist[v.index()] {
            continue;
        }
        for e in graph.edges(v) {
            let u = e.to;
            if !allowed(mask, u) {
                continue;
            }
            let cand = cost + step(v, e);
            if cand < dist[u.index()] {
                dist[u.index()] = cand;
                next[u.index()] = v.0;
                heap.push(Scored {
                    cost: cand,
                    node: u.0,
                });
            }
        }
    }
    (dist, next)
}

pub fn precompute_heuristics(graph: &CostGraph, goal: NodeId) -> HeuristicMaps {
    precompute_heuristics_within(graph, goal, None)
}

/// Heuristics restricted to the nodes enabled in `mask` (all nodes when `None`).
/// Unreachable nodes get `+inf`.
pub fn precompute_heuristics_within(
    graph: &CostGraph,
    goal: NodeId,
    mask: Option<&[bool]>,
) -> HeuristicMaps {
    let ((time_to_goal, next_on_fastest), (risk_to_goal, _)) = rayon::join(
        || reverse_dijkstra(graph, goal, mask, |_, e| e.back_time),
        || reverse_dijkstra(graph, goal, mask, |v, _| graph.log_risk(v)),
    );
    HeuristicMaps {
        goal,
        time_to_goal,
        risk_to_goal,
        next_on_fastest,
    }
}

/// How labels arriving at the same node are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceRule {
    /// One label per (node, bucket): a label is dropped when its own bucket
    /// already holds one with no more risk.
    SameBucket,
    /// Additionally drops a label when an earlier bucket at the same node
    /// already holds one with no more risk.
    #[default]
    BucketPareto,
}

/// Switches for the three pruning rules; used to cross-check soundness.
///
/// With `feasibility` off the plain resource check `g_time <= budget` is still
/// applied. With `bucket_dominance` off, labels are compared on exact times
/// (strict Pareto dominance) instead of buckets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneSet {
    pub feasibility: bool,
    pub optimality: bool,
    pub bucket_dominance: bool,
}

impl Default for PruneSet {
    fn default() -> Self {
        PruneSet {
            feasibility: true,
            optimality: true,
            bucket_dominance: true,
        }
    }
}

impl PruneSet {
    pub const NONE: PruneSet = PruneSet {
        feasibility: false,
        optimality: false,
        bucket_dominance: false,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Target number of buckets across the budget; bucket width is `budget / target`.
    pub bucket_count_target: u32,
    /// Explicit bucket width in seconds, overriding the auto-tuned one.
    pub bucket_width_s: Option<f64>,
    pub timeout_s: Option<f64>,
    pub node_expansion_limit: Option<u64>,
    /// Start with the minimum-time route as incumbent when it fits the budget.
    pub seed_incumbent: bool,
    pub dominance: DominanceRule,
    pub prune: PruneSet,
    /// Enforce the graph's sustained-ascent rule on partial paths.
    pub enforce_ascent: bool,
    /// Ignore `risk_to_goal` and order labels by accumulated risk alone.
    pub zero_risk_heuristic: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            bucket_count_target: 8192,
            bucket_width_s: None,
            timeout_s: Some(600.0),
            node_expansion_limit: None,
            seed_incumbent: true,
            dominance: DominanceRule::default(),
            prune: PruneSet::default(),
            enforce_ascent: false,
            zero_risk_heuristic: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bucket_count_target == 0 {
            return Err(Error::validation("bucket_count_target", "must be >= 1"));
        }
        if let Some(w) = self.bucket_width_s {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::validation("bucket_width_s", "must be positive"));
            }
        }
        if let Some(t) = self.timeout_s {
            if !(t > 0.0) {
                return Err(Error::validation("timeout_s", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Bucket width auto-tuned to spread the budget over the target bucket count.
pub fn auto_bucket_width(budget_s: f64, config: &SolverConfig) -> f64 {
    budget_s / f64::from(config.bucket_count_target.max(1))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub labels_pushed: u64,
    pub labels_popped: u64,
    pub expansions: u64,
    pub pruned_feasibility: u64,
    pub pruned_optimality: u64,
    pub pruned_dominance: u64,
    pub pruned_ascent: u64,
    pub bucket_entries: u64,
    pub incumbent_updates: u64,
    pub bucket_width_s: f64,
    /// Excluded from serialized results so identical inputs give identical bytes.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub nodes: Vec<NodeId>,
    pub totals: PathTotals,
    pub stats: SolverStats,
    /// True when a limit stopped the search before the queue emptied.
    pub anytime: bool,
    /// Incumbent risk after each improvement, seed first.
    pub incumbent_trace: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Label {
    node: u32,
    parent: u32,
    g_risk: f64,
    g_time: f64,
}

#[derive(Clone, Copy)]
struct QueueEntry {
    f: f64,
    g_time: f64,
    node: u32,
    label: u32,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    // min-heap on (f, g_time, node, label)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g_time.total_cmp(&self.g_time))
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.label.cmp(&self.label))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best risk per (node, time bucket).
pub struct BucketTable {
    rule: DominanceRule,
    width: f64,
    same: HashMap<(u32, i64), f64>,
    /// Per node, entries sorted by bucket with strictly decreasing risk.
    fronts: Vec<Vec<(i64, f64)>>,
}

impl BucketTable {
    pub fn new(rule: DominanceRule, width: f64, nodes: usize) -> Self {
        BucketTable {
            rule,
            width,
            same: HashMap::new(),
            fronts: match rule {
                DominanceRule::SameBucket => Vec::new(),
                DominanceRule::BucketPareto => vec![Vec::new(); nodes],
            },
        }
    }

    pub fn bucket(&self, g_time: f64) -> i64 {
        (g_time / self.width).floor() as i64
    }

    pub fn len(&self) -> usize {
        match self.rule {
            DominanceRule::SameBucket => self.same.len(),
            DominanceRule::BucketPareto => self.fronts.iter().map(Vec::len).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records the label unless it is dominated; returns whether it was kept.
    pub fn offer(&mut self, node: u32, g_time: f64, g_risk: f64) -> bool {
        let b = self.bucket(g_time);
        match self.rule {
            DominanceRule::SameBucket => match self.same.get_mut(&(node, b)) {
                Some(best) if *best <= g_risk => false,
                Some(best) => {
                    *best = g_risk;
                    true
                }
                None => {
                    self.same.insert((node, b), g_risk);
                    true
                }
            },
            DominanceRule::BucketPareto => {
                let front = &mut self.fronts[node as usize];
                let pos = front.partition_point(|&(fb, _)| fb <= b);
                if pos > 0 && front[pos - 1].1 <= g_risk {
                    return false;
                }
                // entries at or after bucket b with risk >= g_risk are now dominated
                let start = if pos > 0 && front[pos - 1].0 == b {
                    pos - 1
                } else {
                    pos
                };
                let mut end = start;
                while end < front.len() && front[end].1 >= g_risk {
                    end += 1;
                }
                front.splice(start..end, std::iter::once((b, g_risk)));
                true
            }
        }
    }

    /// Whether a queued label has since been beaten by another label.
    pub fn superseded(&self, node: u32, g_time: f64, g_risk: f64) -> bool {
        let b = self.bucket(g_time);
        match self.rule {
            DominanceRule::SameBucket => {
                self.same.get(&(node, b)).is_some_and(|&best| best < g_risk)
            }
            DominanceRule::BucketPareto => {
                let front = &self.fronts[node as usize];
                let pos = front.partition_point(|&(fb, _)| fb <= b);
                if pos == 0 {
                    return true;
                }
                let (fb, fr) = front[pos - 1];
                !(fb == b && fr == g_risk) && fr <= g_risk
            }
        }
    }
}

/// Exact Pareto sets on (time, risk) per node, used when bucket dominance is off.
#[derive(Default)]
struct ExactFronts {
    fronts: Vec<Vec<(f64, f64)>>,
}

impl ExactFronts {
    fn new(nodes: usize) -> Self {
        ExactFronts {
            fronts: vec![Vec::new(); nodes],
        }
    }

    fn offer(&mut self, node: u32, t: f64, r: f64) -> bool {
        let front = &mut self.fronts[node as usize];
        if front.iter().any(|&(ft, fr)| ft <= t && fr <= r) {
            return false;
        }
        front.retain(|&(ft, fr)| !(t <= ft && r <= fr));
        front.push((t, r));
        true
    }

    fn superseded(&self, node: u32, t: f64, r: f64) -> bool {
        let front = &self.fronts[node as usize];
        !front.iter().any(|&(ft, fr)| ft == t && fr == r)
    }

    fn len(&self) -> usize {
        self.fronts.iter().map(Vec::len).sum()
    }
}

enum Dominance {
    Buckets(BucketTable),
    Exact(ExactFronts),
}

impl Dominance {
    fn offer(&mut self, node: u32, t: f64, r: f64) -> bool {
        match self {
            Dominance::Buckets(b) => b.offer(node, t, r),
            Dominance::Exact(e) => e.offer(node, t, r),
        }
    }

    fn superseded(&self, node: u32, t: f64, r: f64) -> bool {
        match self {
            Dominance::Buckets(b) => b.superseded(node, t, r),
            Dominance::Exact(e) => e.superseded(node, t, r),
        }
    }

    fn len(&self) -> usize {
        match self {
            Dominance::Buckets(b) => b.len(),
            Dominance::Exact(e) => e.len(),
        }
    }
}

/// Minimum-risk path from `start` to `goal` whose total time is within `budget_s`.
pub fn solve(
    graph: &CostGraph,
    start: NodeId,
    goal: NodeId,
    budget_s: f64,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    let heuristics = precompute_heuristics(graph, goal);
    solve_with(graph, start, goal, budget_s, config, &heuristics, None)
}

/// [`solve`] with precomputed heuristics and an optional node mask restricting
/// the search. Heuristics must be admissible for the masked graph (maps
/// computed on the full graph are).
pub fn solve_with(
    graph: &CostGraph,
    start: NodeId,
    goal: NodeId,
    budget_s: f64,
    config: &SolverConfig,
    heuristics: &HeuristicMaps,
    mask: Option<&[bool]>,
) -> Result<SolveOutcome> {
    let started = Instant::now();
    config.validate()?;
    if !(budget_s > 0.0) || budget_s.is_nan() {
        return Err(Error::validation(
            "budget_s",
            "time budget must be positive",
        ));
    }
    if heuristics.goal != goal {
        return Err(Error::Domain(
            "heuristic maps were computed for a different goal".into(),
        ));
    }
    if !allowed(mask, start) || !allowed(mask, goal) {
        return Err(Error::Domain(
            "start and goal must be inside the search mask".into(),
        ));
    }
    let no_path = || Error::NoPath {
        start: graph.cell(start).into(),
        goal: graph.cell(goal).into(),
    };

    let h_time = &heuristics.time_to_goal;
    let h_risk = &heuristics.risk_to_goal;
    let t_min = h_time[start.index()];
    if !t_min.is_finite() {
        return Err(no_path());
    }
    if t_min > budget_s + BUDGET_TOLERANCE {
        return Err(Error::InfeasibleBudget {
            budget_s,
            t_min_s: t_min,
        });
    }

    let width = config
        .bucket_width_s
        .unwrap_or_else(|| auto_bucket_width(budget_s, config));
    let mut stats = SolverStats {
        bucket_width_s: width,
        ..SolverStats::default()
    };

    if start == goal {
        stats.wall_time = started.elapsed();
        return Ok(SolveOutcome {
            nodes: vec![start],
            totals: PathTotals::default(),
            stats,
            anytime: false,
            incumbent_trace: vec![0.0],
        });
    }

    let risk_estimate = |node: NodeId| -> f64 {
        if config.zero_risk_heuristic {
            if h_risk[node.index()].is_finite() {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            h_risk[node.index()]
        }
    };

    let mut incumbent = f64::INFINITY;
    let mut incumbent_label: Option<u32> = None;
    let mut seeded_path: Option<Vec<NodeId>> = None;
    let mut trace = Vec::new();
    if config.seed_incumbent {
        if let Some(path) = heuristics.fastest_path(start) {
            if path.iter().all(|&n| allowed(mask, n)) {
                let totals = graph.path_totals(&path);
                let ascent_ok = !config.enforce_ascent || ascent_ok_along(graph, &path);
                if totals.time <= budget_s + BUDGET_TOLERANCE && ascent_ok {
                    incumbent = totals.log_risk;
                    trace.push(incumbent);
                    seeded_path = Some(path);
                }
            }
        }
    }

    let mut dominance = if config.prune.bucket_dominance {
        Dominance::Buckets(BucketTable::new(
            config.dominance,
            width,
            graph.node_count(),
        ))
    } else {
        Dominance::Exact(ExactFronts::new(graph.node_count()))
    };

    let mut labels: Vec<Label> = Vec::new();
    let mut heap = BinaryHeap::new();
    labels.push(Label {
        node: start.0,
        parent: NO_PARENT,
        g_risk: 0.0,
        g_time: 0.0,
    });
    dominance.offer(start.0, 0.0, 0.0);
    heap.push(QueueEntry {
        f: risk_estimate(start),
        g_time: 0.0,
        node: start.0,
        label: 0,
    });
    stats.labels_pushed = 1;

    let timeout = config.timeout_s.map(Duration::from_secs_f64);
    let mut stopped: Option<&'static str> = None;
    let ascent = graph.ascent_rule();

    while let Some(entry) = heap.pop() {
        stats.labels_popped += 1;
        if stats.labels_popped.is_multiple_of(1024) {
            if let Some(limit) = timeout {
                if started.elapsed() >= limit {
                    stopped = Some("timeout");
                    break;
                }
            }
        }
        if config
            .node_expansion_limit
            .is_some_and(|l| stats.expansions >= l)
        {
            stopped = Some("expansion limit");
            break;
        }

        let label = labels[entry.label as usize];
        let node = NodeId(label.node);
        if config.prune.feasibility
            && label.g_time + h_time[node.index()] > budget_s + BUDGET_TOLERANCE
        {
            stats.pruned_feasibility += 1;
            continue;
        }
        if config.prune.optimality && entry.f >= incumbent {
            stats.pruned_optimality += 1;
            continue;
        }
        if dominance.superseded(label.node, label.g_time, label.g_risk) {
            stats.pruned_dominance += 1;
            continue;
        }

        stats.expansions += 1;
        for e in graph.edges(node) {
            let next = e.to;
            if next.0 == label.parent_node(&labels) || !allowed(mask, next) {
                continue;
            }
            let g_time = label.g_time + e.time;
            let g_risk = label.g_risk + graph.log_risk(next);
            let slack_end = if config.prune.feasibility {
                h_time[next.index()]
            } else {
                0.0
            };
            if g_time + slack_end > budget_s + BUDGET_TOLERANCE {
                stats.pruned_feasibility += 1;
                continue;
            }
            let f = g_risk + risk_estimate(next);
            if !f.is_finite() {
                continue;
            }
            if config.prune.optimality && f >= incumbent {
                stats.pruned_optimality += 1;
                continue;
            }
            if config.enforce_ascent
                && e.slope > 0.0
                && !ascent_ok_extending(
                    graph,
                    &labels,
                    entry.label,
                    e.slope,
                    ascent.window,
                    ascent.threshold,
                )
            {
                stats.pruned_ascent += 1;
                continue;
            }
            let id = labels.len() as u32;
            if next == goal {
                if g_risk < incumbent {
                    labels.push(Label {
                        node: next.0,
                        parent: entry.label,
                        g_risk,
                        g_time,
                    });
                    incumbent = g_risk;
                    incumbent_label = Some(id);
                    stats.incumbent_updates += 1;
                    trace.push(g_risk);
                } else {
                    stats.pruned_optimality += 1;
                }
                continue;
            }
            if !dominance.offer(next.0, g_time, g_risk) {
                stats.pruned_dominance += 1;
                continue;
            }
            labels.push(Label {
                node: next.0,
                parent: entry.label,
                g_risk,
                g_time,
            });
            heap.push(QueueEntry {
                f,
                g_time,
                node: next.0,
                label: id,
            });
            stats.labels_pushed += 1;
        }
    }

    stats.bucket_entries = dominance.len() as u64;
    let nodes = match (incumbent_label, seeded_path) {
        (Some(id), _) => reconstruct(&labels, id),
        (None, Some(path)) => path,
        (None, None) => {
            return Err(match stopped {
                Some(reason) => Error::ResourceExhausted {
                    reason: reason.into(),
                },
                None if mask.is_some() || config.enforce_ascent => no_path(),
                None => Error::InfeasibleBudget {
                    budget_s,
                    t_min_s: t_min,
                },
            })
        }
    };
    let totals = graph.path_totals(&nodes);
    assert!(
        totals.time <= budget_s + BUDGET_TOLERANCE,
        "returned path takes {} s, budget {} s",
        totals.time,
        budget_s
    );
    stats.wall_time = started.elapsed();
    Ok(SolveOutcome {
        nodes,
        totals,
        stats,
        anytime: stopped.is_some(),
        incumbent_trace: trace,
    })
}

impl Label {
    fn parent_node(&self, labels: &[Label]) -> u32 {
        if self.parent == NO_PARENT {
            NO_PARENT
        } else {
            labels[self.parent as usize].node
        }
    }
}

fn reconstruct(labels: &[Label], mut id: u32) -> Vec<NodeId> {
    let mut nodes = Vec::new();
    while id != NO_PARENT {
        let l = labels[id as usize];
        nodes.push(NodeId(l.node));
        id = l.parent;
    }
    nodes.reverse();
    nodes
}

/// Sum of the run of consecutive climbing edges ending with a new climb of
/// `slope`, looking back at most `window` edges in total.
fn ascent_ok_extending(
    graph: &CostGraph,
    labels: &[Label],
    mut id: u32,
    slope: f64,
    window: usize,
    threshold: f64,
) -> bool {
    let mut sum = slope;
    let mut counted = 1;
    while counted < window {
        let l = labels[id as usize];
        if l.parent == NO_PARENT {
            break;
        }
        let p = labels[l.parent as usize];
        let s = graph
            .edge(NodeId(p.node), NodeId(l.node))
            .map_or(0.0, |e| e.slope);
        if s <= 0.0 {
            break;
        }
        sum += s;
        counted += 1;
        id = l.parent;
    }
    sum <= threshold
}

fn ascent_ok_along(graph: &CostGraph, path: &[NodeId]) -> bool {
    let rule = graph.ascent_rule();
    let slopes: Vec<f64> = path
        .windows(2)
        .map(|w| graph.edge(w[0], w[1]).map_or(0.0, |e| e.slope))
        .collect();
    for end in 0..slopes.len() {
        let mut sum = 0.0;
        for s in slopes[..=end].iter().rev().take(rule.window) {
            if *s <= 0.0 {
                break;
            }
            sum += s;
        }
        if sum > rule.threshold {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{build_graph, Cell, MobilityModel, TerrainGrid};

    /// Flat grid with per-cell log-risk and uniform speed.
    fn grid_graph(rows: usize, cols: usize, log_risk: &[f64]) -> CostGraph {
        let g = TerrainGrid::flat(rows, cols, 25.0, 0).unwrap();
        let graph = build_graph(&g, &MobilityModel::uniform(5.0)).unwrap();
        let lr: Vec<f64> = graph
            .nodes()
            .map(|n| log_risk[g.index(graph.cell(n))])
            .collect();
        graph
            .with_risk(lr.iter().map(|l| 1.0 - (-l).exp()).collect(), lr)
            .unwrap()
    }

    #[test]
    fn bucket_width_tuning() {
        let c = SolverConfig::default();
        assert_eq!(auto_bucket_width(8192.0, &c), 1.0);
        assert!((auto_bucket_width(1800.0, &c) - 0.2197265625).abs() < 1e-12);
        let one = SolverConfig {
            bucket_count_target: 1,
            ..SolverConfig::default()
        };
        assert_eq!(auto_bucket_width(1800.0, &one), 1800.0);
    }

    #[test]
    fn heuristics_on_corridor() {
        let graph = grid_graph(1, 5, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        let goal = graph.node(Cell::new(0, 4)).unwrap();
        let h = precompute_heuristics(&graph, goal);
        assert_eq!(h.time_to_goal(goal), 0.0);
        assert_eq!(h.risk_to_goal(goal), 0.0);
        for c in 0..5 {
            let n = graph.node(Cell::new(0, c)).unwrap();
            assert!((h.time_to_goal(n) - 5.0 * (4 - c) as f64).abs() < 1e-12);
            let want: f64 = ((c + 1)..5).map(|k| 0.1 * k as f64).sum();
            assert!((h.risk_to_goal(n) - want).abs() < 1e-12);
        }
        let fast = h
            .fastest_path(graph.node(Cell::new(0, 0)).unwrap())
            .unwrap();
        assert_eq!(fast.len(), 5);
    }

    #[test]
    fn root_pruned_when_budget_too_small() {
        let graph = grid_graph(1, 5, &[0.0; 5]);
        let (s, g) = (
            graph.node(Cell::new(0, 0)).unwrap(),
            graph.node(Cell::new(0, 4)).unwrap(),
        );
        match solve(&graph, s, g, 19.0, &SolverConfig::default()) {
            Err(Error::InfeasibleBudget { t_min_s, .. }) => assert!((t_min_s - 20.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let ok = solve(&graph, s, g, 20.0, &SolverConfig::default()).unwrap();
        assert!((ok.totals.time - 20.0).abs() < 1e-9);
    }

    #[test]
    fn bucket_table_rules() {
        let mut same = BucketTable::new(DominanceRule::SameBucket, 1.0, 2);
        assert!(same.offer(0, 0.5, 3.0));
        assert!(!same.offer(0, 0.7, 3.0));
        assert!(same.offer(0, 0.9, 2.0));
        assert!(same.superseded(0, 0.5, 3.0));
        assert!(same.offer(0, 1.5, 5.0));

        let mut pareto = BucketTable::new(DominanceRule::BucketPareto, 1.0, 1);
        assert!(pareto.offer(0, 2.5, 3.0));
        assert!(!pareto.offer(0, 3.5, 3.0));
        assert!(pareto.offer(0, 3.5, 1.0));
        assert!(pareto.offer(0, 0.5, 4.0));
        assert!(pareto.offer(0, 1.5, 2.0));
        // (1,2.0) removed (2,3.0): front is buckets 0,1,3
        assert_eq!(pareto.len(), 3);
        assert!(pareto.superseded(0, 2.5, 3.0));
        assert!(!pareto.superseded(0, 1.5, 2.0));
    }

    #[test]
    fn anytime_result_when_limited() {
        let lr: Vec<f64> = (0..36).map(|i| ((i * 7) % 5) as f64 * 0.1).collect();
        let graph = grid_graph(6, 6, &lr);
        let (s, g) = (
            graph.node(Cell::new(0, 0)).unwrap(),
            graph.node(Cell::new(5, 5)).unwrap(),
        );
        let cfg = SolverConfig {
            node_expansion_limit: Some(1),
            ..SolverConfig::default()
        };
        let out = solve(&graph, s, g, 80.0, &cfg).unwrap();
        assert!(out.anytime);
        let unseeded = SolverConfig {
            seed_incumbent: false,
            ..cfg
        };
        assert!(matches!(
            solve(&graph, s, g, 80.0, &unseeded),
            Err(Error::ResourceExhausted { .. })
        ));
    }

    #[test]
    fn incumbent_trace_strictly_decreases() {
        let lr: Vec<f64> = (0..64).map(|i| ((i * 13) % 7) as f64 * 0.2).collect();
        let graph = grid_graph(8, 8, &lr);
        let (s, g) = (
            graph.node(Cell::new(0, 0)).unwrap(),
            graph.node(Cell::new(7, 7)).unwrap(),
        );
        let out = solve(&graph, s, g, 60.0, &SolverConfig::default()).unwrap();
        assert!(out.incumbent_trace.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(*out.incumbent_trace.last().unwrap(), out.totals.log_risk);
    }

    #[test]
    fn ascent_rule_blocks_long_climbs() {
        // ramp: 5 m per 25 m step = 0.2 gradient, four steps sum to 0.8 > 0.6
        let mut g = TerrainGrid::flat(1, 6, 25.0, 0).unwrap();
        for c in 0..6 {
            g = g.with_elevation(Cell::new(0, c), 5.0 * c.min(4) as f64);
        }
        let graph = build_graph(&g, &MobilityModel::default()).unwrap();
        let (s, t) = (
            graph.node(Cell::new(0, 0)).unwrap(),
            graph.node(Cell::new(0, 5)).unwrap(),
        );
        let free = solve(&graph, s, t, 1e4, &SolverConfig::default()).unwrap();
        assert!(!free.nodes.is_empty());
        let strict = SolverConfig {
            enforce_ascent: true,
            ..SolverConfig::default()
        };
        assert!(solve(&graph, s, t, 1e4, &strict).is_err());
    }
}
