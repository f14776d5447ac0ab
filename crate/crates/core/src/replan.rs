//! Local repair of an in-execution path after new threats appear.
//!
//! [`apply_event`] composes the new threats into an existing risk field,
//! touching only cells within reach of them, and returns a new graph
//! snapshot. [`repair`] then re-solves the affected stretch of the path
//! inside a bounded patch window and splices the result back in.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::apulse::{
    self, precompute_heuristics, precompute_heuristics_within, SolverConfig, SolverStats,
};
use crate::error::{Error, Result};
use crate::planner::{compute_kpis, PlanResult};
use crate::risk::{expected_detection, log_cost_value, raise_impact, Disk, RiskField, ThreatSpec};
use crate::terrain::{Cell, CostGraph, NodeId, TerrainGrid};

/// Safety margin used when none is configured, in cells.
pub const DEFAULT_SAFETY_MARGIN_CELLS: f64 = 2.0;

/// Factor applied to the window radius on the single widening retry.
pub const WINDOW_WIDENING: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicEvent {
    /// Index into the active path of the vehicle's current cell.
    #[serde(rename = "at_index")]
    pub current_position_index: usize,
    #[serde(rename = "threats")]
    pub new_threats: Vec<ThreatSpec>,
    /// Seconds since mission start.
    #[serde(default)]
    pub timestamp: f64,
}

impl DynamicEvent {
    pub fn new(current_position_index: usize, new_threats: Vec<ThreatSpec>) -> Self {
        DynamicEvent {
            current_position_index,
            new_threats,
            timestamp: 0.0,
        }
    }

    pub fn validate(&self, grid: &TerrainGrid, path_len: usize) -> Result<()> {
        if self.current_position_index >= path_len {
            return Err(Error::validation(
                "at_index",
                format!(
                    "{} is outside a path of {path_len} cells",
                    self.current_position_index
                ),
            ));
        }
        if !(self.timestamp >= 0.0 && self.timestamp.is_finite()) {
            return Err(Error::validation("timestamp", "must be finite and >= 0"));
        }
        for t in &self.new_threats {
            t.check_against(grid)?;
        }
        Ok(())
    }

    /// Largest detection range among the new threats, meters.
    pub fn max_range(&self) -> f64 {
        self.new_threats
            .iter()
            .map(|t| t.detection.range_m)
            .fold(0.0, f64::max)
    }
}

/// Result of composing an event into a risk field.
#[derive(Clone, Debug)]
pub struct EventUpdate {
    pub field: RiskField,
    /// New snapshot; the input graph is left untouched.
    pub graph: CostGraph,
    /// Previous threats followed by the event's.
    pub threats: Vec<ThreatSpec>,
    /// Cells whose layers were recomputed: the new threats' ranges dilated by
    /// the formation radius.
    pub region: Vec<bool>,
    /// Cells whose log cost actually changed.
    pub changed: Vec<bool>,
    pub recomputed_cells: usize,
    /// Writes that landed outside `region`. Always zero.
    pub writes_outside_region: usize,
}

impl EventUpdate {
    pub fn changed_cells(&self, grid: &TerrainGrid) -> Vec<Cell> {
        mask_cells(grid, &self.changed)
    }

    pub fn region_cells(&self, grid: &TerrainGrid) -> Vec<Cell> {
        mask_cells(grid, &self.region)
    }
}

fn mask_cells(grid: &TerrainGrid, mask: &[bool]) -> Vec<Cell> {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| grid.cell_at(i))
        .collect()
}

/// Composes the event's threats into `field` (computed from `threats` on
/// `grid`) and returns the updated field and graph. Cells beyond the new
/// threats' reach keep their exact previous values.
pub fn apply_event(
    grid: &TerrainGrid,
    threats: &[ThreatSpec],
    field: &RiskField,
    graph: &CostGraph,
    event: &DynamicEvent,
) -> Result<EventUpdate> {
    let n = grid.len();
    if field.risk.values.len() != n {
        return Err(Error::shape("risk field", n, field.risk.values.len()));
    }
    if graph.rows() != grid.rows() || graph.cols() != grid.cols() {
        return Err(Error::shape("graph", n, graph.rows() * graph.cols()));
    }
    for t in &event.new_threats {
        t.check_against(grid)?;
    }
    let mut all = threats.to_vec();
    all.extend(event.new_threats.iter().cloned());

    let mut out = field.clone();
    if event.new_threats.is_empty() {
        return Ok(EventUpdate {
            field: out,
            graph: graph.clone(),
            threats: all,
            region: vec![false; n],
            changed: vec![false; n],
            recomputed_cells: 0,
            writes_outside_region: 0,
        });
    }

    let mut survival = match &field.survival {
        Some(s) => s.clone(),
        None => RiskField::compute(grid, threats, field.formation_width)?
            .survival
            .expect("computed fields carry survival"),
    };

    let rho = field.formation_width / 2.0;
    let mut core = vec![false; n];
    let mut region = vec![false; n];
    for t in &event.new_threats {
        for (i, m) in t.footprint(grid, 0.0).into_iter().enumerate() {
            core[i] |= m;
        }
        for (i, m) in t
            .footprint(grid, rho + 1e-9 * grid.cell_size())
            .into_iter()
            .enumerate()
        {
            region[i] |= m;
        }
    }

    let mut outside = 0;
    for t in &event.new_threats {
        let detection = expected_detection(t, grid)?;
        for (i, s) in survival.values.iter_mut().enumerate() {
            if core[i] {
                outside += usize::from(!region[i]);
                *s *= 1.0 - detection.values[i];
            }
        }
        raise_impact(&mut out.impact, t, &detection, |i| {
            outside += usize::from(!region[i])
        });
    }
    for i in (0..n).filter(|&i| core[i]) {
        out.p_det.values[i] = 1.0 - survival.values[i];
        out.risk.values[i] = out.p_det.values[i] * out.impact.values[i];
    }

    let disk = Disk::new(rho, grid.cell_size());
    let mut recomputed = 0;
    for i in (0..n).filter(|&i| region[i]) {
        recomputed += 1;
        let r = if disk.len() <= 1 {
            out.risk.values[i]
        } else {
            disk.max_at(&out.risk, grid.cell_at(i))
        };
        out.risk_form.values[i] = r;
        out.log_risk.values[i] = log_cost_value(r);
    }
    out.survival = Some(survival);

    let mut risk = graph.risks().to_vec();
    let mut log_risk = graph.log_risks().to_vec();
    for node in graph.nodes() {
        let i = grid.index(graph.cell(node));
        if region[i] {
            risk[node.index()] = out.risk_form.values[i];
            log_risk[node.index()] = out.log_risk.values[i];
        }
    }
    let changed = (0..n)
        .map(|i| out.log_risk.values[i].to_bits() != field.log_risk.values[i].to_bits())
        .collect();

    Ok(EventUpdate {
        field: out,
        graph: graph.with_risk(risk, log_risk)?,
        threats: all,
        region,
        changed,
        recomputed_cells: recomputed,
        writes_outside_region: outside,
    })
}

/// Bounded region inside which a repaired segment is searched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchWindow {
    pub radius_m: f64,
    /// Cells within `radius_m` of a new threat's prior support.
    pub cells: Vec<Cell>,
    pub entry_index: usize,
    pub exit_index: usize,
    pub entry: Cell,
    pub exit: Cell,
}

impl PatchWindow {
    /// Search mask over graph nodes: window cells, a one-cell boundary and
    /// the entry and exit, minus path cells outside the replaced segment.
    fn node_mask(&self, grid: &TerrainGrid, graph: &CostGraph, path: &[Cell]) -> Vec<bool> {
        let mut cells = vec![false; grid.len()];
        for &c in &self.cells {
            cells[grid.index(c)] = true;
            for nb in grid.neighbors(c) {
                cells[grid.index(nb)] = true;
            }
        }
        for (i, &c) in path.iter().enumerate() {
            if i < self.entry_index || i > self.exit_index {
                cells[grid.index(c)] = false;
            }
        }
        cells[grid.index(self.entry)] = true;
        cells[grid.index(self.exit)] = true;
        graph
            .nodes()
            .map(|n| cells[grid.index(graph.cell(n))])
            .collect()
    }
}

fn window_cells(grid: &TerrainGrid, threats: &[ThreatSpec], radius_m: f64) -> Vec<Cell> {
    let mut mask = vec![false; grid.len()];
    for t in threats {
        for &(src, _) in t.prior.cells() {
            crate::risk::for_each_within(grid, src, radius_m, |c, _| mask[grid.index(c)] = true);
        }
    }
    mask_cells(grid, &mask)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairOptions {
    /// Meters; defaults to two cells.
    pub safety_margin_m: Option<f64>,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    pub result: PlanResult,
    pub window: Option<PatchWindow>,
    /// No cell ahead of the vehicle changed; the path is kept as is.
    pub unchanged: bool,
    pub widened: bool,
    pub full_replan_used: bool,
    /// The solved segment was no better than the original and was discarded.
    pub kept_original_segment: bool,
    pub original_segment_time_s: f64,
    pub segment_budget_s: f64,
}

/// Original-path stretch to replace, as indices into the path.
fn select_segment(
    grid: &TerrainGrid,
    path: &[Cell],
    changed: &[bool],
    at: usize,
    margin_m: f64,
) -> Option<(usize, usize)> {
    let hits: Vec<usize> = (at + 1..path.len())
        .filter(|&i| changed[grid.index(path[i])])
        .collect();
    let (&first, &last) = (hits.first()?, hits.last()?);

    let anchor = first - 1;
    let mut entry = anchor;
    while entry > at && grid.distance(path[entry], path[anchor]) < margin_m {
        entry -= 1;
    }
    let anchor = (last + 1).min(path.len() - 1);
    let mut exit = anchor;
    while exit + 1 < path.len() && grid.distance(path[exit], path[anchor]) < margin_m {
        exit += 1;
    }
    Some((entry, exit))
}

fn is_infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::NoPath { .. } | Error::InfeasibleBudget { .. } | Error::ResourceExhausted { .. }
    )
}

fn segment_log_risk(graph: &CostGraph, nodes: &[NodeId]) -> f64 {
    graph.path_totals(nodes).log_risk
}

/// Repairs `original` against the post-event state in `update`.
pub fn repair(
    grid: &TerrainGrid,
    update: &EventUpdate,
    original: &PlanResult,
    event: &DynamicEvent,
    slack: f64,
    options: &RepairOptions,
) -> Result<Repair> {
    if !(slack >= 0.0 && slack.is_finite()) {
        return Err(Error::validation("replan_slack", "must be finite and >= 0"));
    }
    event.validate(grid, original.path.len())?;
    let graph = &update.graph;
    let path = &original.path;
    let nodes = graph.path_nodes(path)?;
    let at = event.current_position_index;
    let margin = options
        .safety_margin_m
        .unwrap_or(DEFAULT_SAFETY_MARGIN_CELLS * grid.cell_size());
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::validation(
            "safety_margin_m",
            "must be finite and >= 0",
        ));
    }

    let finish = |path: Vec<Cell>, stats: SolverStats, anytime: bool| -> Result<PlanResult> {
        let kpis = compute_kpis(grid, graph, &update.threats, &path)?;
        Ok(PlanResult {
            path,
            kpis,
            mode: original.mode,
            formation_width_m: original.formation_width_m,
            fallback: None,
            fallback_used: false,
            anytime,
            solver_stats: stats,
        })
    };

    let Some((entry, exit)) = select_segment(grid, path, &update.changed, at, margin) else {
        return Ok(Repair {
            result: finish(path.clone(), SolverStats::default(), false)?,
            window: None,
            unchanged: true,
            widened: false,
            full_replan_used: false,
            kept_original_segment: true,
            original_segment_time_s: 0.0,
            segment_budget_s: 0.0,
        });
    };

    let segment = &nodes[entry..=exit];
    let segment_time = graph.path_totals(segment).time;
    let segment_risk = segment_log_risk(graph, segment);
    let budget = segment_time * (1.0 + slack);
    let radius = event.max_range() + update.field.formation_width / 2.0 + margin;

    let mut window = None;
    let mut widened = false;
    let mut solved = None;
    for (attempt, r) in [radius, radius * WINDOW_WIDENING].into_iter().enumerate() {
        let w = PatchWindow {
            radius_m: r,
            cells: window_cells(grid, &event.new_threats, r),
            entry_index: entry,
            exit_index: exit,
            entry: path[entry],
            exit: path[exit],
        };
        widened = attempt > 0;
        let outcome = if entry == exit {
            Err(Error::Domain("empty segment".into()))
        } else {
            let mask = w.node_mask(grid, graph, path);
            let h = precompute_heuristics_within(graph, nodes[exit], Some(&mask));
            apulse::solve_with(
                graph,
                nodes[entry],
                nodes[exit],
                budget,
                &options.solver,
                &h,
                Some(&mask),
            )
        };
        window = Some(w);
        match outcome {
            Ok(o) => {
                solved = Some(o);
                break;
            }
            Err(e) if is_infeasible(&e) || matches!(e, Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        }
    }

    if let Some(o) = solved {
        debug_assert!(o.totals.time <= budget + apulse::BUDGET_TOLERANCE);
        let kept = o.totals.log_risk >= segment_risk;
        let middle: Vec<Cell> = if kept {
            path[entry..=exit].to_vec()
        } else {
            o.nodes.iter().map(|&n| graph.cell(n)).collect()
        };
        let mut spliced = path[..entry].to_vec();
        spliced.extend(middle);
        spliced.extend_from_slice(&path[exit + 1..]);
        return Ok(Repair {
            result: finish(spliced, o.stats, o.anytime)?,
            window,
            unchanged: false,
            widened,
            full_replan_used: false,
            kept_original_segment: kept,
            original_segment_time_s: segment_time,
            segment_budget_s: budget,
        });
    }

    let full = full_replan(graph, &nodes, at, segment_time * slack, &options.solver)?;
    Ok(Repair {
        result: finish(full.path, full.stats, full.anytime)?,
        window,
        unchanged: false,
        widened,
        full_replan_used: true,
        kept_original_segment: full.kept_original,
        original_segment_time_s: segment_time,
        segment_budget_s: budget,
    })
}

struct FullReplan {
    path: Vec<Cell>,
    stats: SolverStats,
    anytime: bool,
    kept_original: bool,
}

/// Re-solves from the current position to the goal over the whole graph with
/// budget = remaining original time + `extra_s`.
fn full_replan(
    graph: &CostGraph,
    nodes: &[NodeId],
    at: usize,
    extra_s: f64,
    config: &SolverConfig,
) -> Result<FullReplan> {
    let prefix: Vec<Cell> = nodes[..at].iter().map(|&n| graph.cell(n)).collect();
    let rest = &nodes[at..];
    if rest.len() == 1 {
        return Ok(FullReplan {
            path: nodes.iter().map(|&n| graph.cell(n)).collect(),
            stats: SolverStats::default(),
            anytime: false,
            kept_original: true,
        });
    }
    let totals = graph.path_totals(rest);
    let budget = totals.time + extra_s;
    let goal = rest[rest.len() - 1];
    let h = precompute_heuristics(graph, goal);
    let o = apulse::solve_with(graph, rest[0], goal, budget, config, &h, None).map_err(|e| {
        if is_infeasible(&e) {
            Error::NoPath {
                start: graph.cell(rest[0]).into(),
                goal: graph.cell(goal).into(),
            }
        } else {
            e
        }
    })?;
    let kept = o.totals.log_risk > totals.log_risk;
    let tail = if kept { rest } else { &o.nodes[..] };
    let mut path = prefix;
    path.extend(tail.iter().map(|&n| graph.cell(n)));
    Ok(FullReplan {
        path,
        stats: o.stats,
        anytime: o.anytime,
        kept_original: kept,
    })
}

/// Pre/post pair with relative change in percent (absolute change for survival).
/// `delta` is absent when a relative change from zero is undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub pre: f64,
    pub post: f64,
    pub delta: Option<f64>,
}

/// `(post - pre) / pre`, with 0 for 0 -> 0 and `None` for 0 -> nonzero.
fn relative_change(pre: f64, post: f64) -> Option<f64> {
    if pre != 0.0 {
        Some((post - pre) / pre)
    } else if post == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

impl Delta {
    fn relative(pre: f64, post: f64) -> Self {
        Delta {
            pre,
            post,
            delta: relative_change(pre, post).map(|d| d * 100.0),
        }
    }

    fn absolute(pre: f64, post: f64) -> Self {
        Delta {
            pre,
            post,
            delta: Some(post - pre),
        }
    }
}

/// Original path on the post-event field versus the repaired path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairTable {
    pub log_risk: Delta,
    pub time_s: Delta,
    pub survival: Delta,
}

impl RepairTable {
    pub fn new(pre: &PlanResult, post: &PlanResult) -> Self {
        RepairTable {
            log_risk: Delta::relative(pre.kpis.total_log_risk, post.kpis.total_log_risk),
            time_s: Delta::relative(pre.kpis.total_time_s, post.kpis.total_time_s),
            survival: Delta::absolute(
                pre.kpis.survival_probability,
                post.kpis.survival_probability,
            ),
        }
    }

    pub fn render(&self) -> String {
        let row = |name: &str, d: &Delta, unit: &str| {
            let delta = d
                .delta
                .map_or_else(|| format!("{:>11}", "n/a"), |v| format!("{v:>+10.2}{unit}"));
            format!("{name:<10} {:>12.4} {:>12.4} {delta}\n", d.pre, d.post)
        };
        let mut s = format!(
            "{:<10} {:>12} {:>12} {:>11}\n",
            "metric", "pre", "post", "delta"
        );
        s += &row("log-risk", &self.log_risk, "%");
        s += &row("time [s]", &self.time_s, "%");
        s += &row("survival", &self.survival, "");
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    /// Original path evaluated on the post-event field.
    pub original: PlanResult,
    pub repair: Repair,
    pub full: PlanResult,
    pub table: RepairTable,
    /// Relative log-risk gap of the repair over the full replan; absent when
    /// the full replan has zero risk and the repair does not.
    pub risk_gap: Option<f64>,
    /// Absolute log-risk gap of the repair over the full replan.
    pub risk_gap_abs: f64,
    pub patch_wall_ms: f64,
    pub full_wall_ms: f64,
}

/// Runs [`repair`] and a from-scratch solve from the current position under
/// the same slackened budget, and tabulates both.
pub fn compare_repair_vs_full(
    grid: &TerrainGrid,
    update: &EventUpdate,
    original: &PlanResult,
    event: &DynamicEvent,
    slack: f64,
    options: &RepairOptions,
) -> Result<RepairReport> {
    let started = Instant::now();
    let repaired = repair(grid, update, original, event, slack, options)?;
    let patch_wall_ms = started.elapsed().as_secs_f64() * 1e3;

    let graph = &update.graph;
    let nodes = graph.path_nodes(&original.path)?;
    let started = Instant::now();
    let full = full_replan(
        graph,
        &nodes,
        event.current_position_index,
        repaired.original_segment_time_s * slack,
        &options.solver,
    )?;
    let full_wall_ms = started.elapsed().as_secs_f64() * 1e3;

    let evaluate = |path: Vec<Cell>, stats: SolverStats, anytime: bool| -> Result<PlanResult> {
        Ok(PlanResult {
            kpis: compute_kpis(grid, graph, &update.threats, &path)?,
            path,
            mode: original.mode,
            formation_width_m: original.formation_width_m,
            fallback: None,
            fallback_used: false,
            anytime,
            solver_stats: stats,
        })
    };
    let pre = evaluate(
        original.path.clone(),
        original.solver_stats.clone(),
        original.anytime,
    )?;
    let full = evaluate(full.path, full.stats, full.anytime)?;
    let patch_risk = repaired.result.kpis.total_log_risk;
    let full_risk = full.kpis.total_log_risk;
    let risk_gap = relative_change(full_risk, patch_risk);
    Ok(RepairReport {
        table: RepairTable::new(&pre, &repaired.result),
        original: pre,
        repair: repaired,
        full,
        risk_gap,
        risk_gap_abs: patch_risk - full_risk,
        patch_wall_ms,
        full_wall_ms,
    })
}
