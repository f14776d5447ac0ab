//! Independent reference computations for the integration and acceptance
//! tests. Nothing here calls the solvers under test.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use argus_core::risk::LOG_RISK_EPSILON;
use argus_core::{CostGraph, NodeId};

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, u32);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Plain Dijkstra towards `target` over reversed edges with edge cost `w(u, v)`.
pub fn distances_to(
    graph: &CostGraph,
    target: NodeId,
    w: impl Fn(NodeId, NodeId) -> f64,
) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.node_count()];
    let mut heap = BinaryHeap::new();
    dist[target.index()] = 0.0;
    heap.push(Item(0.0, target.0));
    while let Some(Item(d, v)) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        for e in graph.edges(NodeId(v)) {
            let u = e.to;
            if graph.edge(u, NodeId(v)).is_none() {
                continue;
            }
            let nd = d + w(u, NodeId(v));
            if nd < dist[u.index()] {
                dist[u.index()] = nd;
                heap.push(Item(nd, u.0));
            }
        }
    }
    dist
}

pub fn edge_time(graph: &CostGraph, u: NodeId, v: NodeId) -> f64 {
    graph.edge(u, v).expect("adjacent").time
}

pub fn path_time(graph: &CostGraph, path: &[NodeId]) -> f64 {
    path.windows(2).map(|w| edge_time(graph, w[0], w[1])).sum()
}

pub fn path_log_risk(graph: &CostGraph, path: &[NodeId]) -> f64 {
    path.iter().skip(1).map(|&n| graph.log_risk(n)).sum()
}

/// Product of per-cell survival along a path, start excluded, with the same
/// clamp the log cost applies.
pub fn path_survival_product(graph: &CostGraph, path: &[NodeId]) -> f64 {
    path.iter()
        .skip(1)
        .map(|&n| 1.0 - graph.risk(n).min(1.0 - LOG_RISK_EPSILON))
        .product()
}

pub struct Best {
    pub log_risk: f64,
    pub time: f64,
    pub path: Vec<NodeId>,
    pub leaves: u64,
}

/// Minimum-risk simple path within `budget`, by exhaustive enumeration.
/// Only provably useless branches are cut: those that cannot reach the goal
/// in time, and those already at least as risky as the best complete path.
pub fn enumerate_constrained(graph: &CostGraph, s: NodeId, t: NodeId, budget: f64) -> Option<Best> {
    let lb = distances_to(graph, t, |u, v| edge_time(graph, u, v));
    let mut best: Option<Best> = None;
    let mut on = vec![false; graph.node_count()];
    let mut path = vec![s];
    on[s.index()] = true;
    let mut leaves = 0;
    #[allow(clippy::too_many_arguments)]
    fn go(
        graph: &CostGraph,
        t: NodeId,
        budget: f64,
        lb: &[f64],
        on: &mut Vec<bool>,
        path: &mut Vec<NodeId>,
        time: f64,
        risk: f64,
        best: &mut Option<Best>,
        leaves: &mut u64,
    ) {
        let u = *path.last().unwrap();
        if u == t {
            *leaves += 1;
            if best.as_ref().is_none_or(|b| risk < b.log_risk) {
                *best = Some(Best {
                    log_risk: risk,
                    time,
                    path: path.clone(),
                    leaves: 0,
                });
            }
            return;
        }
        for e in graph.edges(u) {
            let v = e.to;
            if on[v.index()] {
                continue;
            }
            let nt = time + e.time;
            let nr = risk + graph.log_risk(v);
            if nt + lb[v.index()] > budget + 1e-9 {
                continue;
            }
            if best.as_ref().is_some_and(|b| nr >= b.log_risk) {
                continue;
            }
            on[v.index()] = true;
            path.push(v);
            go(graph, t, budget, lb, on, path, nt, nr, best, leaves);
            path.pop();
            on[v.index()] = false;
        }
    }
    go(
        graph,
        t,
        budget,
        &lb,
        &mut on,
        &mut path,
        0.0,
        0.0,
        &mut best,
        &mut leaves,
    );
    best.map(|mut b| {
        b.leaves = leaves;
        b
    })
}

/// Largest survival product over all simple paths, by enumeration pruned
/// only on the product itself (it can only shrink along a path).
pub fn enumerate_max_survival(graph: &CostGraph, s: NodeId, t: NodeId) -> (f64, Vec<Vec<NodeId>>) {
    let mut best = -1.0;
    let mut argmax: Vec<Vec<NodeId>> = Vec::new();
    let mut on = vec![false; graph.node_count()];
    let mut path = vec![s];
    on[s.index()] = true;
    fn go(
        graph: &CostGraph,
        t: NodeId,
        on: &mut Vec<bool>,
        path: &mut Vec<NodeId>,
        prod: f64,
        best: &mut f64,
        argmax: &mut Vec<Vec<NodeId>>,
    ) {
        let u = *path.last().unwrap();
        if u == t {
            if prod > *best {
                *best = prod;
                argmax.clear();
            }
            if prod == *best {
                argmax.push(path.clone());
            }
            return;
        }
        for e in graph.edges(u) {
            let v = e.to;
            if on[v.index()] {
                continue;
            }
            let np = prod * (1.0 - graph.risk(v).min(1.0 - LOG_RISK_EPSILON));
            if np < *best {
                continue;
            }
            on[v.index()] = true;
            path.push(v);
            go(graph, t, on, path, np, best, argmax);
            path.pop();
            on[v.index()] = false;
        }
    }
    go(graph, t, &mut on, &mut path, 1.0, &mut best, &mut argmax);
    (best, argmax)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}
