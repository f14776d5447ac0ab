//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use argus_core::apulse::{self, solve, SolverConfig};
use argus_core::bench::{
    self, generate_corridor, generate_instance, BenchInstance, SolverKind, SweepConfig,
};
use argus_core::io;
use argus_core::planner::{self, MissionRequest, Mode, PlanResult, Scenario};
use argus_core::replan::{self, DynamicEvent, RepairOptions};
use argus_core::risk::{self, DetectionParams, Impact, Raster, SparsePrior, ThreatSpec};
use argus_core::terrain::{Cell, GeoAnchor, MobilityModel, TerrainGrid};
use argus_core::CostGraph;

use common::*;

/// Budget overruns seen by any criterion (safe-within-time).
static BUDGET_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);
/// Ceiling overruns seen by any criterion (fast-within-risk).
static CEILING_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);
static CONSTRAINED_RUNS: AtomicUsize = AtomicUsize::new(0);

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn record_budget(time: f64, budget: f64) {
    CONSTRAINED_RUNS.fetch_add(1, Ordering::Relaxed);
    if time > budget + apulse::BUDGET_TOLERANCE {
        BUDGET_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
}

fn record_ceiling(result: &PlanResult, graph: &CostGraph, ceiling: f64) {
    CONSTRAINED_RUNS.fetch_add(1, Ordering::Relaxed);
    let effective = result
        .fallback
        .as_ref()
        .map_or(ceiling, |f| f.effective_ceiling);
    let nodes = graph.path_nodes(&result.path).expect("connected");
    if nodes.iter().any(|&n| graph.risk(n) > effective) {
        CEILING_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
}

fn endpoints(inst: &BenchInstance, graph: &CostGraph) -> (argus_core::NodeId, argus_core::NodeId) {
    (
        graph.node(inst.start).unwrap(),
        graph.node(inst.goal).unwrap(),
    )
}

fn fine_buckets() -> SolverConfig {
    SolverConfig {
        bucket_width_s: Some(1e-7),
        timeout_s: None,
        ..SolverConfig::default()
    }
}

const ALPHAS: [f64; 5] = [0.0, 0.1, 0.3, 0.6, 1.0];

fn oracle_optimality() -> Outcome {
    let mut instances = Vec::new();
    for seed in 0..200u64 {
        let rows = 2 + (seed % 4) as usize;
        let cols = 2 + ((seed / 4) % 4) as usize;
        let threats = 1 + (seed % 3) as usize;
        instances.push((
            generate_instance(rows, cols, threats, 1000 + seed).unwrap(),
            ALPHAS[(seed % 5) as usize],
        ));
    }
    for seed in 0..20u64 {
        instances.push((
            generate_corridor(seed).unwrap(),
            ALPHAS[(seed % 4) as usize + 1],
        ));
    }
    let (mut auto_exact, mut fine_exact, mut worst_dev, mut total) = (0, 0, 0.0f64, 0);
    let mut infeasible = 0;
    let started = Instant::now();
    for (inst, alpha) in &instances {
        let prep = inst.prepare().unwrap();
        let g = &prep.graph;
        assert!(g.node_count() <= 60);
        let (s, t) = endpoints(inst, g);
        let budget = inst.budget(*alpha);
        let Some(best) = enumerate_constrained(g, s, t, budget) else {
            infeasible += 1;
            continue;
        };
        total += 1;
        let auto = solve(g, s, t, budget, &SolverConfig::default()).unwrap();
        let fine = solve(g, s, t, budget, &fine_buckets()).unwrap();
        for o in [&auto, &fine] {
            record_budget(o.totals.time, budget);
            assert!(rel_close(
                path_log_risk(g, &o.nodes),
                o.totals.log_risk,
                1e-9
            ));
        }
        if rel_close(auto.totals.log_risk, best.log_risk, 1e-9) {
            auto_exact += 1;
        } else {
            worst_dev =
                worst_dev.max((auto.totals.log_risk - best.log_risk) / best.log_risk.max(1e-12));
        }
        if rel_close(fine.totals.log_risk, best.log_risk, 1e-9) {
            fine_exact += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let rate = auto_exact as f64 / total as f64;
    check(
        total >= 200 && rate >= 0.96 && worst_dev <= 1e-3 && fine_exact == total && elapsed < 300.0,
        format!(
            "auto buckets {auto_exact}/{total} exact ({:.1}%), worst deviation {:.4}%, fine buckets {fine_exact}/{total}, \
             {infeasible} without feasible path skipped, {elapsed:.1}s",
            rate * 100.0,
            worst_dev * 100.0
        ),
    )
}

fn log_product_equivalence() -> Outcome {
    let mut agree = 0;
    let mut unique = 0;
    for seed in 0..50u64 {
        let inst = generate_instance(4, 4, 2 + (seed % 2) as usize, 5000 + seed).unwrap();
        let prep = inst.prepare().unwrap();
        let g = &prep.graph;
        let (s, t) = endpoints(&inst, g);
        let (best_prod, argmax) = enumerate_max_survival(g, s, t);
        let req = MissionRequest::new(inst.start, inst.goal, Mode::Balanced { alpha: 0.0 });
        let planned = planner::plan(
            &inst.scenario.context(&prep),
            &req,
            &SolverConfig::default(),
        )
        .unwrap();
        let nodes = g.path_nodes(&planned.path).unwrap();
        let prod = path_survival_product(g, &nodes);
        let same_value = rel_close(prod, best_prod, 1e-12);
        let in_argmax = argmax.contains(&nodes);
        if argmax.len() == 1 {
            unique += 1;
        }
        // with a unique maximiser the paths must coincide; with ties the
        // planner's path must be one of the maximisers
        if same_value && in_argmax {
            agree += 1;
        }
    }
    check(
        agree == 50,
        format!("{agree}/50 agree ({unique} with a unique maximiser)"),
    )
}

/// 12x12 open grid with a threat on the straight line and free detours.
fn detour_instance(seed: u64) -> (Scenario, Cell, Cell) {
    let n = 12;
    let grid = TerrainGrid::flat(n, n, 25.0, 0).unwrap();
    let offset = (seed % 3) as usize;
    let threat = ThreatSpec::new(
        format!("block-{seed}"),
        DetectionParams::new(60.0 + 10.0 * (seed % 4) as f64, 0.4, 2.0).unwrap(),
        Impact::Scalar(0.8),
        SparsePrior::dirac(Cell::new(5 + offset % 2, 5 + offset)),
    )
    .unwrap();
    let sc = Scenario::new(grid, MobilityModel::uniform(2.0), vec![threat]).unwrap();
    (sc, Cell::new(0, 0), Cell::new(n - 1, n - 1))
}

fn budget_monotonicity() -> Outcome {
    let factors = [0.0, 0.1, 0.25, 0.5, 1.0];
    let mut monotone = 0;
    let mut strict_constructed = 0;
    let mut sweeps = 0;
    let check_sweep = |g: &CostGraph, s, t, t_min: f64| -> (bool, bool) {
        let mut prev = f64::INFINITY;
        let mut first = None;
        let mut ok = true;
        for f in factors {
            let b = (1.0 + f) * t_min;
            let o = solve(g, s, t, b, &fine_buckets()).unwrap();
            record_budget(o.totals.time, b);
            ok &= o.totals.log_risk <= prev + 1e-12;
            prev = o.totals.log_risk;
            first.get_or_insert(o.totals.log_risk);
        }
        (ok, prev < first.unwrap() - 1e-12)
    };
    for seed in 0..20u64 {
        let inst = generate_instance(16, 16, 3, 7000 + seed).unwrap();
        let prep = inst.prepare().unwrap();
        let (s, t) = endpoints(&inst, &prep.graph);
        sweeps += 1;
        monotone += usize::from(check_sweep(&prep.graph, s, t, inst.t_min_s).0);
    }
    for seed in 0..5u64 {
        let (sc, a, b) = detour_instance(seed);
        let prep = sc.prepare(0.0).unwrap();
        let g = &prep.graph;
        let (s, t) = (g.node(a).unwrap(), g.node(b).unwrap());
        let t_min = distances_to(g, t, |u, v| edge_time(g, u, v))[s.index()];
        sweeps += 1;
        let (ok, strict) = check_sweep(g, s, t, t_min);
        monotone += usize::from(ok);
        strict_constructed += usize::from(strict);
    }
    check(
        monotone == sweeps && strict_constructed == 5,
        format!("{monotone}/{sweeps} sweeps non-increasing, {strict_constructed}/5 constructed detours strictly decrease"),
    )
}

fn mode_spectrum() -> Outcome {
    let mut blocking = 0;
    let mut holds = 0;
    for seed in 0..30u64 {
        let inst = generate_instance(20, 20, 3, 9000 + seed).unwrap();
        let prep = inst.prepare().unwrap();
        let ctx = inst.scenario.context(&prep);
        let req = |alpha| MissionRequest::new(inst.start, inst.goal, Mode::Balanced { alpha });
        let fast = planner::plan(&ctx, &req(1.0), &SolverConfig::default()).unwrap();
        if fast.kpis.total_log_risk <= 0.0 {
            continue;
        }
        blocking += 1;
        let safe = planner::plan(&ctx, &req(0.0), &SolverConfig::default()).unwrap();
        if fast.kpis.total_time_s <= safe.kpis.total_time_s + 1e-9
            && safe.kpis.total_log_risk <= fast.kpis.total_log_risk + 1e-12
        {
            holds += 1;
        }
    }
    let (demo, req) = bench::demo_scenario().unwrap();
    let with = |alpha| MissionRequest {
        mode: Mode::Balanced { alpha },
        ..req.clone()
    };
    let d1 = demo.plan(&with(1.0), &SolverConfig::default()).unwrap();
    let d0 = demo.plan(&with(0.0), &SolverConfig::default()).unwrap();
    let strict = d1.kpis.total_time_s < d0.kpis.total_time_s
        && d0.kpis.total_log_risk < d1.kpis.total_log_risk;
    check(
        blocking >= 10 && holds == blocking && strict,
        format!(
            "{holds}/{blocking} blocking instances ordered; demo time {:.1}s vs {:.1}s, log-risk {:.4} vs {:.4}",
            d1.kpis.total_time_s, d0.kpis.total_time_s, d0.kpis.total_log_risk, d1.kpis.total_log_risk
        ),
    )
}

fn hard_constraints() -> Outcome {
    for seed in 0..30u64 {
        let inst = generate_instance(24, 24, 4, 11_000 + seed).unwrap();
        let prep = inst.prepare().unwrap();
        let ctx = inst.scenario.context(&prep);
        for alpha in [0.0, 0.2, 0.7] {
            let budget = inst.budget(alpha);
            let r = planner::plan(&ctx, &inst.request(alpha), &SolverConfig::default()).unwrap();
            record_budget(r.kpis.total_time_s, budget);
        }
        for ceiling in [0.0, 0.05, 0.2, 0.5] {
            let req = MissionRequest::new(
                inst.start,
                inst.goal,
                Mode::FastWithinRisk { max_risk: ceiling },
            );
            let r = planner::plan(&ctx, &req, &SolverConfig::default()).unwrap();
            record_ceiling(&r, &prep.graph, ceiling);
        }
    }
    let b = BUDGET_VIOLATIONS.load(Ordering::Relaxed);
    let c = CEILING_VIOLATIONS.load(Ordering::Relaxed);
    let runs = CONSTRAINED_RUNS.load(Ordering::Relaxed);
    check(
        b == 0 && c == 0,
        format!("{runs} constrained runs: {b} budget violations, {c} ceiling violations"),
    )
}

fn scalability() -> Outcome {
    let ladder = SweepConfig {
        sizes: vec![32, 64, 128, 256],
        alphas: vec![0.5],
        seeds: vec![1],
        solvers: vec![SolverKind::Apulse],
        timeout_s: 60.0,
        ..SweepConfig::default()
    };
    let report = bench::run_sweep(&ladder).unwrap();
    let times: Vec<(usize, f64)> = report.rows.iter().map(|r| (r.nodes, r.wall_ms)).collect();
    let all_solved = report
        .rows
        .iter()
        .all(|r| r.status == bench::RunStatus::Solved);
    let under = times.iter().all(|&(_, ms)| ms < 60_000.0);
    // growth exponent per rung, with a floor so timer noise on tiny runs
    // does not count as growth
    let floor = 20.0;
    let exponents: Vec<f64> = times
        .windows(2)
        .map(|w| {
            (w[1].1.max(floor) / w[0].1.max(floor)).ln() / (w[1].0 as f64 / w[0].0 as f64).ln()
        })
        .collect();
    let polynomial = exponents.iter().all(|&k| k <= 3.0);

    let baseline = SweepConfig {
        sizes: vec![128],
        solvers: vec![SolverKind::Apulse, SolverKind::LabelCorrecting],
        timeout_s: 10.0,
        ..ladder.clone()
    };
    let b = bench::run_sweep(&baseline).unwrap();
    let ap = b
        .rows
        .iter()
        .find(|r| r.solver == SolverKind::Apulse)
        .unwrap();
    let lc = b
        .rows
        .iter()
        .find(|r| r.solver == SolverKind::LabelCorrecting)
        .unwrap();
    let baseline_ok = lc.status == bench::RunStatus::Timeout || lc.wall_ms >= 5.0 * ap.wall_ms;
    let rungs: Vec<String> = times
        .iter()
        .map(|(n, ms)| format!("{n}:{ms:.1}ms"))
        .collect();
    check(
        all_solved && under && polynomial && baseline_ok,
        format!(
            "apulse [{}], growth exponents {:?}; baseline at 128x128 {} ({:.0} ms vs {:.1} ms)",
            rungs.join(", "),
            exponents
                .iter()
                .map(|k| (k * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
            if lc.status == bench::RunStatus::Timeout {
                "timed out"
            } else {
                "finished"
            },
            lc.wall_ms,
            ap.wall_ms
        ),
    )
}

/// Open 40x40 terrain from the generator (no threats), a plan across it,
/// and a threat dropped on the plan's midpoint.
fn replan_case(seed: u64) -> (Scenario, PlanResult, DynamicEvent) {
    let inst = generate_instance(40, 40, 0, 20_000 + seed).unwrap();
    let sc = inst.scenario.clone();
    let mode = if seed.is_multiple_of(2) {
        Mode::Balanced { alpha: 0.5 }
    } else {
        Mode::SafeWithinTime {
            budget_s: inst.budget(0.3),
        }
    };
    let req = MissionRequest::new(inst.start, inst.goal, mode);
    let original = sc.plan(&req, &SolverConfig::default()).unwrap();
    let mid = original.path[original.path.len() / 2];
    let threat = ThreatSpec::new(
        format!("pop-up-{seed}"),
        DetectionParams::new(100.0 + 10.0 * (seed % 4) as f64, 0.5, 2.0).unwrap(),
        Impact::Scalar(0.9),
        SparsePrior::dirac(mid),
    )
    .unwrap();
    let event = DynamicEvent::new(original.path.len() / 5, vec![threat]);
    (sc, original, event)
}

fn replanning() -> Outcome {
    let slack = 0.5;
    let (mut better, mut within, mut faster, mut close) = (0, 0, 0, 0);
    let mut deltas = Vec::new();
    for seed in 0..10u64 {
        let (sc, original, event) = replan_case(seed);
        let prep = sc.prepare(original.formation_width_m).unwrap();
        let up = replan::apply_event(&sc.terrain, &sc.threats, &prep.field, &prep.graph, &event)
            .unwrap();
        assert_eq!(up.writes_outside_region, 0);
        let report = replan::compare_repair_vs_full(
            &sc.terrain,
            &up,
            &original,
            &event,
            slack,
            &RepairOptions::default(),
        )
        .unwrap();
        let r = &report.repair;
        let g = &up.graph;
        let nodes = g.path_nodes(&r.result.path).unwrap();
        assert_eq!(r.result.path[0], original.path[0]);
        assert_eq!(r.result.path.last(), original.path.last());
        better += usize::from(report.table.log_risk.post < report.table.log_risk.pre);

        let bound = original.kpis.total_time_s + slack * r.original_segment_time_s;
        let segment_ok = match &r.window {
            Some(w) if !r.full_replan_used => {
                let exit = nodes[w.entry_index..]
                    .iter()
                    .position(|&n| g.cell(n) == w.exit)
                    .unwrap()
                    + w.entry_index;
                path_time(g, &nodes[w.entry_index..=exit]) <= r.segment_budget_s + 1e-9
            }
            _ => true,
        };
        let total_ok = path_time(g, &nodes) <= bound + 1e-9;
        within += usize::from(segment_ok && total_ok);
        record_budget(path_time(g, &nodes), bound);
        faster += usize::from(report.patch_wall_ms < report.full_wall_ms);
        close += usize::from(report.risk_gap.is_some_and(|g| g <= 0.05));
        let pct = |d: Option<f64>| d.map_or("n/a".to_string(), |v| format!("{v:+.1}%"));
        deltas.push(format!(
            "{}/{}",
            pct(report.table.log_risk.delta),
            pct(report.table.time_s.delta)
        ));
    }
    check(
        better == 10 && within == 10 && faster >= 8 && close >= 9,
        format!(
            "risk reduced {better}/10, within slack {within}/10, patch faster {faster}/10, within 5% of full {close}/10; \
             risk/time deltas [{}]",
            deltas.join(" ")
        ),
    )
}

// 0.693147 below is the 6-decimal printed value, not a stand-in for LN_2
#[allow(clippy::approx_constant)]
fn risk_kernel() -> Outcome {
    let d = DetectionParams::new(100.0, 0.5, 1.0).unwrap();
    let d2 = DetectionParams::new(100.0, 0.5, 2.0).unwrap();
    let p = |params: &DetectionParams, x: f64| risk::detection_probability(params, x);
    let combined = risk::combine_threats(
        1,
        1,
        &[Raster::filled(1, 1, 0.5), Raster::filled(1, 1, 0.5)],
    )
    .unwrap();
    let cases = [
        ("P(0)", p(&d, 0.0), 1.0),
        ("P(plateau edge)", p(&d, 50.0), 1.0),
        ("P(R)", p(&d, 100.0), 0.0),
        ("P(75), p=1", p(&d, 75.0), 0.75),
        ("P(75), p=2", p(&d2, 75.0), 0.5625),
        ("P(90), p=2", p(&d2, 90.0), (1.0f64 - 0.64).powi(2)),
        ("compose 0.5,0.5", combined.values[0], 0.75),
        (
            "-ln(0.5)",
            risk::log_cost_value(0.5),
            std::f64::consts::LN_2,
        ),
    ];
    let failed: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-9)
        .map(|(name, got, want)| format!("{name}: {got} != {want}"))
        .collect();
    let printed = (risk::log_cost_value(0.5) - 0.693147).abs() < 5e-7;
    check(
        failed.is_empty() && printed,
        if failed.is_empty() {
            format!(
                "{} values within 1e-9; -ln(0.5) = {:.6}",
                cases.len(),
                risk::log_cost_value(0.5)
            )
        } else {
            failed.join("; ")
        },
    )
}

#[derive(serde::Deserialize)]
struct Fixtures {
    cases: Vec<Fixture>,
}

#[derive(serde::Deserialize)]
struct Fixture {
    name: String,
    rows: usize,
    cols: usize,
    cell_size_m: f64,
    origin: [f64; 2],
    elevation: ElevationPlane,
    geo_anchor: Option<GeoAnchor>,
    decimate: usize,
    path: Vec<Cell>,
}

#[derive(serde::Deserialize)]
struct ElevationPlane {
    base: f64,
    per_row: f64,
    per_col: f64,
}

fn golden_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn waypoint_goldens() -> Outcome {
    let dir = golden_dir();
    let fixtures: Fixtures = io::parse_json(
        "fixtures",
        &io::read_file(&dir.join("fixtures.json")).unwrap(),
    )
    .unwrap();
    let mut identical = 0;
    let (mut worst_native, mut worst_m) = (0.0f64, 0.0f64);
    for f in &fixtures.cases {
        let n = f.rows * f.cols;
        let elevation = (0..n)
            .map(|i| {
                f.elevation.base
                    + f.elevation.per_row * (i / f.cols) as f64
                    + f.elevation.per_col * (i % f.cols) as f64
            })
            .collect();
        let grid = TerrainGrid::new(
            f.rows,
            f.cols,
            f.cell_size_m,
            f.origin,
            elevation,
            vec![0; n],
            vec![false; n],
        )
        .unwrap()
        .with_geo_anchor(f.geo_anchor);
        let text = io::export_waypoints(&grid, &f.path, f.decimate).unwrap();
        let golden = io::read_file(&dir.join(format!("{}.waypoints", f.name))).unwrap();
        identical += usize::from(text == golden);

        let parsed = io::parse_waypoints(&text).unwrap();
        let kept = io::decimate_path(&f.path, f.decimate);
        let expected = io::waypoints_for(&grid, &f.path, f.decimate).unwrap();
        assert_eq!(parsed.len(), kept.len());
        for ((w, e), &cell) in parsed.iter().zip(&expected).zip(&kept) {
            worst_native = worst_native
                .max((w.x - e.x).abs())
                .max((w.y - e.y).abs())
                .max((w.z - e.z).abs());
            let [east, north] = io::planar_from_columns(&grid, w.x, w.y);
            let [ce, cn] = grid.centroid(cell);
            worst_m = worst_m.max((east - ce).abs()).max((north - cn).abs());
        }
    }
    let total = fixtures.cases.len();
    check(
        identical == total && worst_native <= 1e-6,
        format!(
            "{identical}/{total} files byte-identical; worst round-trip error {worst_native:.1e} in file units \
             ({worst_m:.1e} m in the grid frame)"
        ),
    )
}

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("risk-kernel unit values", risk_kernel),
        ("waypoint golden files", waypoint_goldens),
        ("oracle optimality", oracle_optimality),
        ("log-sum / product equivalence", log_product_equivalence),
        ("budget monotonicity", budget_monotonicity),
        ("mode spectrum", mode_spectrum),
        ("replanning benefit", replanning),
        ("scalability ladder", scalability),
        ("hard constraints", hard_constraints),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
