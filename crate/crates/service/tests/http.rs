use std::collections::HashSet;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use argus_core::bench;
use argus_core::io;
use argus_core::planner::{MissionRequest, Mode, PlanResult};
use argus_core::replan::{self, DynamicEvent, RepairOptions, RepairReport};
use argus_core::risk::{DetectionParams, Impact, RiskField, SparsePrior, ThreatSpec};
use argus_core::SolverConfig;
use argus_service::http::{router, AppState, ServiceConfig, PLAN_ID_HEADER};

fn app(config: ServiceConfig) -> Router {
    router(AppState::new(config).unwrap())
}

fn default_app() -> Router {
    app(ServiceConfig {
        workers: 4,
        ..ServiceConfig::default()
    })
}

struct Reply {
    status: StatusCode,
    plan_id: Option<u64>,
    body: String,
}

async fn call(app: &Router, method: &str, uri: &str, body: String) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let plan_id = resp
        .headers()
        .get(PLAN_ID_HEADER)
        .map(|v| v.to_str().unwrap().parse().unwrap());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    Reply {
        status,
        plan_id,
        body: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

async fn create_demo(app: &Router) -> u64 {
    let (sc, _) = bench::demo_scenario().unwrap();
    let r = call(app, "POST", "/scenario", io::to_json(&sc)).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    let v: serde_json::Value = serde_json::from_str(&r.body).unwrap();
    v["id"].as_u64().unwrap()
}

fn demo_request() -> MissionRequest {
    bench::demo_scenario().unwrap().1
}

fn popup_event(result: &PlanResult) -> DynamicEvent {
    let threat = ThreatSpec::new(
        "pop-up",
        DetectionParams::new(120.0, 0.5, 2.0).unwrap(),
        Impact::Scalar(0.9),
        SparsePrior::dirac(result.path[result.path.len() / 2]),
    )
    .unwrap();
    DynamicEvent::new(3, vec![threat])
}

#[tokio::test]
async fn plan_matches_library_bytes() {
    let app = default_app();
    let id = create_demo(&app).await;
    let r = call(
        &app,
        "POST",
        &format!("/scenario/{id}/plan"),
        io::to_json(&demo_request()),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert!(r.plan_id.is_some());
    let (sc, req) = bench::demo_scenario().unwrap();
    let lib = sc.plan(&req, &SolverConfig::default()).unwrap();
    assert_eq!(r.body, io::to_json(&lib));
}

#[tokio::test]
async fn riskfield_profile_and_waypoints() {
    let app = default_app();
    let id = create_demo(&app).await;
    let r = call(
        &app,
        "GET",
        &format!("/scenario/{id}/riskfield?formation_width=30"),
        String::new(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let (sc, _) = bench::demo_scenario().unwrap();
    let want = RiskField::compute(&sc.terrain, &sc.threats, 30.0).unwrap();
    assert_eq!(r.body, io::to_json(&want));

    let p = call(
        &app,
        "POST",
        &format!("/scenario/{id}/plan"),
        io::to_json(&demo_request()),
    )
    .await;
    let pid = p.plan_id.unwrap();
    let result: PlanResult = io::parse_json("plan", &p.body).unwrap();
    let prof = call(
        &app,
        "GET",
        &format!("/scenario/{id}/profile?plan={pid}"),
        String::new(),
    )
    .await;
    assert_eq!(prof.status, StatusCode::OK);
    let points: Vec<serde_json::Value> = serde_json::from_str(&prof.body).unwrap();
    assert_eq!(points.len(), result.path.len());

    let wp = call(
        &app,
        "GET",
        &format!("/scenario/{id}/waypoints?plan={pid}&decimate=3"),
        String::new(),
    )
    .await;
    assert_eq!(wp.status, StatusCode::OK);
    assert_eq!(
        wp.body,
        io::export_waypoints(&sc.terrain, &result.path, 3).unwrap()
    );
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let app = default_app();
    assert_eq!(
        call(&app, "GET", "/scenario/99/riskfield", String::new())
            .await
            .status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, "POST", "/scenario", "{".into()).await.status,
        StatusCode::BAD_REQUEST
    );
    let id = create_demo(&app).await;
    let bad = call(
        &app,
        "POST",
        &format!("/scenario/{id}/plan"),
        "{\"start\":[0,0]}".into(),
    )
    .await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);

    let tight = MissionRequest {
        mode: Mode::SafeWithinTime { budget_s: 1.0 },
        ..demo_request()
    };
    let r = call(
        &app,
        "POST",
        &format!("/scenario/{id}/plan"),
        io::to_json(&tight),
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    let v: serde_json::Value = serde_json::from_str(&r.body).unwrap();
    assert!(v["t_min_s"].as_f64().unwrap() > 1.0);
    assert_eq!(
        call(
            &app,
            "GET",
            &format!("/scenario/{id}/profile?plan=42"),
            String::new()
        )
        .await
        .status,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn event_matches_library_repair() {
    let app = default_app();
    let id = create_demo(&app).await;
    let p = call(
        &app,
        "POST",
        &format!("/scenario/{id}/plan"),
        io::to_json(&demo_request()),
    )
    .await;
    let original: PlanResult = io::parse_json("plan", &p.body).unwrap();
    let event = popup_event(&original);
    let uri = format!("/scenario/{id}/event?plan={}&slack=0.5", p.plan_id.unwrap());
    let r = call(&app, "POST", &uri, io::to_json(&event)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let http: RepairReport = io::parse_json("event", &r.body).unwrap();

    let (sc, _) = bench::demo_scenario().unwrap();
    let prep = sc.prepare(original.formation_width_m).unwrap();
    let up =
        replan::apply_event(&sc.terrain, &sc.threats, &prep.field, &prep.graph, &event).unwrap();
    let lib = replan::compare_repair_vs_full(
        &sc.terrain,
        &up,
        &original,
        &event,
        0.5,
        &RepairOptions::default(),
    )
    .unwrap();
    assert_eq!(http.table, lib.table);
    assert_eq!(
        io::to_json(&http.repair.result),
        io::to_json(&lib.repair.result)
    );
    assert!(http.table.log_risk.post < http.table.log_risk.pre);

    // the repaired plan is stored and carries the new threat
    let new_id = r.plan_id.unwrap();
    let prof = call(
        &app,
        "GET",
        &format!("/scenario/{id}/profile?plan={new_id}"),
        String::new(),
    )
    .await;
    let points: Vec<serde_json::Value> = serde_json::from_str(&prof.body).unwrap();
    let summed: f64 = points
        .iter()
        .skip(1)
        .map(|p| p["log_risk"].as_f64().unwrap())
        .sum();
    assert!((summed - http.repair.result.kpis.total_log_risk).abs() < 1e-9);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_plans_are_deterministic() {
    let app = app(ServiceConfig {
        workers: 3,
        ..ServiceConfig::default()
    });
    let id = create_demo(&app).await;
    let mut tasks = Vec::new();
    for i in 0..24 {
        let app = app.clone();
        let alpha = [0.0, 0.5, 1.0][i % 3];
        let req = MissionRequest {
            mode: Mode::Balanced { alpha },
            ..demo_request()
        };
        tasks.push(tokio::spawn(async move {
            let r = call(
                &app,
                "POST",
                &format!("/scenario/{id}/plan"),
                io::to_json(&req),
            )
            .await;
            (i % 3, r)
        }));
    }
    let mut bodies: Vec<HashSet<String>> = vec![HashSet::new(); 3];
    let mut ids = HashSet::new();
    for t in tasks {
        let (k, r) = t.await.unwrap();
        assert_eq!(r.status, StatusCode::OK);
        assert!(ids.insert(r.plan_id.unwrap()));
        bodies[k].insert(r.body);
    }
    assert!(bodies.iter().all(|b| b.len() == 1));
    assert_eq!(ids.len(), 24);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn streamed_plan_ends_with_the_result() {
    let app = app(ServiceConfig {
        workers: 1,
        heartbeat: Duration::from_millis(1),
        ..ServiceConfig::default()
    });
    let id = create_demo(&app).await;
    let r = call(
        &app,
        "POST",
        &format!("/scenario/{id}/plan?stream=true"),
        io::to_json(&demo_request()),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let lines: Vec<serde_json::Value> = r
        .body
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let last = lines.last().unwrap();
    let (sc, req) = bench::demo_scenario().unwrap();
    let lib = sc.plan(&req, &SolverConfig::default()).unwrap();
    let want: serde_json::Value = serde_json::from_str(&io::to_json(&lib)).unwrap();
    assert_eq!(last["result"]["body"], want);
    assert!(lines[..lines.len() - 1]
        .iter()
        .all(|l| l.get("heartbeat").is_some()));

    let tight = MissionRequest {
        mode: Mode::SafeWithinTime { budget_s: 1.0 },
        ..demo_request()
    };
    let e = call(
        &app,
        "POST",
        &format!("/scenario/{id}/plan?stream=true"),
        io::to_json(&tight),
    )
    .await;
    let last: serde_json::Value = serde_json::from_str(e.body.lines().last().unwrap()).unwrap();
    assert_eq!(last["error"]["status"], 409);
}

#[tokio::test]
async fn state_dir_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        workers: 2,
        state_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let first = app(config.clone());
    let id = create_demo(&first).await;
    let p = call(
        &first,
        "POST",
        &format!("/scenario/{id}/plan"),
        io::to_json(&demo_request()),
    )
    .await;
    let pid = p.plan_id.unwrap();
    let before = call(
        &first,
        "GET",
        &format!("/scenario/{id}/waypoints?plan={pid}"),
        String::new(),
    )
    .await;
    drop(first);

    let second = app(config);
    let after = call(
        &second,
        "GET",
        &format!("/scenario/{id}/waypoints?plan={pid}"),
        String::new(),
    )
    .await;
    assert_eq!(after.status, StatusCode::OK);
    assert_eq!(after.body, before.body);
    // new ids continue after the restored ones
    let next = create_demo(&second).await;
    assert!(next > id);
}
