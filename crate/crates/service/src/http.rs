//! HTTP facade over the planner. Scenarios are immutable once uploaded;
//! every plan and repair is stored under its own id.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use argus_core::apulse::SolverConfig;
use argus_core::io;
use argus_core::planner::{
    self, route_profile, PlanContext, PlanResult, PreparedScenario, Scenario,
};
use argus_core::replan::{self, DynamicEvent, RepairOptions};
use argus_core::risk::{RiskField, ThreatSpec};
use argus_core::{build_graph, CostGraph, Error};

use crate::cli::ServeArgs;

pub const PLAN_ID_HEADER: &str = "x-plan-id";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub workers: usize,
    pub timeout_s: f64,
    pub state_dir: Option<PathBuf>,
    pub heartbeat: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            workers: std::thread::available_parallelism().map_or(4, |n| n.get()),
            timeout_s: 600.0,
            state_dir: None,
            heartbeat: Duration::from_secs(1),
        }
    }
}

/// A stored plan plus what is needed to rebuild its risk field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanRecord {
    pub result: PlanResult,
    pub slack: f64,
    /// Threats added by events on top of the scenario's own.
    #[serde(default)]
    pub extra_threats: Vec<ThreatSpec>,
}

struct ScenarioEntry {
    scenario: Scenario,
    base: CostGraph,
    prepared: Mutex<HashMap<u64, Arc<PreparedScenario>>>,
    plans: RwLock<HashMap<u64, Arc<PlanRecord>>>,
    next_plan: AtomicU64,
}

impl ScenarioEntry {
    fn new(scenario: Scenario) -> Result<Self, Error> {
        scenario.validate()?;
        let base = build_graph(&scenario.terrain, &scenario.mobility)?;
        Ok(ScenarioEntry {
            scenario,
            base,
            prepared: Mutex::new(HashMap::new()),
            plans: RwLock::new(HashMap::new()),
            next_plan: AtomicU64::new(1),
        })
    }

    fn prepared(&self, width: f64) -> Result<Arc<PreparedScenario>, Error> {
        if let Some(p) = self
            .prepared
            .lock()
            .expect("cache lock")
            .get(&width.to_bits())
        {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(self.scenario.prepare_on(&self.base, width)?);
        self.prepared
            .lock()
            .expect("cache lock")
            .insert(width.to_bits(), Arc::clone(&p));
        Ok(p)
    }

    /// Field and graph for the scenario's threats plus `extra`.
    fn prepared_with(
        &self,
        width: f64,
        extra: &[ThreatSpec],
    ) -> Result<(Arc<PreparedScenario>, Vec<ThreatSpec>), Error> {
        let mut threats = self.scenario.threats.clone();
        if extra.is_empty() {
            return Ok((self.prepared(width)?, threats));
        }
        threats.extend(extra.iter().cloned());
        let field = RiskField::compute(&self.scenario.terrain, &threats, width)?;
        let graph = field.apply_to(&self.base)?;
        Ok((Arc::new(PreparedScenario { field, graph }), threats))
    }

    fn plan(&self, id: u64) -> Option<Arc<PlanRecord>> {
        self.plans.read().expect("plan lock").get(&id).cloned()
    }

    fn insert_plan(&self, record: PlanRecord) -> (u64, Arc<PlanRecord>) {
        let id = self.next_plan.fetch_add(1, Ordering::SeqCst);
        let record = Arc::new(record);
        self.plans
            .write()
            .expect("plan lock")
            .insert(id, Arc::clone(&record));
        (id, record)
    }
}

struct Inner {
    config: ServiceConfig,
    scenarios: RwLock<HashMap<u64, Arc<ScenarioEntry>>>,
    next_scenario: AtomicU64,
    permits: Arc<Semaphore>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, Error> {
        let state = AppState(Arc::new(Inner {
            permits: Arc::new(Semaphore::new(config.workers.max(1))),
            scenarios: RwLock::new(HashMap::new()),
            next_scenario: AtomicU64::new(1),
            config,
        }));
        if let Some(dir) = state.0.config.state_dir.clone() {
            state.restore(&dir)?;
        }
        Ok(state)
    }

    fn scenario(&self, id: u64) -> Result<Arc<ScenarioEntry>, ApiError> {
        self.0
            .scenarios
            .read()
            .expect("scenario lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown scenario {id}")))
    }

    fn persist(&self, name: &str, text: &str) -> Result<(), Error> {
        let Some(dir) = &self.0.config.state_dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        io::write_file(&dir.join(name), text)
    }

    fn restore(&self, dir: &Path) -> Result<(), Error> {
        let Ok(listing) = std::fs::read_dir(dir) else {
            return Ok(());
        };
        let mut names: Vec<String> = listing
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        names.sort();
        let mut scenarios = self.0.scenarios.write().expect("scenario lock");
        for name in names.iter().filter(|n| n.starts_with("scenario-")) {
            let Some(id) = parse_id(name, "scenario-") else {
                continue;
            };
            let scenario: Scenario = io::parse_json(name, &io::read_file(&dir.join(name))?)?;
            scenarios.insert(id, Arc::new(ScenarioEntry::new(scenario)?));
            self.0.next_scenario.fetch_max(id + 1, Ordering::SeqCst);
        }
        for name in names.iter().filter(|n| n.starts_with("plan-")) {
            let mut parts = name
                .trim_start_matches("plan-")
                .trim_end_matches(".json")
                .split('-');
            let (Some(Ok(sid)), Some(Ok(pid))) = (
                parts.next().map(str::parse::<u64>),
                parts.next().map(str::parse::<u64>),
            ) else {
                continue;
            };
            let Some(entry) = scenarios.get(&sid) else {
                continue;
            };
            let record: PlanRecord = io::parse_json(name, &io::read_file(&dir.join(name))?)?;
            entry
                .plans
                .write()
                .expect("plan lock")
                .insert(pid, Arc::new(record));
            entry.next_plan.fetch_max(pid + 1, Ordering::SeqCst);
        }
        Ok(())
    }
}

fn parse_id(name: &str, prefix: &str) -> Option<u64> {
    name.strip_prefix(prefix)?
        .strip_suffix(".json")?
        .parse()
        .ok()
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn not_found(message: String) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            body: serde_json::json!({ "error": message }),
        }
    }

    fn internal(message: String) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: serde_json::json!({ "error": message }),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let mut body = serde_json::json!({ "error": e.to_string() });
        let status = match &e {
            Error::Parse { .. } | Error::Shape { .. } | Error::Validation { .. } => {
                StatusCode::BAD_REQUEST
            }
            Error::InfeasibleBudget { t_min_s, .. } => {
                body["t_min_s"] = serde_json::json!(t_min_s);
                StatusCode::CONFLICT
            }
            Error::NoPath { .. } | Error::EmptyGraph => StatusCode::CONFLICT,
            Error::ResourceExhausted { .. } => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, io::to_json(&self.body))
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn with_plan_id(mut response: Response, id: u64) -> Response {
    response
        .headers_mut()
        .insert(PLAN_ID_HEADER, HeaderValue::from(id));
    response
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/scenario", post(create_scenario))
        .route("/scenario/{id}/riskfield", get(riskfield))
        .route("/scenario/{id}/plan", post(plan))
        .route("/scenario/{id}/event", post(event))
        .route("/scenario/{id}/profile", get(profile))
        .route("/scenario/{id}/waypoints", get(waypoints))
        .with_state(state)
}

#[derive(Serialize)]
struct Created {
    id: u64,
}

async fn create_scenario(
    State(state): State<AppState>,
    body: String,
) -> Result<Response, ApiError> {
    let scenario: Scenario = io::parse_json("request body", &body)?;
    let entry = tokio::task::spawn_blocking(move || ScenarioEntry::new(scenario))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let id = state.0.next_scenario.fetch_add(1, Ordering::SeqCst);
    state.persist(
        &format!("scenario-{id}.json"),
        &io::to_json(&entry.scenario),
    )?;
    state
        .0
        .scenarios
        .write()
        .expect("scenario lock")
        .insert(id, Arc::new(entry));
    Ok(json_response(
        StatusCode::CREATED,
        io::to_json(&Created { id }),
    ))
}

#[derive(Deserialize)]
struct FieldQuery {
    #[serde(default)]
    formation_width: f64,
}

async fn riskfield(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<u64>,
    Query(q): Query<FieldQuery>,
) -> Result<Response, ApiError> {
    let entry = state.scenario(id)?;
    let text = run_blocking(&state, move || {
        Ok(io::to_json(&entry.prepared(q.formation_width)?.field))
    })
    .await?;
    Ok(json_response(StatusCode::OK, text))
}

/// Runs `f` on the blocking pool once a worker permit is free.
fn spawn_solve<T, F>(state: &AppState, f: F) -> tokio::task::JoinHandle<Result<T, Error>>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, Error> + Send + 'static,
{
    let permits = Arc::clone(&state.0.permits);
    tokio::spawn(async move {
        let permit = permits
            .acquire_owned()
            .await
            .expect("semaphore is never closed");
        tokio::task::spawn_blocking(move || {
            let _permit = permit;
            f()
        })
        .await
        .unwrap_or_else(|e| Err(Error::Domain(format!("solver task failed: {e}"))))
    })
}

async fn run_blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, Error> + Send + 'static,
{
    spawn_solve(state, f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Deserialize)]
struct SolveQuery {
    timeout_s: Option<f64>,
    #[serde(default)]
    stream: bool,
}

impl SolveQuery {
    fn config(&self, state: &AppState) -> SolverConfig {
        SolverConfig {
            timeout_s: Some(self.timeout_s.unwrap_or(state.0.config.timeout_s)),
            ..SolverConfig::default()
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum StreamLine<'a> {
    Heartbeat {
        elapsed_s: f64,
    },
    Result {
        plan_id: u64,
        body: &'a serde_json::Value,
    },
    Error {
        status: u16,
        body: &'a serde_json::Value,
    },
}

/// Streams NDJSON heartbeats until the solve finishes, then one final line.
fn streamed(
    state: &AppState,
    solve: impl FnOnce() -> Result<(u64, String), Error> + Send + 'static,
) -> Response {
    let handle = spawn_solve(state, solve);
    let started = Instant::now();
    let period = state.0.config.heartbeat;
    let lines = stream::unfold(Some(handle), move |handle| async move {
        let mut handle = handle?;
        let line = tokio::select! {
            joined = &mut handle => {
                let line = match joined.map_err(|e| ApiError::internal(e.to_string())).and_then(|r| r.map_err(ApiError::from)) {
                    Ok((id, text)) => {
                        let body: serde_json::Value = serde_json::from_str(&text).expect("own output parses");
                        serde_json::to_string(&StreamLine::Result { plan_id: id, body: &body })
                    }
                    Err(e) => serde_json::to_string(&StreamLine::Error { status: e.status.as_u16(), body: &e.body }),
                };
                return Some((Ok::<_, std::convert::Infallible>(line.expect("serializable") + "\n"), None));
            }
            _ = tokio::time::sleep(period) => {
                serde_json::to_string(&StreamLine::Heartbeat { elapsed_s: started.elapsed().as_secs_f64() })
            }
        };
        Some((Ok(line.expect("serializable") + "\n"), Some(handle)))
    });
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(lines.boxed()),
    )
        .into_response()
}

async fn plan(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<u64>,
    Query(q): Query<SolveQuery>,
    body: String,
) -> Result<Response, ApiError> {
    let entry = state.scenario(id)?;
    let request = io::parse_mission("request body", &body)?;
    let config = q.config(&state);
    let persist_state = state.clone();
    let solve = move || -> Result<(u64, String), Error> {
        let prepared = entry.prepared(request.formation_width_m)?;
        let ctx = PlanContext {
            grid: &entry.scenario.terrain,
            graph: &prepared.graph,
            threats: &entry.scenario.threats,
        };
        let result = planner::plan(&ctx, &request, &config)?;
        let text = io::to_json(&result);
        let (pid, record) = entry.insert_plan(PlanRecord {
            result,
            slack: request.replan_slack,
            extra_threats: Vec::new(),
        });
        persist_state.persist(&format!("plan-{id}-{pid}.json"), &io::to_json(&*record))?;
        Ok((pid, text))
    };
    if q.stream {
        return Ok(streamed(&state, solve));
    }
    let (pid, text) = run_blocking(&state, solve).await?;
    Ok(with_plan_id(json_response(StatusCode::OK, text), pid))
}

#[derive(Deserialize)]
struct EventQuery {
    plan: u64,
    slack: Option<f64>,
    safety_margin_m: Option<f64>,
    timeout_s: Option<f64>,
}

async fn event(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<u64>,
    Query(q): Query<EventQuery>,
    body: String,
) -> Result<Response, ApiError> {
    let entry = state.scenario(id)?;
    let record = entry
        .plan(q.plan)
        .ok_or_else(|| ApiError::not_found(format!("unknown plan {}", q.plan)))?;
    let event: DynamicEvent = io::parse_json("request body", &body)?;
    let options = RepairOptions {
        safety_margin_m: q.safety_margin_m,
        solver: SolverConfig {
            timeout_s: Some(q.timeout_s.unwrap_or(state.0.config.timeout_s)),
            ..SolverConfig::default()
        },
    };
    let slack = q.slack.unwrap_or(record.slack);
    let persist_state = state.clone();
    let (pid, text) = run_blocking(&state, move || {
        let original = &record.result;
        let (prepared, threats) =
            entry.prepared_with(original.formation_width_m, &record.extra_threats)?;
        let grid = &entry.scenario.terrain;
        let update = replan::apply_event(grid, &threats, &prepared.field, &prepared.graph, &event)?;
        let report =
            replan::compare_repair_vs_full(grid, &update, original, &event, slack, &options)?;
        let mut extra = record.extra_threats.clone();
        extra.extend(event.new_threats.iter().cloned());
        let (pid, stored) = entry.insert_plan(PlanRecord {
            result: report.repair.result.clone(),
            slack,
            extra_threats: extra,
        });
        persist_state.persist(&format!("plan-{id}-{pid}.json"), &io::to_json(&*stored))?;
        Ok((pid, io::to_json(&report)))
    })
    .await?;
    Ok(with_plan_id(json_response(StatusCode::OK, text), pid))
}

#[derive(Deserialize)]
struct PlanQuery {
    plan: u64,
    #[serde(default = "one")]
    decimate: usize,
}

fn one() -> usize {
    1
}

async fn profile(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<u64>,
    Query(q): Query<PlanQuery>,
) -> Result<Response, ApiError> {
    let entry = state.scenario(id)?;
    let record = entry
        .plan(q.plan)
        .ok_or_else(|| ApiError::not_found(format!("unknown plan {}", q.plan)))?;
    let text = run_blocking(&state, move || {
        let (prepared, _) =
            entry.prepared_with(record.result.formation_width_m, &record.extra_threats)?;
        let points = route_profile(
            &entry.scenario.terrain,
            &prepared.graph,
            &record.result.path,
        )?;
        Ok(io::to_json(&points))
    })
    .await?;
    Ok(json_response(StatusCode::OK, text))
}

async fn waypoints(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<u64>,
    Query(q): Query<PlanQuery>,
) -> Result<Response, ApiError> {
    let entry = state.scenario(id)?;
    let record = entry
        .plan(q.plan)
        .ok_or_else(|| ApiError::not_found(format!("unknown plan {}", q.plan)))?;
    let text = io::export_waypoints(&entry.scenario.terrain, &record.result.path, q.decimate)?;
    Ok((
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, "text/plain".to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!(
                    "attachment; filename=\"scenario-{id}-plan-{}.waypoints\"",
                    q.plan
                ),
            ),
        ],
        text,
    )
        .into_response())
}

pub fn serve(args: &ServeArgs) -> Result<u8, Error> {
    let mut config = ServiceConfig {
        timeout_s: args.timeout_s,
        state_dir: args.state_dir.clone(),
        ..ServiceConfig::default()
    };
    if let Some(w) = args.workers {
        config.workers = w;
    }
    let state = AppState::new(config)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|source| Error::Io {
        path: "tokio runtime".into(),
        source,
    })?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .map_err(|source| Error::Io {
                path: args.addr.clone(),
                source,
            })?;
        eprintln!("listening on {}", args.addr);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|source| Error::Io {
                path: args.addr.clone(),
                source,
            })
    })?;
    Ok(0)
}
