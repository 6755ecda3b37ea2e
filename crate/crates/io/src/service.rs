//! JSON-over-HTTP front end.
//!
//! Every response body is canonical JSON carrying `engine_version` and the
//! hash of the model it was computed from (`null` before a model is loaded).
//! Requests take a snapshot of the current model, so a model replaced
//! mid-request never mixes into a running computation.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use hsgd_core::planner::{Budgets, PlannerError};
use hsgd_core::scenario::{compare, BackstepGuard, ControlScenario, CriterionConfig, TimeDiagram};
use hsgd_core::{DiagramId, ScenarioReport, StateId, Tick};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::export::to_canonical_json;
use crate::workspace::{OpError, RunOutcome, Workspace};
use crate::ENGINE_VERSION;

#[derive(Debug, Clone, Serialize)]
struct StoredReport {
    report: ScenarioReport,
    schedule: TimeDiagram,
}

#[derive(Default)]
struct Shared {
    workspace: Option<Arc<Workspace>>,
    /// Reports of runs against the current model, keyed by content id.
    reports: BTreeMap<String, StoredReport>,
}

#[derive(Clone, Default)]
pub struct AppState {
    shared: Arc<RwLock<Shared>>,
}

impl AppState {
    pub fn with_workspace(workspace: Workspace) -> Self {
        let state = Self::default();
        state.shared.write().expect("state lock").workspace = Some(Arc::new(workspace));
        state
    }

    fn snapshot(&self) -> Option<Arc<Workspace>> {
        self.shared.read().expect("state lock").workspace.clone()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/model", get(get_model).post(post_model))
        .route("/run", post(post_run))
        .route("/inertial", post(post_inertial))
        .route("/plan", post(post_plan))
        .route("/compare", post(post_compare))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn reply(status: StatusCode, hash: Option<&str>, body: Value) -> Response {
    let mut body = match body {
        Value::Object(map) => map,
        other => {
            let mut map = serde_json::Map::new();
            map.insert("result".into(), other);
            map
        }
    };
    body.insert("engine_version".into(), json!(ENGINE_VERSION));
    body.insert("model_hash".into(), json!(hash));
    (status, [(header::CONTENT_TYPE, "application/json")], to_canonical_json(&Value::Object(body))).into_response()
}

fn failure(status: StatusCode, hash: Option<&str>, message: impl std::fmt::Display) -> Response {
    reply(status, hash, json!({ "error": message.to_string() }))
}

fn no_model() -> Response {
    failure(StatusCode::NOT_FOUND, None, "no model loaded")
}

fn op_failure(hash: &str, e: OpError) -> Response {
    let status = match e {
        OpError::UnknownScenario(_) | OpError::UnknownRules(_) | OpError::NoRules => StatusCode::NOT_FOUND,
        OpError::InvalidHorizon(_) | OpError::AmbiguousRules(_) => StatusCode::BAD_REQUEST,
        OpError::Planner(PlannerError::NoPlanExists(_)) => StatusCode::NOT_FOUND,
        OpError::Scenario(_) | OpError::Planner(_) => StatusCode::UNPROCESSABLE_ENTITY,
    };
    failure(status, Some(hash), e)
}

fn body<T: DeserializeOwned>(bytes: &[u8], hash: Option<&str>) -> Result<T, Box<Response>> {
    let bytes = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { bytes };
    serde_json::from_slice(bytes)
        .map_err(|e| Box::new(failure(StatusCode::BAD_REQUEST, hash, format!("bad request body: {e}"))))
}

async fn get_model(State(state): State<AppState>) -> Response {
    let Some(ws) = state.snapshot() else { return no_model() };
    reply(StatusCode::OK, Some(&ws.hash), json!({ "model": ws.summary(), "warnings": ws.warnings }))
}

async fn post_model(State(state): State<AppState>, text: Bytes) -> Response {
    let current = state.snapshot();
    let current_hash = current.as_ref().map(|w| w.hash.as_str());
    let Ok(text) = std::str::from_utf8(&text) else {
        return failure(StatusCode::BAD_REQUEST, current_hash, "model text must be UTF-8");
    };
    match Workspace::load(text) {
        Ok(ws) => {
            let ws = Arc::new(ws);
            let out = reply(
                StatusCode::OK,
                Some(&ws.hash),
                json!({ "status": "ok", "model": ws.summary(), "warnings": ws.warnings }),
            );
            let mut shared = state.shared.write().expect("state lock");
            shared.workspace = Some(ws);
            shared.reports.clear();
            out
        }
        Err(diagnostics) => reply(
            StatusCode::UNPROCESSABLE_ENTITY,
            current_hash,
            json!({ "status": "rejected", "diagnostics": diagnostics }),
        ),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    /// A declared scenario; otherwise `schedule` and `horizon` describe one inline.
    scenario: Option<String>,
    id: Option<String>,
    schedule: Option<TimeDiagram>,
    horizon: Option<Tick>,
    priority: Option<u32>,
    weights: Option<(f64, f64)>,
    #[serde(default)]
    guards: Vec<BackstepGuard>,
}

fn store(state: &AppState, ws: &Workspace, outcome: &RunOutcome, schedule: TimeDiagram) -> String {
    let stored = StoredReport { report: outcome.report.clone(), schedule };
    let id = hex::encode(&Sha256::digest(to_canonical_json(&stored).as_bytes())[..8]);
    let mut shared = state.shared.write().expect("state lock");
    // a report computed against a model replaced meanwhile is not kept
    if shared.workspace.as_ref().is_some_and(|w| w.hash == ws.hash) {
        shared.reports.insert(id.clone(), stored);
    }
    id
}

fn run_reply(
    state: &AppState,
    ws: &Workspace,
    outcome: Result<RunOutcome, OpError>,
    schedule: TimeDiagram,
) -> Response {
    match outcome {
        Ok(outcome) => {
            let report_id = store(state, ws, &outcome, schedule);
            reply(
                StatusCode::OK,
                Some(&ws.hash),
                json!({
                    "report_id": report_id,
                    "report": outcome.report,
                    "trajectory": outcome.trajectory,
                    "verdict": outcome.verdict,
                }),
            )
        }
        Err(e) => op_failure(&ws.hash, e),
    }
}

async fn post_run(State(state): State<AppState>, bytes: Bytes) -> Response {
    let Some(ws) = state.snapshot() else { return no_model() };
    let req: RunRequest = match body(&bytes, Some(&ws.hash)) {
        Ok(r) => r,
        Err(resp) => return *resp,
    };
    if let Some(name) = &req.scenario {
        if req.schedule.is_some() {
            return failure(StatusCode::BAD_REQUEST, Some(&ws.hash), "give either `scenario` or `schedule`, not both");
        }
        let schedule = ws.document.scenario(name).map(|s| s.schedule.clone()).unwrap_or_default();
        let outcome = ws.run_named(name, req.horizon);
        return run_reply(&state, &ws, outcome, schedule);
    }
    let Some(horizon) = req.horizon else {
        return failure(StatusCode::BAD_REQUEST, Some(&ws.hash), "an inline scenario needs `horizon`");
    };
    let schedule = req.schedule.unwrap_or_default();
    let mut scenario =
        ControlScenario::new(req.id.unwrap_or_else(|| "inline".into()), &ws.model, schedule.clone(), horizon);
    if let Some(p) = req.priority {
        scenario.priority = p;
    }
    if let Some((rank_weight, cost_weight)) = req.weights {
        scenario.criterion = CriterionConfig { rank_weight, cost_weight };
    }
    scenario.guards = req.guards;
    let outcome = ws.run(&scenario, None);
    run_reply(&state, &ws, outcome, schedule)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InertialRequest {
    horizon: Tick,
}

async fn post_inertial(State(state): State<AppState>, bytes: Bytes) -> Response {
    let Some(ws) = state.snapshot() else { return no_model() };
    let req: InertialRequest = match body(&bytes, Some(&ws.hash)) {
        Ok(r) => r,
        Err(resp) => return *resp,
    };
    let outcome = ws.inertial(req.horizon);
    run_reply(&state, &ws, outcome, TimeDiagram::new())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BudgetsRequest {
    resource: Option<f64>,
    time: Option<Tick>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanRequest {
    from: StateId,
    to: StateId,
    diagram: Option<DiagramId>,
    #[serde(default)]
    budgets: BudgetsRequest,
}

async fn post_plan(State(state): State<AppState>, bytes: Bytes) -> Response {
    let Some(ws) = state.snapshot() else { return no_model() };
    let req: PlanRequest = match body(&bytes, Some(&ws.hash)) {
        Ok(r) => r,
        Err(resp) => return *resp,
    };
    let budgets = Budgets { resource: req.budgets.resource, time: req.budgets.time };
    match ws.plan(req.diagram.as_ref(), &req.from, &req.to, budgets) {
        Ok(outcome) => reply(StatusCode::OK, Some(&ws.hash), json!(outcome)),
        Err(e) => op_failure(&ws.hash, e),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    reports: Vec<String>,
}

async fn post_compare(State(state): State<AppState>, bytes: Bytes) -> Response {
    let Some(ws) = state.snapshot() else { return no_model() };
    let req: CompareRequest = match body(&bytes, Some(&ws.hash)) {
        Ok(r) => r,
        Err(resp) => return *resp,
    };
    if req.reports.is_empty() {
        return failure(StatusCode::BAD_REQUEST, Some(&ws.hash), "name at least one report");
    }
    let mut selected = Vec::with_capacity(req.reports.len());
    {
        let shared = state.shared.read().expect("state lock");
        for id in &req.reports {
            match shared.reports.get(id) {
                Some(r) => selected.push((id.clone(), r.clone())),
                None => return failure(StatusCode::NOT_FOUND, Some(&ws.hash), format!("missing report `{id}`")),
            }
        }
    }
    let reports: Vec<ScenarioReport> = selected.iter().map(|(_, r)| r.report.clone()).collect();
    match compare(&reports) {
        Ok(ranking) => {
            let rows: Vec<Value> = selected
                .iter()
                .map(|(id, r)| json!({ "report_id": id, "report": r.report, "schedule": r.schedule }))
                .collect();
            reply(StatusCode::OK, Some(&ws.hash), json!({ "ranking": ranking, "reports": rows }))
        }
        Err(e) => failure(StatusCode::UNPROCESSABLE_ENTITY, Some(&ws.hash), e),
    }
}
