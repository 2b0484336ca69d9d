//! SIEM ingestion, alerting, vulnerability and configuration assessment.
//! Every route needs an administrator session.

use axum::extract::{Path, State};
use axum::http::header::CONTENT_TYPE;
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use gatekeep_core::siem::{Advisory, Alert, AlertRule, Assessment, ConfigCheck, IngestReport, InventoryRecord, Vulnerable};

use crate::auth::AdminCaller;
use crate::error::{ApiResult, Body};
use crate::AppState;

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/ingest", post(ingest))
        .route("/alerts", get(alerts))
        .route("/rules", get(rules).put(set_rules))
        .route("/inventory", post(inventory))
        .route("/advisories", put(advisories))
        .route("/vulnerable", get(vulnerable))
        .route("/hosts/{id}/config", put(host_config))
        .route("/checks", put(checks))
        .route("/assess", post(assess))
        .route("/export", get(export))
        .route("/export/fields", put(export_fields))
}

async fn ingest(State(s): State<AppState>, _: AdminCaller, Body(batch): Body<Vec<Value>>) -> Json<IngestReport> {
    Json(s.platform.siem.ingest(batch))
}

async fn alerts(State(s): State<AppState>, _: AdminCaller) -> Json<Vec<Alert>> {
    Json(s.platform.siem.raise_alerts(s.platform.clock.now()))
}

async fn rules(State(s): State<AppState>, _: AdminCaller) -> Json<Vec<AlertRule>> {
    Json(s.platform.siem.rules())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Count {
    pub count: usize,
}

async fn set_rules(
    State(s): State<AppState>,
    _: AdminCaller,
    Body(rules): Body<Vec<AlertRule>>,
) -> ApiResult<Json<Count>> {
    let count = rules.len();
    s.platform.siem.set_rules(rules)?;
    Ok(Json(Count { count }))
}

async fn inventory(
    State(s): State<AppState>,
    _: AdminCaller,
    Body(records): Body<Vec<InventoryRecord>>,
) -> ApiResult<Json<Count>> {
    Ok(Json(Count {
        count: s.platform.siem.set_inventory(records)?,
    }))
}

async fn advisories(
    State(s): State<AppState>,
    _: AdminCaller,
    Body(list): Body<Vec<Advisory>>,
) -> ApiResult<Json<Count>> {
    let count = list.len();
    s.platform.siem.set_advisories(list)?;
    Ok(Json(Count { count }))
}

async fn vulnerable(State(s): State<AppState>, _: AdminCaller) -> ApiResult<Json<Vec<Vulnerable>>> {
    Ok(Json(s.platform.siem.vulnerable()?))
}

async fn host_config(
    State(s): State<AppState>,
    _: AdminCaller,
    Path(id): Path<String>,
    Body(doc): Body<Value>,
) -> Json<Count> {
    s.platform.siem.set_host_config(&id, doc);
    Json(Count { count: 1 })
}

/// A check as an expression (`ssh.password_auth == false`) or spelled out.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckSpec {
    Expr { check_id: String, expr: String },
    Full(ConfigCheck),
}

async fn checks(
    State(s): State<AppState>,
    _: AdminCaller,
    Body(specs): Body<Vec<CheckSpec>>,
) -> ApiResult<Json<Count>> {
    let parsed = specs
        .into_iter()
        .map(|c| match c {
            CheckSpec::Expr { check_id, expr } => ConfigCheck::parse(&check_id, &expr),
            CheckSpec::Full(c) => Ok(c),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let count = parsed.len();
    s.platform.siem.set_checks(parsed);
    Ok(Json(Count { count }))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct AssessRequest {
    #[serde(default)]
    pub hosts: Option<Vec<String>>,
}

async fn assess(
    State(s): State<AppState>,
    _: AdminCaller,
    Body(req): Body<AssessRequest>,
) -> ApiResult<Json<Assessment>> {
    Ok(Json(s.platform.siem.assess(req.hosts.as_deref())?))
}

/// The allowlisted stream handed to the external monitoring provider, one
/// JSON object per line.
async fn export(State(s): State<AppState>, _: AdminCaller) -> impl IntoResponse {
    let mut out = String::new();
    for v in s.platform.siem.export() {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    ([(CONTENT_TYPE, "application/x-ndjson")], out)
}

async fn export_fields(
    State(s): State<AppState>,
    _: AdminCaller,
    Body(fields): Body<Vec<String>>,
) -> Json<Count> {
    let count = fields.len();
    s.platform.siem.set_export_fields(fields);
    Json(Count { count })
}
