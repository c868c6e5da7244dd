//! HTTP/JSON API. One writer task owns the [`Engine`]; handlers send it
//! commands and await the result. Reads use the latest published immutable
//! state snapshot and never reach the writer.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State as AxState};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use gridops_core::accounting::{GroupBy, RatioMode, UsageRecord};
use gridops_core::fabric::EventAction;
use gridops_core::incidents::{StepAction, TicketKind, TicketStatus};
use gridops_core::storage_ops::{PlanOptions, Placement, SortMode};
use gridops_core::{ResourceId, Timestamp};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot, watch};

use crate::engine::{Command, Engine, EngineError, ErrorClass, Outcome, State};
use crate::reports::{parse_ratio_mode, render, state_digest, Format, Report, WindowArg};

pub const TOKEN_HEADER: &str = "x-gridops-token";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

pub struct Failure {
    status: StatusCode,
    body: ApiError,
}

impl Failure {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiError {
                code: code.to_owned(),
                message: message.into(),
            },
        }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match e.class() {
            ErrorClass::Invalid => StatusCode::BAD_REQUEST,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let mut body = serde_json::to_string(&self.body).expect("error serializes");
        body.push('\n');
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

type Job = (Command, oneshot::Sender<Result<Outcome, EngineError>>);

#[derive(Clone)]
pub struct AppState {
    jobs: mpsc::Sender<Job>,
    view: watch::Receiver<Arc<State>>,
    token: Option<Arc<str>>,
}

impl AppState {
    /// Moves `engine` into a dedicated writer task.
    pub fn spawn(engine: Engine, token: Option<String>) -> Self {
        let (jobs, mut rx) = mpsc::channel::<Job>(64);
        let (publish, view) = watch::channel(Arc::new(engine.state().clone()));
        tokio::task::spawn_blocking(move || {
            let mut engine = engine;
            while let Some((command, reply)) = rx.blocking_recv() {
                let result = engine.execute(command);
                if result.is_ok() {
                    publish.send_replace(Arc::new(engine.state().clone()));
                }
                let _ = reply.send(result);
            }
        });
        Self {
            jobs,
            view,
            token: token.map(Into::into),
        }
    }

    pub fn snapshot(&self) -> Arc<State> {
        self.view.borrow().clone()
    }

    async fn submit(&self, command: Command) -> Result<Outcome, Failure> {
        let (tx, rx) = oneshot::channel();
        let gone = || Failure::new(StatusCode::SERVICE_UNAVAILABLE, "writer_unavailable", "the writer task stopped");
        self.jobs.send((command, tx)).await.map_err(|_| gone())?;
        Ok(rx.await.map_err(|_| gone())??)
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Failure> {
    serde_json::from_slice(body).map_err(|e| Failure::bad_request("malformed_payload", e.to_string()))
}

fn param<T: std::str::FromStr>(q: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    q.get(key)
        .map(|v| v.parse::<T>().map_err(|e| Failure::bad_request("invalid_query", format!("{key}: {e}"))))
        .transpose()
}

fn window(q: &BTreeMap<String, String>) -> Result<WindowArg, Failure> {
    Ok(WindowArg {
        start: param(q, "start")?,
        end: param(q, "end")?,
    })
}

fn body_response(status: StatusCode, format: Format, body: String) -> Response {
    let content_type = match format {
        Format::Json => "application/json",
        Format::Csv => "text/csv",
    };
    (status, [(header::CONTENT_TYPE, content_type)], body).into_response()
}

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    let mut s = serde_json::to_string_pretty(value).expect("responses serialize");
    s.push('\n');
    body_response(status, Format::Json, s)
}

async fn read_report(app: &AppState, q: &BTreeMap<String, String>, report: Report) -> Result<Response, Failure> {
    let format = param::<Format>(q, "format")?.unwrap_or_default();
    let state = app.snapshot();
    let body = render(&state, &report, format).map_err(|e| Failure::bad_request("invalid_window", e.to_string()))?;
    Ok(body_response(StatusCode::OK, format, body))
}

macro_rules! report_handler {
    ($name:ident, $build:expr) => {
        async fn $name(
            AxState(app): AxState<AppState>,
            Query(q): Query<BTreeMap<String, String>>,
        ) -> Result<Response, Failure> {
            #[allow(clippy::redundant_closure_call)]
            let report = ($build)(&q)?;
            read_report(&app, &q, report).await
        }
    };
}

report_handler!(topology, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Topology));
report_handler!(whitelist, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Whitelist));
report_handler!(filling, |q: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Filling {
    sort: param::<SortMode>(q, "sort")?.unwrap_or_default()
}));
report_handler!(findings, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Findings));
report_handler!(heavy_users, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::HeavyUsers));
report_handler!(reconciliation, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Reconciliation));
report_handler!(alarms, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Alarms));
report_handler!(availability, |q: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Availability {
    window: window(q)?
}));
report_handler!(tickets, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Tickets));
report_handler!(takeover, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Takeover));
report_handler!(support_metrics, |q: &BTreeMap<String, String>| Ok::<_, Failure>(Report::SupportMetrics {
    window: window(q)?
}));
report_handler!(accounting, |q: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Accounting {
    group_by: param::<GroupBy>(q, "group_by")?.unwrap_or_default(),
    mode: q
        .get("mode")
        .map(|m| parse_ratio_mode(m).map_err(|e| Failure::bad_request("invalid_query", format!("mode: {e}"))))
        .transpose()?
        .unwrap_or(RatioMode::SumOfCounts),
    window: window(q)?,
}));
report_handler!(trend, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Trend));
report_handler!(plans, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Plans));
report_handler!(status, |_: &BTreeMap<String, String>| Ok::<_, Failure>(Report::Summary));

async fn ticket(AxState(app): AxState<AppState>, Path(id): Path<String>) -> Result<Response, Failure> {
    let state = app.snapshot();
    let t = state
        .tickets
        .get(&id)
        .ok_or_else(|| Failure::new(StatusCode::NOT_FOUND, "unknown_ticket", format!("unknown ticket {id}")))?;
    Ok(json_response(StatusCode::OK, t))
}

async fn plan(AxState(app): AxState<AppState>, Path(id): Path<String>) -> Result<Response, Failure> {
    let state = app.snapshot();
    let p = state
        .plans
        .get(&id)
        .ok_or_else(|| Failure::new(StatusCode::NOT_FOUND, "unknown_plan", format!("unknown decommission plan {id}")))?;
    Ok(json_response(StatusCode::OK, p))
}

#[derive(Serialize)]
struct DigestBody {
    digest: String,
    applied: u64,
}

async fn digest(AxState(app): AxState<AppState>) -> Response {
    let state = app.snapshot();
    json_response(
        StatusCode::OK,
        &DigestBody {
            digest: state_digest(&state),
            applied: state.applied,
        },
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenTicketBody {
    kind: TicketKind,
    #[serde(default)]
    resource_id: Option<ResourceId>,
    author: String,
    #[serde(default)]
    payload: String,
    #[serde(default)]
    at: Option<Timestamp>,
    #[serde(default)]
    alarm_id: Option<String>,
}

async fn open_ticket(AxState(app): AxState<AppState>, body: Bytes) -> Result<Response, Failure> {
    let b: OpenTicketBody = parse_body(&body)?;
    let outcome = app
        .submit(Command::OpenTicket {
            kind: b.kind,
            resource_id: b.resource_id,
            author: b.author,
            payload: b.payload,
            at: b.at,
            alarm_id: b.alarm_id,
        })
        .await?;
    Ok(json_response(StatusCode::CREATED, &outcome))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepBody {
    author: String,
    #[serde(default = "comment")]
    action: StepAction,
    #[serde(default)]
    payload: String,
    #[serde(default)]
    at: Option<Timestamp>,
    #[serde(default)]
    expected_version: Option<usize>,
}

fn comment() -> StepAction {
    StepAction::Comment
}

async fn add_step(
    AxState(app): AxState<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, Failure> {
    let b: StepBody = parse_body(&body)?;
    let outcome = app
        .submit(Command::AddStep {
            ticket_id: id,
            author: b.author,
            action: b.action,
            payload: b.payload,
            at: b.at,
            expected_version: b.expected_version,
        })
        .await?;
    Ok(json_response(StatusCode::OK, &outcome))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionBody {
    to: TicketStatus,
    author: String,
    #[serde(default)]
    at: Option<Timestamp>,
    #[serde(default)]
    expected_version: Option<usize>,
}

async fn transition(
    AxState(app): AxState<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, Failure> {
    let b: TransitionBody = parse_body(&body)?;
    let outcome = app
        .submit(Command::Transition {
            ticket_id: id,
            to: b.to,
            author: b.author,
            at: b.at,
            expected_version: b.expected_version,
        })
        .await?;
    Ok(json_response(StatusCode::OK, &outcome))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanBody {
    source: ResourceId,
    #[serde(default)]
    placement: Placement,
    #[serde(default)]
    skip_replicated: bool,
    #[serde(default)]
    eligible: Option<std::collections::BTreeSet<ResourceId>>,
}

async fn plan_decommission(AxState(app): AxState<AppState>, body: Bytes) -> Result<Response, Failure> {
    let b: PlanBody = parse_body(&body)?;
    let outcome = app
        .submit(Command::PlanDecommission {
            source: b.source,
            options: PlanOptions {
                placement: b.placement,
                skip_replicated: b.skip_replicated,
                eligible: b.eligible,
            },
        })
        .await?;
    Ok(json_response(StatusCode::CREATED, &outcome))
}

async fn execute_decommission(AxState(app): AxState<AppState>, Path(id): Path<String>) -> Result<Response, Failure> {
    let outcome = app.submit(Command::ExecuteDecommission { plan_id: id }).await?;
    Ok(json_response(StatusCode::OK, &outcome))
}

async fn faults(AxState(app): AxState<AppState>, body: Bytes) -> Result<Response, Failure> {
    let event: EventAction = parse_body(&body)?;
    let outcome = app.submit(Command::Simulate { event }).await?;
    Ok(json_response(StatusCode::OK, &outcome))
}

async fn usage(AxState(app): AxState<AppState>, body: Bytes) -> Result<Response, Failure> {
    let records: Vec<UsageRecord> = parse_body(&body)?;
    let outcome = app.submit(Command::IngestUsage { records }).await?;
    Ok(json_response(StatusCode::OK, &outcome))
}

async fn cycle(AxState(app): AxState<AppState>) -> Result<Response, Failure> {
    let outcome = app.submit(Command::Cycle).await?;
    Ok(json_response(StatusCode::OK, &outcome))
}

async fn require_token(AxState(app): AxState<AppState>, headers: HeaderMap, request: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let given = headers.get(TOKEN_HEADER).map(HeaderValue::as_bytes);
        if given != Some(token.as_bytes()) {
            return Failure::new(StatusCode::UNAUTHORIZED, "unauthorized", format!("missing or wrong {TOKEN_HEADER} header"))
                .into_response();
        }
    }
    next.run(request).await
}

async fn not_found() -> Failure {
    Failure::new(StatusCode::NOT_FOUND, "no_such_endpoint", "no such endpoint")
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/topology", get(topology))
        .route("/whitelist", get(whitelist))
        .route("/filling", get(filling))
        .route("/heavy-users", get(heavy_users))
        .route("/alarms", get(alarms))
        .route("/tickets", get(tickets).post(open_ticket))
        .route("/tickets/{id}", get(ticket))
        .route("/tickets/{id}/steps", post(add_step))
        .route("/tickets/{id}/transition", post(transition))
        .route("/takeover", get(takeover))
        .route("/metrics/support", get(support_metrics))
        .route("/metrics/accounting", get(accounting))
        .route("/metrics/availability", get(availability))
        .route("/metrics/trend", get(trend))
        .route("/reports/reconciliation", get(reconciliation))
        .route("/reports/findings", get(findings))
        .route("/decommission", get(plans))
        .route("/decommission/plan", post(plan_decommission))
        .route("/decommission/{id}", get(plan))
        .route("/decommission/{id}/execute", post(execute_decommission))
        .route("/faults", post(faults))
        .route("/usage", post(usage))
        .route("/cycle", post(cycle))
        .route("/status", get(status))
        .route("/digest", get(digest))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(app.clone(), require_token))
        .with_state(app)
}

/// Serves until ctrl-c.
pub async fn serve(engine: Engine, port: u16, token: Option<String>) -> anyhow::Result<()> {
    let app = AppState::spawn(engine, token);
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
