//! Local HTTP service for one hosted program.
//!
//! The service owns a single session. Every mutation goes through the core
//! session operations under a write lock, so the JSON views are always a
//! function of the current [`SessionState`]. Run output is recorded per run as
//! an append-only event log and pushed to subscribers as server-sent events.

pub mod error;
pub mod wire;

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, Weak};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::stream::Stream as FuturesStream;
use futures::StreamExt;
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::watch;

use guiliner_core::assemble::{assemble, preview_text};
use guiliner_core::model::SessionState;
use guiliner_core::runner::{launch, OutputChunk, OutputSink, RunHandle, RunOptions, RunRecord, RunStatus, Stream};
use guiliner_core::xml::{
    attach_values, parse_spec, serialize_spec, validate_document, SpecDocument, ValidationReport, XmlError,
};

pub use error::ApiError;
pub use wire::*;

/// Why a service could not start.
#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("{path} is not a valid spec document:\n{report}")]
    Invalid { path: String, report: ValidationReport },
    #[error("cannot apply saved values: {0}")]
    Values(String),
}

/// Reads and validates a spec file.
pub fn load_spec(path: &Path) -> Result<SpecDocument, StartupError> {
    let bytes = std::fs::read(path).map_err(|e| StartupError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_spec(&bytes).map_err(|e| {
        let report = match e {
            XmlError::Schema(report) => report,
            _ => validate_document(&bytes),
        };
        StartupError::Invalid {
            path: path.display().to_string(),
            report,
        }
    })
}

/// Event log of one run. Subscribers read from any index and wait on the
/// length watch for more.
struct RunChannel {
    events: Mutex<Vec<RunEvent>>,
    len: watch::Sender<usize>,
    app: Weak<Inner>,
}

impl RunChannel {
    fn push(&self, event: RunEvent) {
        let len = {
            let mut events = self.events.lock().unwrap_or_else(|e| e.into_inner());
            events.push(event);
            events.len()
        };
        self.len.send_replace(len);
    }

    fn events_from(&self, start: usize) -> Vec<RunEvent> {
        let events = self.events.lock().unwrap_or_else(|e| e.into_inner());
        events.get(start..).map(<[RunEvent]>::to_vec).unwrap_or_default()
    }
}

impl OutputSink for RunChannel {
    fn chunk(&self, _run_id: &str, chunk: &OutputChunk) {
        self.push(RunEvent::chunk(chunk));
    }

    fn finished(&self, record: &RunRecord) {
        // The session is released before the terminal event goes out, so a
        // client that sees the final status can mutate immediately.
        if let Some(app) = self.app.upgrade() {
            let mut session = app.write_session();
            if session.active_run() == Some(record.run_id.as_str()) {
                *session = session.end_run();
            }
        }
        self.push(RunEvent::Status {
            status: record.status.clone(),
            error_notice: record.error_notice(),
        });
    }
}

struct RunEntry {
    handle: RunHandle,
    channel: Arc<RunChannel>,
}

struct Inner {
    session_id: String,
    document: SpecDocument,
    session: RwLock<SessionState>,
    runs: Mutex<HashMap<String, RunEntry>>,
    run_options: RunOptions,
}

impl Inner {
    fn read_session(&self) -> std::sync::RwLockReadGuard<'_, SessionState> {
        self.session.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_session(&self) -> std::sync::RwLockWriteGuard<'_, SessionState> {
        self.session.write().unwrap_or_else(|e| e.into_inner())
    }

    fn run(&self, run_id: &str) -> Result<(RunHandle, Arc<RunChannel>), ApiError> {
        let runs = self.runs.lock().unwrap_or_else(|e| e.into_inner());
        runs.get(run_id)
            .map(|e| (e.handle.clone(), e.channel.clone()))
            .ok_or_else(|| ApiError::unknown_run(run_id))
    }
}

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// A service over `document`, with its saved values applied and relative
    /// paths resolved against `working_dir`.
    pub fn new(document: SpecDocument, working_dir: PathBuf, run_options: RunOptions) -> Result<Self, StartupError> {
        let session = document
            .session(working_dir)
            .map_err(|e| StartupError::Values(e.to_string()))?;
        Ok(AppState {
            inner: Arc::new(Inner {
                session_id: uuid::Uuid::new_v4().to_string(),
                document,
                session: RwLock::new(session),
                runs: Mutex::new(HashMap::new()),
                run_options,
            }),
        })
    }

    pub fn session_id(&self) -> &str {
        &self.inner.session_id
    }

    /// Snapshot of the current session.
    pub fn session(&self) -> SessionState {
        self.inner.read_session().clone()
    }

    pub fn resource(&self) -> SessionResource {
        SessionResource::from_state(&self.inner.session_id, &self.inner.read_session())
    }

    /// Record of a run as it stands.
    pub fn run_record(&self, run_id: &str) -> Option<RunRecord> {
        self.inner.run(run_id).ok().map(|(h, _)| h.record())
    }

    /// Blocks until the run has finished. Not for use on async threads.
    pub fn await_run(&self, run_id: &str) -> Option<RunRecord> {
        self.inner.run(run_id).ok().map(|(h, _)| h.await_run())
    }

    /// Every event recorded for a run so far.
    pub fn run_events(&self, run_id: &str) -> Option<Vec<RunEvent>> {
        self.inner.run(run_id).ok().map(|(_, c)| c.events_from(0))
    }
}

pub fn build_router(state: AppState) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/options/{id}/value", put(put_value).delete(delete_value))
        .route("/api/reset", post(post_reset))
        .route("/api/preview", get(get_preview))
        .route("/api/run", post(post_run))
        .route("/api/runs/{run_id}", get(get_run))
        .route("/api/runs/{run_id}/kill", post(post_kill))
        .route("/api/runs/{run_id}/events", get(get_events))
        .route("/api/runs/{run_id}/output", get(get_output))
        .route("/api/spec/export", get(get_export))
        .route("/api/doc/{id}", get(get_doc))
        .with_state(state)
}

/// Binds `addr` and returns the bound address plus the server future.
pub async fn bind(
    state: AppState,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let router = build_router(state);
    Ok((local, async move { axum::serve(listener, router).await }))
}

async fn get_session(State(app): State<AppState>) -> Json<SessionResource> {
    Json(app.resource())
}

fn option_record(session: &SessionState, id: &str) -> OptionRecord {
    let spec = session.spec();
    let def = spec.option(id).expect("id was validated by the session");
    let group = spec.group_of(id).unwrap_or_default();
    OptionRecord::new(def, group, session.state(id).expect("state exists"))
}

async fn put_value(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<SetValueRequest>,
) -> Result<Json<OptionRecord>, ApiError> {
    let mut session = app.inner.write_session();
    let next = session.set_option(&id, &req.raw)?;
    *session = next;
    Ok(Json(option_record(&session, &id)))
}

async fn delete_value(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<OptionRecord>, ApiError> {
    let mut session = app.inner.write_session();
    let next = session.clear_option(&id)?;
    *session = next;
    Ok(Json(option_record(&session, &id)))
}

async fn post_reset(State(app): State<AppState>) -> Result<Json<SessionResource>, ApiError> {
    let mut session = app.inner.write_session();
    let next = session.reset_all()?;
    *session = next;
    Ok(Json(SessionResource::from_state(&app.inner.session_id, &session)))
}

pub fn preview_of(session: &SessionState) -> PreviewResponse {
    PreviewResponse {
        text: preview_text(session),
        missing: session.unmet_required(),
        argv: assemble(session).ok().map(|c| c.argv),
        cwd: session.working_dir().display().to_string(),
    }
}

async fn get_preview(State(app): State<AppState>) -> Json<PreviewResponse> {
    Json(preview_of(&app.inner.read_session()))
}

async fn post_run(State(app): State<AppState>) -> Result<Json<RunStarted>, ApiError> {
    let inner = &app.inner;
    let (len_tx, _) = watch::channel(0);
    let channel = Arc::new(RunChannel {
        events: Mutex::new(vec![RunEvent::Status {
            status: RunStatus::Running,
            error_notice: false,
        }]),
        len: len_tx,
        app: Arc::downgrade(inner),
    });
    channel.len.send_replace(1);

    // The write lock is held across launch so `finished` cannot observe the
    // session before the run is marked active.
    let mut session = inner.write_session();
    let (next, handle) = launch(&session, channel.clone(), &inner.run_options)?;
    let run_id = handle.run_id();
    let command = handle.record().command;
    *session = next;
    inner
        .runs
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(run_id.clone(), RunEntry { handle, channel });
    drop(session);
    tracing::info!(run_id = %run_id, argv = ?command.argv, "run started");
    Ok(Json(RunStarted {
        run_id,
        preview: command.preview,
        argv: command.argv,
        cwd: command.cwd.display().to_string(),
    }))
}

async fn get_run(State(app): State<AppState>, UrlPath(run_id): UrlPath<String>) -> Result<Json<RunSummary>, ApiError> {
    let (handle, _) = app.inner.run(&run_id)?;
    Ok(Json(RunSummary::new(&handle.record())))
}

async fn post_kill(State(app): State<AppState>, UrlPath(run_id): UrlPath<String>) -> Result<Json<KillResponse>, ApiError> {
    let (handle, _) = app.inner.run(&run_id)?;
    let record = tokio::task::spawn_blocking(move || handle.kill())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(KillResponse { status: record.status }))
}

/// Index of the first event to send: one past `Last-Event-ID` when resuming.
fn resume_index(headers: &HeaderMap) -> usize {
    headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<usize>().ok())
        .map_or(0, |id| id + 1)
}

async fn get_events(
    State(app): State<AppState>,
    UrlPath(run_id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Sse<impl FuturesStream<Item = Result<Event, Infallible>>>, ApiError> {
    let (_, channel) = app.inner.run(&run_id)?;
    let start = resume_index(&headers);
    let rx = channel.len.subscribe();
    let stream = event_stream(channel, rx, start);
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

fn event_stream(
    channel: Arc<RunChannel>,
    rx: watch::Receiver<usize>,
    start: usize,
) -> impl FuturesStream<Item = Result<Event, Infallible>> {
    struct Cursor {
        channel: Arc<RunChannel>,
        rx: watch::Receiver<usize>,
        next: usize,
        done: bool,
    }
    let cursor = Cursor {
        channel,
        rx,
        next: start,
        done: false,
    };
    futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if c.done {
                return None;
            }
            c.rx.borrow_and_update();
            let batch = c.channel.events_from(c.next);
            if !batch.is_empty() {
                let mut out = Vec::with_capacity(batch.len());
                for ev in batch {
                    let id = c.next;
                    c.next += 1;
                    c.done |= ev.is_terminal();
                    let data = serde_json::to_string(&ev).expect("events serialize");
                    out.push(Ok(Event::default().id(id.to_string()).event(ev.name()).data(data)));
                }
                return Some((futures::stream::iter(out), c));
            }
            if c.rx.changed().await.is_err() {
                return None;
            }
        }
    })
    .flatten()
}

#[derive(Debug, Deserialize)]
struct OutputQuery {
    stream: Option<String>,
}

async fn get_output(
    State(app): State<AppState>,
    UrlPath(run_id): UrlPath<String>,
    Query(q): Query<OutputQuery>,
) -> Result<Response, ApiError> {
    let (handle, _) = app.inner.run(&run_id)?;
    let stream = match q.stream.as_deref().unwrap_or("stdout").parse::<Stream>() {
        Ok(s) => s,
        Err(e) => return Err(ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e)),
    };
    let record = handle.record();
    let filename = format!("{}.{}", record.run_id, stream.as_str());
    let state = if record.status.is_terminal() { "finished" } else { "running" };
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{filename}\"")),
            (header::HeaderName::from_static("x-run-state"), state.to_string()),
        ],
        record.bytes(stream),
    )
        .into_response())
}

async fn get_export(State(app): State<AppState>) -> Result<Response, ApiError> {
    let session = app.session();
    let doc = attach_values(&app.inner.document, &session)?;
    Ok(([(header::CONTENT_TYPE, "application/xml; charset=utf-8")], serialize_spec(&doc)).into_response())
}

async fn get_doc(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<DocResponse>, ApiError> {
    let session = app.inner.read_session();
    let def = session
        .spec()
        .option(&id)
        .ok_or_else(|| ApiError::from(guiliner_core::ModelError::UnknownOption(id.clone())))?;
    Ok(Json(DocResponse {
        id: def.id.clone(),
        label: def.label.clone(),
        doc: def.doc.clone(),
    }))
}
