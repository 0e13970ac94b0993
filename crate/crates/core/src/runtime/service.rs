//! Per-session HTTP service for live viewers and human play.

use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};

use super::{run_with_hooks, RunConfig, RunError, RunOutput, RunState, StepInput, TrajectoryEntry};
use crate::agent::Agent;
use crate::canonical::to_canonical_string;
use crate::control::NormalizedAction;
use crate::eval::RunStatus;
use crate::registry::Registry;

/// A run shared between its driver and the service.
pub struct SharedRun {
    pub run: Mutex<RunState>,
    events: broadcast::Sender<String>,
    registry: Registry,
    config: RunConfig,
}

pub type Shared = Arc<SharedRun>;

fn event_line(e: &TrajectoryEntry, rec_status: RunStatus, steps_used: u32) -> String {
    to_canonical_string(&json!({
        "event": "step",
        "step": e.step,
        "episode": e.episode,
        "score": e.score,
        "run_progress": e.run_progress,
        "classification": e.classification,
        "status": rec_status,
        "steps_used": steps_used,
    }))
}

impl SharedRun {
    pub fn start(reg: &Registry, cfg: RunConfig) -> Result<Shared, RunError> {
        let run = RunState::start(reg, cfg.clone())?;
        let (events, _) = broadcast::channel(256);
        Ok(Arc::new(SharedRun {
            run: Mutex::new(run),
            events,
            registry: reg.clone(),
            config: cfg,
        }))
    }

    pub fn lock(&self) -> MutexGuard<'_, RunState> {
        self.run.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<String> {
        self.events.subscribe()
    }

    pub fn notify(&self, e: &TrajectoryEntry, status: RunStatus, steps_used: u32) {
        let _ = self.events.send(event_line(e, status, steps_used));
    }

    /// Drives the shared run with an agent; the lock is released while the
    /// agent decides so viewers are never blocked on inference.
    pub fn drive(&self, agent: &mut dyn Agent) -> Result<RunOutput, RunError> {
        run_with_hooks(&self.run, agent, |e, rec| self.notify(e, rec.status, rec.steps_used))
    }
}

#[derive(Debug)]
pub struct ServiceHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    /// Blocks until the server exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

fn canonical(status: StatusCode, v: &impl serde::Serialize) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_canonical_string(v),
    )
        .into_response()
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>, extra: Value) -> Response {
    let mut body = json!({"error": kind, "message": message.into()});
    if let (Value::Object(b), Value::Object(x)) = (&mut body, extra) {
        b.extend(x);
    }
    canonical(status, &body)
}

async fn get_state(State(s): State<Shared>) -> Response {
    let snap = s.lock().session().get_state();
    canonical(StatusCode::OK, &snap)
}

async fn get_ppm(State(s): State<Shared>) -> Response {
    let bytes = s.lock().session().render_observation().frame.to_ppm();
    ([(header::CONTENT_TYPE, "image/x-portable-pixmap")], bytes).into_response()
}

async fn get_txt(State(s): State<Shared>) -> Response {
    let text = s.lock().session().render_observation().text_grid;
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()
}

async fn get_run(State(s): State<Shared>) -> Response {
    let rec = s.lock().record().clone();
    canonical(StatusCode::OK, &rec)
}

async fn post_action(State(s): State<Shared>, body: Bytes) -> Response {
    let action: NormalizedAction = match serde_json::from_slice(&body) {
        Ok(a) => a,
        Err(e) => return error(StatusCode::BAD_REQUEST, "malformed_request", e.to_string(), json!({})),
    };
    let mut run = s.lock();
    if run.is_finished() {
        let rec = run.record();
        let kind = if rec.steps_used >= rec.max_steps {
            "budget_exhausted"
        } else {
            "run_finished"
        };
        let extra = json!({"status": rec.status, "steps_used": rec.steps_used, "max_steps": rec.max_steps});
        return error(StatusCode::CONFLICT, kind, "no actions remain in this run", extra);
    }
    let (_, obs) = run.observe();
    match run.apply(&obs, StepInput::Direct(action)) {
        Ok(entry) => {
            let rec = run.record();
            s.notify(&entry, rec.status, rec.steps_used);
            let body = json!({
                "step": entry.step,
                "verdict": entry.verdict,
                "classification": entry.classification,
                "snapshot": entry.snapshot,
                "status": rec.status,
                "steps_used": rec.steps_used,
                "budget_remaining": rec.max_steps.saturating_sub(rec.steps_used),
                "run_progress": rec.run_progress,
            });
            canonical(StatusCode::OK, &body)
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "step_failed", e.to_string(), json!({})),
    }
}

/// Starts the run over: fresh session from the configured seed and a fresh
/// record with the full budget.
async fn post_reset(State(s): State<Shared>) -> Response {
    let fresh = match RunState::start(&s.registry, s.config.clone()) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "reset_failed", e.to_string(), json!({})),
    };
    let mut run = s.lock();
    *run = fresh;
    let snap = run.session().get_state();
    let _ = s.events.send(to_canonical_string(&json!({"event": "reset", "steps_used": 0})));
    canonical(StatusCode::OK, &snap)
}

/// Newline-delimited JSON notifications, one per completed step, sent as a
/// chunked stream. The first line reports the current position.
async fn get_events(State(s): State<Shared>) -> Response {
    let rx = s.subscribe();
    let hello = {
        let run = s.lock();
        let rec = run.record();
        to_canonical_string(&json!({"event": "hello", "steps_used": rec.steps_used, "status": rec.status}))
    };
    let first = futures::stream::once(async move { Ok::<_, std::convert::Infallible>(Bytes::from(hello + "\n")) });
    let rest = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(line) => return Some((Ok(Bytes::from(line + "\n")), rx)),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let stream = futures::StreamExt::chain(first, rest);
    ([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response()
}

pub fn router(shared: Shared) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/observation.ppm", get(get_ppm))
        .route("/observation.txt", get(get_txt))
        .route("/run", get(get_run))
        .route("/events", get(get_events))
        .route("/action", post(post_action))
        .route("/reset", post(post_reset))
        .with_state(shared)
}

/// Binds `addr` and serves on a background thread. Port conflicts surface
/// here, before the thread starts.
pub fn serve_session(shared: Shared, addr: SocketAddr) -> Result<ServiceHandle, RunError> {
    let listener = TcpListener::bind(addr).map_err(|e| RunError::Service(format!("binding {addr}: {e}")))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| RunError::Service(e.to_string()))?;
    let local = listener.local_addr().map_err(|e| RunError::Service(e.to_string()))?;
    let (tx, rx) = oneshot::channel::<()>();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| RunError::Service(e.to_string()))?;
    let thread = std::thread::Builder::new()
        .name(format!("session-{}", local.port()))
        .spawn(move || {
            rt.block_on(async move {
                let Ok(listener) = tokio::net::TcpListener::from_std(listener) else {
                    return;
                };
                // Open event streams never end on their own, so shutdown
                // drops connections instead of draining them.
                tokio::select! {
                    _ = axum::serve(listener, router(shared)) => {}
                    _ = rx => {}
                }
            });
            rt.shutdown_background();
        })
        .map_err(|e| RunError::Service(e.to_string()))?;
    Ok(ServiceHandle {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
