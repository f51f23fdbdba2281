//! Session server: streams cache renders for client-supplied cameras and
//! records the poses a user keeps.
//!
//! - `POST /session` creates a session and returns `{"id": ...}`.
//! - `GET /session/{id}/stream` upgrades to a web socket. The client sends
//!   JSON [`ClientMessage`]s; each accepted pose is answered by a JSON
//!   [`ServerMessage::Frame`] header followed by two binary messages, the
//!   image PNG and the mask PNG.
//! - `GET /session/{id}/trajectory` returns the recorded poses as
//!   trajectory JSON.
//! - `GET /healthz`, and `POST /shutdown` for a graceful stop.
//!
//! One connection per session may send poses; later connections are
//! read-only until it disconnects. Recorded poses outlive connections.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex as StdMutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use geocache_core::cache::Cache3D;
use geocache_core::geometry::{Camera, Trajectory};
use geocache_core::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::{Mutex, Notify};

use crate::error::{Error, Result};
use crate::schema::{CameraJson, TrajectoryJson};
use crate::view::{encode_frame, render_view};

/// Messages a client sends over the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Render at `camera`. `seq` must exceed every previously accepted one.
    Pose {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        seq: u64,
        camera: CameraJson,
    },
    /// Append the last accepted pose to the recording.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// Precedes the image and mask PNGs of an accepted pose.
    Frame {
        seq: u64,
        /// Frames rendered so far in this session, including this one.
        frame: u64,
        width: usize,
        height: usize,
        coverage: f64,
    },
    Rejected {
        seq: u64,
        /// Highest accepted sequence number, if any.
        current: Option<u64>,
        reason: String,
    },
    Recorded {
        frames: usize,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Default)]
struct Session {
    camera: Option<Camera>,
    recorded: Vec<Camera>,
    last_seq: Option<u64>,
    frames: u64,
}

#[derive(Debug, Default)]
struct Slot {
    state: Mutex<Session>,
    writer: AtomicBool,
}

struct Shared {
    cache: Cache3D,
    splat_radius: f64,
    sessions: StdMutex<HashMap<String, Arc<Slot>>>,
    ids: StdMutex<SplitMix64>,
    shutdown: Notify,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// `seed` drives session ids only.
    pub fn new(cache: Cache3D, splat_radius: f64, seed: u64) -> Self {
        AppState(Arc::new(Shared {
            cache,
            splat_radius,
            sessions: StdMutex::new(HashMap::new()),
            ids: StdMutex::new(SplitMix64::new(seed)),
            shutdown: Notify::new(),
        }))
    }

    fn slot(&self, id: &str) -> Option<Arc<Slot>> {
        self.0.sessions.lock().expect("session table").get(id).cloned()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/session", post(create_session))
        .route("/session/{id}/stream", get(stream))
        .route("/session/{id}/trajectory", get(trajectory))
        .route("/shutdown", post(shutdown))
        .with_state(state)
}

/// Serve until `POST /shutdown` or Ctrl-C.
pub async fn serve(listener: TcpListener, state: AppState) -> Result<()> {
    let stop = state.clone();
    let addr = listener.local_addr().ok();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async move {
            tokio::select! {
                _ = stop.0.shutdown.notified() => {}
                _ = tokio::signal::ctrl_c() => {}
            }
        })
        .await
        .map_err(|source| Error::Io {
            path: addr.map(|a| a.to_string()).unwrap_or_default().into(),
            source,
        })
}

fn not_found(id: &str) -> Response {
    (StatusCode::NOT_FOUND, Json(json!({ "error": format!("unknown session {id}") }))).into_response()
}

async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    let sessions = state.0.sessions.lock().expect("session table").len();
    Json(json!({ "status": "ok", "sessions": sessions }))
}

async fn create_session(State(state): State<AppState>) -> Json<serde_json::Value> {
    let mut table = state.0.sessions.lock().expect("session table");
    let id = loop {
        let id = format!("{:016x}", state.0.ids.lock().expect("id stream").next_u64());
        if !table.contains_key(&id) {
            break id;
        }
    };
    table.insert(id.clone(), Arc::new(Slot::default()));
    Json(json!({ "id": id }))
}

async fn trajectory(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(slot) = state.slot(&id) else {
        return not_found(&id);
    };
    let recorded = slot.state.lock().await.recorded.clone();
    match Trajectory::new(recorded) {
        Ok(t) => Json(TrajectoryJson::from_trajectory(&t)).into_response(),
        Err(_) => (
            StatusCode::CONFLICT,
            Json(json!({ "error": "no poses recorded yet" })),
        )
            .into_response(),
    }
}

async fn shutdown(State(state): State<AppState>) -> StatusCode {
    state.0.shutdown.notify_one();
    StatusCode::ACCEPTED
}

async fn stream(State(state): State<AppState>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Response {
    let Some(slot) = state.slot(&id) else {
        return not_found(&id);
    };
    ws.on_upgrade(move |socket| connection(state, id, slot, socket))
}

/// Releases the writer role when the connection ends, however it ends.
struct WriterGuard(Arc<Slot>);

impl Drop for WriterGuard {
    fn drop(&mut self) {
        self.0.writer.store(false, Ordering::Release);
    }
}

async fn send_json(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn connection(state: AppState, id: String, slot: Arc<Slot>, mut socket: WebSocket) {
    let writer = slot
        .writer
        .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
        .is_ok();
    let _guard = writer.then(|| WriterGuard(Arc::clone(&slot)));

    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            Message::Binary(_) => {
                let err = ServerMessage::Error {
                    message: "expected a JSON text message".into(),
                };
                if !send_json(&mut socket, &err).await {
                    break;
                }
                continue;
            }
            _ => continue,
        };
        let parsed: std::result::Result<ClientMessage, _> = serde_json::from_str(&text);
        let reply = match parsed {
            Err(e) => Reply::Json(ServerMessage::Error {
                message: format!("bad message: {e}"),
            }),
            Ok(_) if !writer => Reply::Json(ServerMessage::Error {
                message: "another connection controls this session; this one is read-only".into(),
            }),
            Ok(msg) => handle(&state, &id, &slot, msg).await,
        };
        let ok = match reply {
            Reply::Json(m) => send_json(&mut socket, &m).await,
            Reply::Frame(header, image, mask) => {
                send_json(&mut socket, &header).await
                    && socket.send(Message::Binary(image.into())).await.is_ok()
                    && socket.send(Message::Binary(mask.into())).await.is_ok()
            }
        };
        if !ok {
            break;
        }
    }
}

enum Reply {
    Json(ServerMessage),
    Frame(ServerMessage, Vec<u8>, Vec<u8>),
}

async fn handle(state: &AppState, id: &str, slot: &Slot, msg: ClientMessage) -> Reply {
    // Held for the whole message so a session's poses are applied in order.
    let mut session = slot.state.lock().await;
    match msg {
        ClientMessage::Record => match session.camera {
            Some(cam) => {
                session.recorded.push(cam);
                Reply::Json(ServerMessage::Recorded {
                    frames: session.recorded.len(),
                })
            }
            None => Reply::Json(ServerMessage::Error {
                message: "nothing to record before the first accepted pose".into(),
            }),
        },
        ClientMessage::Pose {
            session: sid,
            seq,
            camera,
        } => {
            let reject = |reason: String| {
                Reply::Json(ServerMessage::Rejected {
                    seq,
                    current: session.last_seq,
                    reason,
                })
            };
            if sid.as_deref().is_some_and(|s| s != id) {
                return reject(format!("message is addressed to session {}", sid.unwrap_or_default()));
            }
            if session.last_seq.is_some_and(|last| seq <= last) {
                return reject("sequence number is not newer than the last accepted one".into());
            }
            let cam = match camera.to_camera() {
                Ok(c) => c,
                Err(e) => return reject(format!("invalid camera: {e}")),
            };
            let shared = Arc::clone(&state.0);
            let t = session.recorded.len();
            let rendered = tokio::task::spawn_blocking(move || {
                let frame = render_view(&shared.cache, &cam, t, shared.splat_radius)?;
                let coverage = frame.mask.coverage();
                encode_frame(&frame).map(|e| (e, coverage))
            })
            .await;
            let (encoded, coverage) = match rendered {
                Ok(Ok(v)) => v,
                Ok(Err(e)) => return reject(e.to_string()),
                Err(e) => return reject(format!("render task failed: {e}")),
            };
            session.last_seq = Some(seq);
            session.camera = Some(cam);
            session.frames += 1;
            Reply::Frame(
                ServerMessage::Frame {
                    seq,
                    frame: session.frames,
                    width: cam.width(),
                    height: cam.height(),
                    coverage,
                },
                encoded.image_png,
                encoded.mask_png,
            )
        }
    }
}
