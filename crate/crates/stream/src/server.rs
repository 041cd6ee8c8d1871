//! Network front ends: the TCP producer listener and the HTTP port carrying
//! control endpoints and the `/ws` push channel.
//!
//! | route            | method | body            | response                        |
//! |------------------|--------|-----------------|---------------------------------|
//! | `/start`         | POST   |                 | `{"started":bool,"status":..}`  |
//! | `/stop`          | POST   |                 | status, or 409 when not running |
//! | `/annotate`      | POST   | `{"text":".."}` | annotation, or 409 / 400        |
//! | `/aoi_model`     | GET    |                 | AOI model JSON                  |
//! | `/aoi_model`     | PUT    | AOI model JSON  | 204, or 400 when invalid        |
//! | `/status`        | GET    |                 | status                          |
//! | `/ws`            | GET    | upgrade         | push events                     |

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gazelab::model::load_aoi_model;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, watch};
use tokio::task::JoinHandle;

use crate::hub::{ControlError, Hub};
use crate::wire::{PushEvent, SessionStatus, StatusSnapshot};

/// Line sent to a producer that connects while another one is active.
pub const BUSY_LINE: &str = "ERR producer already connected\n";

#[derive(Clone)]
struct AppState {
    hub: Arc<Hub>,
    shutdown: watch::Receiver<bool>,
}

#[derive(Debug, Deserialize)]
pub struct AnnotateRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartResponse {
    pub started: bool,
    pub status: StatusSnapshot,
}

fn error(code: StatusCode, msg: impl ToString) -> Response {
    (code, Json(json!({ "error": msg.to_string() }))).into_response()
}

fn control_error(e: ControlError) -> Response {
    let code = match e {
        ControlError::NotRunning => StatusCode::CONFLICT,
        ControlError::EmptyAnnotation => StatusCode::BAD_REQUEST,
        ControlError::Recording(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(code, e)
}

async fn start(State(s): State<AppState>) -> Response {
    match s.hub.start() {
        Ok((started, status)) => Json(StartResponse { started, status }).into_response(),
        Err(e) => control_error(e),
    }
}

async fn stop(State(s): State<AppState>) -> Response {
    match s.hub.stop() {
        Ok(status) => Json(status).into_response(),
        Err(e) => control_error(e),
    }
}

async fn annotate(State(s): State<AppState>, Json(req): Json<AnnotateRequest>) -> Response {
    match s.hub.annotate(&req.text) {
        Ok(a) => Json(a).into_response(),
        Err(e) => control_error(e),
    }
}

async fn status(State(s): State<AppState>) -> Json<StatusSnapshot> {
    Json(s.hub.status())
}

async fn get_aoi_model(State(s): State<AppState>) -> Response {
    (
        [(header::CONTENT_TYPE, "application/json")],
        s.hub.aoi_model().to_json(),
    )
        .into_response()
}

async fn put_aoi_model(State(s): State<AppState>, body: String) -> Response {
    match load_aoi_model(&body).and_then(|m| s.hub.set_aoi_model(m)) {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e),
    }
}

async fn ws_upgrade(State(s): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| push_events(socket, s))
}

async fn push_events(mut socket: WebSocket, s: AppState) {
    let mut rx = s.hub.subscribe();
    let mut shutdown = s.shutdown.clone();
    let hello = PushEvent::Status(s.hub.status()).to_json();
    if socket.send(Message::Text(hello.into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(e) => {
                    if socket.send(Message::Text(e.to_json().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::debug!("subscriber lagged, {n} events dropped");
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
            _ = shutdown.changed() => break,
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}

/// Control endpoints and push channel over one HTTP port.
pub fn router(hub: Arc<Hub>, shutdown: watch::Receiver<bool>) -> Router {
    Router::new()
        .route("/start", post(start))
        .route("/stop", post(stop))
        .route("/annotate", post(annotate))
        .route("/status", get(status))
        .route("/aoi_model", get(get_aoi_model).put(put_aoi_model))
        .route("/ws", get(ws_upgrade))
        .with_state(AppState { hub, shutdown })
}

async fn handle_producer(hub: Arc<Hub>, mut stream: TcpStream, mut shutdown: watch::Receiver<bool>) {
    let Some(_guard) = hub.try_claim_producer() else {
        let _ = stream.write_all(BUSY_LINE.as_bytes()).await;
        let _ = stream.shutdown().await;
        return;
    };
    tracing::info!("producer connected");
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::with_capacity(256);
    loop {
        buf.clear();
        let n = tokio::select! {
            r = reader.read_until(b'\n', &mut buf) => r,
            _ = shutdown.changed() => break,
        };
        match n {
            Ok(0) => break,
            Ok(_) => match std::str::from_utf8(&buf) {
                Ok(line) if line.trim().is_empty() => {}
                Ok(line) => {
                    hub.ingest_line(line);
                }
                Err(_) => {
                    hub.ingest_malformed();
                }
            },
            Err(e) => {
                tracing::warn!("producer read failed: {e}");
                break;
            }
        }
    }
    tracing::info!("producer disconnected");
}

async fn accept_producers(hub: Arc<Hub>, listener: TcpListener, mut shutdown: watch::Receiver<bool>) {
    loop {
        tokio::select! {
            r = listener.accept() => match r {
                Ok((stream, peer)) => {
                    tracing::debug!("ingest connection from {peer}");
                    let _ = stream.set_nodelay(true);
                    tokio::spawn(handle_producer(hub.clone(), stream, shutdown.clone()));
                }
                Err(e) => tracing::warn!("accept failed: {e}"),
            },
            _ = shutdown.changed() => return,
        }
    }
}

/// A running service. Dropping it without [`Server::shutdown`] leaves the
/// tasks running until the runtime ends.
pub struct Server {
    pub hub: Arc<Hub>,
    pub ingest_addr: Option<SocketAddr>,
    pub http_addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl Server {
    /// Binds the HTTP port and, when given, the producer port.
    pub async fn spawn(
        hub: Arc<Hub>,
        ingest: Option<SocketAddr>,
        http: SocketAddr,
    ) -> io::Result<Self> {
        let (tx, rx) = watch::channel(false);
        let mut tasks = Vec::new();
        let ingest_addr = match ingest {
            Some(addr) => {
                let l = TcpListener::bind(addr).await?;
                let bound = l.local_addr()?;
                tasks.push(tokio::spawn(accept_producers(hub.clone(), l, rx.clone())));
                Some(bound)
            }
            None => None,
        };
        let l = TcpListener::bind(http).await?;
        let http_addr = l.local_addr()?;
        let app = router(hub.clone(), rx.clone());
        let mut stop = rx.clone();
        tasks.push(tokio::spawn(async move {
            let r = axum::serve(l, app)
                .with_graceful_shutdown(async move {
                    let _ = stop.changed().await;
                })
                .await;
            if let Err(e) = r {
                tracing::error!("http server failed: {e}");
            }
        }));
        Ok(Self {
            hub,
            ingest_addr,
            http_addr,
            shutdown: tx,
            tasks,
        })
    }

    /// Stops listeners and subscribers, then finalizes a running session.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        for t in self.tasks {
            let _ = t.await;
        }
        if self.hub.status().status == SessionStatus::Running {
            let _ = self.hub.stop();
        }
    }
}
