//! HTTP + WebSocket front end for interactive sessions.
//!
//! Each session runs in its own task that owns the [`Session`] and handles
//! commands and swarm ticks strictly in arrival order. Clients talk to it
//! through REST endpoints or a per-session WebSocket; every state change is
//! fanned out to all of that session's sockets.
//!
//! | method | path                     | body             | reply                         |
//! |--------|--------------------------|------------------|-------------------------------|
//! | POST   | `/sessions`              | partial config   | `{v, id, snapshot}`           |
//! | GET    | `/sessions`              |                  | `{v, sessions: [id]}`         |
//! | GET    | `/sessions/{id}`         |                  | snapshot message              |
//! | POST   | `/sessions/{id}/input`   | `{y}`            | `{v, events: [message]}`      |
//! | POST   | `/sessions/{id}/autoplay`|                  | `{v, events: [message]}`      |
//! | DELETE | `/sessions/{id}`         |                  | 204                           |
//! | GET    | `/sessions/{id}/ws`      | upgrade          | message stream                |

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use swarmsteer::session::{
    ClientMessage, Envelope, Phase, ServerMessage, Session, SessionConfig, SessionError,
    SessionMode, Snapshot, PROTOCOL_VERSION,
};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::{interval, Instant, MissedTickBehavior};

/// A refused command, with the HTTP status it maps to.
#[derive(Debug, Clone)]
pub struct Rejection {
    pub status: StatusCode,
    pub reason: String,
}

impl From<SessionError> for Rejection {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::WrongPhase(_) | SessionError::NotScripted(_) => StatusCode::CONFLICT,
            SessionError::NonBinary(_) | SessionError::Config(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            reason: e.to_string(),
        }
    }
}

impl IntoResponse for Rejection {
    fn into_response(self) -> Response {
        let body = Envelope::new(ServerMessage::Error {
            reason: self.reason,
        });
        (self.status, Json(body)).into_response()
    }
}

fn not_found(id: &str) -> Rejection {
    Rejection {
        status: StatusCode::NOT_FOUND,
        reason: format!("no session {id}"),
    }
}

type Reply<T> = oneshot::Sender<Result<T, Rejection>>;

enum Command {
    Input {
        y: i64,
        reply: Reply<Vec<ServerMessage>>,
    },
    Snapshot {
        reply: Reply<Snapshot>,
    },
    Autoplay {
        reply: Reply<Vec<ServerMessage>>,
    },
}

#[derive(Clone)]
struct SessionHandle {
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<Arc<str>>,
}

impl SessionHandle {
    async fn ask<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, Rejection> {
        let (tx, rx) = oneshot::channel();
        let gone = || Rejection {
            status: StatusCode::GONE,
            reason: "session closed".into(),
        };
        self.commands.send(make(tx)).await.map_err(|_| gone())?;
        rx.await.map_err(|_| gone())?
    }
}

pub struct AppState {
    defaults: Value,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    next_id: AtomicU64,
    log_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(defaults: SessionConfig, log_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            defaults: serde_json::to_value(defaults).expect("config serializes"),
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            log_dir,
        })
    }

    fn handle(&self, id: &str) -> Result<SessionHandle, Rejection> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| not_found(id))
    }
}

/// Overlay `patch` onto `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn encode(msg: ServerMessage) -> Arc<str> {
    serde_json::to_string(&Envelope::new(msg))
        .expect("messages serialize")
        .into()
}

struct Actor {
    session: Session,
    events: broadcast::Sender<Arc<str>>,
    log: Option<PathBuf>,
}

impl Actor {
    fn publish(&self, msgs: &[ServerMessage]) {
        for m in msgs {
            let _ = self.events.send(encode(m.clone()));
        }
    }

    fn publish_snapshot(&self) {
        if let Ok(s) = self.session.snapshot() {
            self.publish(&[ServerMessage::Snapshot(Box::new(s))]);
        }
    }

    fn write_log(&self) {
        if let Some(path) = &self.log {
            if let Err(e) = self.session.write_log(path) {
                tracing::warn!("writing {}: {e}", path.display());
            }
        }
    }

    fn after_input(&self, events: &[ServerMessage]) {
        self.publish(events);
        self.publish_snapshot();
        self.write_log();
    }

    fn input(&mut self, y: i64) -> Result<Vec<ServerMessage>, Rejection> {
        let events = self.session.submit_raw(y)?;
        self.after_input(&events);
        Ok(events)
    }

    fn autoplay(&mut self) -> Result<Vec<ServerMessage>, Rejection> {
        let events = self.session.autoplay()?;
        self.after_input(&events);
        Ok(events)
    }

    fn tick(&mut self, steps: usize) {
        let phase = self.session.phase();
        if phase == Phase::AwaitingInput || (phase.is_terminal() && self.session.swarm().settled())
        {
            return;
        }
        match self.session.tick_steps(steps) {
            Ok(r) => {
                self.publish(&r.events);
                if r.steps > 0 || !r.events.is_empty() {
                    self.publish_snapshot();
                }
            }
            Err(e) => self.publish(&[ServerMessage::Error {
                reason: e.to_string(),
            }]),
        }
    }

    async fn run(mut self, mut commands: mpsc::Receiver<Command>) {
        let pacing = self.session.config().pacing;
        let scripted = self.session.config().autoplay && self.session.mode() != SessionMode::Human;
        let mut ticker = interval(Duration::from_millis(pacing.tick_ms.max(1)));
        ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
        let mut answer_at: Option<Instant> = None;
        self.write_log();
        loop {
            tokio::select! {
                cmd = commands.recv() => match cmd {
                    None => break,
                    Some(Command::Input { y, reply }) => {
                        let _ = reply.send(self.input(y));
                    }
                    Some(Command::Snapshot { reply }) => {
                        let _ = reply.send(self.session.snapshot().map_err(Rejection::from));
                    }
                    Some(Command::Autoplay { reply }) => {
                        let _ = reply.send(self.autoplay());
                    }
                },
                _ = ticker.tick() => {
                    self.tick(pacing.steps_per_tick.max(1));
                    if scripted && self.session.phase() == Phase::AwaitingInput {
                        let due = *answer_at.get_or_insert_with(|| {
                            Instant::now() + Duration::from_millis(pacing.input_delay_ms)
                        });
                        if Instant::now() >= due {
                            answer_at = None;
                            if let Some(y) = self.session.scripted_input() {
                                if let Err(e) = self.input(y.as_u8() as i64) {
                                    self.publish(&[ServerMessage::Error { reason: e.reason }]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Option<Json<Value>>,
) -> Result<(StatusCode, Json<Value>), Rejection> {
    let mut cfg = state.defaults.clone();
    if let Some(Json(patch)) = body {
        merge(&mut cfg, patch);
    }
    let config: SessionConfig = serde_json::from_value(cfg).map_err(|e| Rejection {
        status: StatusCode::BAD_REQUEST,
        reason: format!("invalid session config: {e}"),
    })?;
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let session = tokio::task::block_in_place(|| Session::new(id.clone(), config))?;
    let snapshot = session.snapshot()?;
    let (commands, rx) = mpsc::channel(64);
    let (events, _) = broadcast::channel(1024);
    let actor = Actor {
        session,
        events: events.clone(),
        log: state
            .log_dir
            .as_ref()
            .map(|d| d.join(format!("{id}.jsonl"))),
    };
    tokio::spawn(actor.run(rx));
    state
        .sessions
        .lock()
        .expect("session map poisoned")
        .insert(id.clone(), SessionHandle { commands, events });
    tracing::info!("created session {id}");
    Ok((
        StatusCode::CREATED,
        Json(json!({"v": PROTOCOL_VERSION, "id": id, "snapshot": snapshot})),
    ))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Value> {
    let mut ids: Vec<String> = state
        .sessions
        .lock()
        .expect("session map poisoned")
        .keys()
        .cloned()
        .collect();
    ids.sort();
    Json(json!({"v": PROTOCOL_VERSION, "sessions": ids}))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Envelope<ServerMessage>>, Rejection> {
    let snap = state
        .handle(&id)?
        .ask(|reply| Command::Snapshot { reply })
        .await?;
    Ok(Json(Envelope::new(ServerMessage::Snapshot(Box::new(snap)))))
}

fn events_reply(events: Vec<ServerMessage>) -> Json<Value> {
    Json(json!({"v": PROTOCOL_VERSION, "events": events}))
}

async fn post_input(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<Value>,
) -> Result<Json<Value>, Rejection> {
    let handle = state.handle(&id)?;
    let y = body
        .get("y")
        .and_then(Value::as_i64)
        .ok_or_else(|| Rejection {
            status: StatusCode::BAD_REQUEST,
            reason: "body must be {\"y\": 0 | 1}".into(),
        })?;
    let events = handle.ask(|reply| Command::Input { y, reply }).await?;
    Ok(events_reply(events))
}

async fn post_autoplay(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, Rejection> {
    let handle = state.handle(&id)?;
    let events = handle.ask(|reply| Command::Autoplay { reply }).await?;
    Ok(events_reply(events))
}

async fn delete_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<StatusCode, Rejection> {
    state
        .sessions
        .lock()
        .expect("session map poisoned")
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| not_found(&id))
}

async fn ws_upgrade(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, Rejection> {
    let handle = state.handle(&id)?;
    Ok(ws.on_upgrade(move |socket| drive_socket(socket, handle)))
}

async fn drive_socket(socket: WebSocket, handle: SessionHandle) {
    let (mut sink, mut stream) = socket.split();
    let mut events = handle.events.subscribe();
    let send = |msg: ServerMessage| Message::Text(encode(msg).as_ref().into());

    match handle.ask(|reply| Command::Snapshot { reply }).await {
        Ok(s) => {
            if sink
                .send(send(ServerMessage::Snapshot(Box::new(s))))
                .await
                .is_err()
            {
                return;
            }
        }
        Err(e) => {
            let _ = sink
                .send(send(ServerMessage::Error { reason: e.reason }))
                .await;
            return;
        }
    }

    loop {
        tokio::select! {
            ev = events.recv() => match ev {
                Ok(text) => {
                    if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::debug!("socket lagged by {n} messages");
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = stream.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<Envelope<ClientMessage>>(&text) {
                    Err(e) => Some(ServerMessage::Error { reason: format!("bad message: {e}") }),
                    Ok(env) if env.v != PROTOCOL_VERSION => Some(ServerMessage::Error {
                        reason: format!("unsupported protocol version {}", env.v),
                    }),
                    Ok(Envelope { msg: ClientMessage::Input { y }, .. }) => handle
                        .ask(|reply| Command::Input { y, reply })
                        .await
                        .err()
                        .map(|e| ServerMessage::Error { reason: e.reason }),
                    Ok(Envelope { msg: ClientMessage::Autoplay, .. }) => handle
                        .ask(|reply| Command::Autoplay { reply })
                        .await
                        .err()
                        .map(|e| ServerMessage::Error { reason: e.reason }),
                    Ok(Envelope { msg: ClientMessage::Snapshot, .. }) => {
                        match handle.ask(|reply| Command::Snapshot { reply }).await {
                            Ok(s) => Some(ServerMessage::Snapshot(Box::new(s))),
                            Err(e) => Some(ServerMessage::Error { reason: e.reason }),
                        }
                    }
                };
                if let Some(msg) = reply {
                    if sink.send(send(msg)).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/input", post(post_input))
        .route("/sessions/{id}/autoplay", post(post_autoplay))
        .route("/sessions/{id}/ws", get(ws_upgrade))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
