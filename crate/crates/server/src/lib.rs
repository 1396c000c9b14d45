//! Live steering service: a real-time simulation loop behind a WebSocket.
//!
//! One thread owns the [`Simulation`]. Connection handlers push parsed
//! commands into an ordered queue and read the latest published snapshot;
//! a client that falls behind skips intermediate snapshots.

pub mod protocol;
pub mod recorder;
mod stepper;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use thiserror::Error;
use tokio::sync::{mpsc, watch};
use tower_http::services::ServeDir;

use swarmlink_core::sim::{ScenarioConfig, SimError, Simulation};

use crate::protocol::{CommandMessage, ErrorFrame, SnapshotMessage};
use crate::recorder::Recorder;
use crate::stepper::Stepper;

pub const DEFAULT_SNAPSHOT_HZ: f64 = 30.0;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] SimError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("cannot start recording in {dir}: {source}")]
    Record { dir: PathBuf, source: std::io::Error },
    #[error("invalid option: {0}")]
    Options(String),
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub scenario: ScenarioConfig,
    pub bind: SocketAddr,
    pub record: Option<PathBuf>,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    pub snapshot_hz: f64,
    pub static_dir: PathBuf,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            record: None,
            speed: 1.0,
            snapshot_hz: DEFAULT_SNAPSHOT_HZ,
            static_dir: PathBuf::from("steer-ui/dist"),
        }
    }
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::UnboundedSender<CommandMessage>,
    snapshots: watch::Receiver<Arc<SnapshotMessage>>,
}

/// A running service. Dropping it without [`RunningServer::shutdown`] leaves
/// the loop running until the process exits.
pub struct RunningServer {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stepper: Option<std::thread::JoinHandle<()>>,
    http: tokio::task::JoinHandle<()>,
    http_stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl RunningServer {
    /// Stops stepping, flushes any recording and closes the listener.
    pub async fn shutdown(mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(tx) = self.http_stop.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.stepper.take() {
            let _ = tokio::task::spawn_blocking(move || h.join()).await;
        }
        self.http.abort();
    }
}

/// Binds, starts the simulation loop and returns immediately.
pub async fn spawn(options: ServerOptions) -> Result<RunningServer, ServerError> {
    if !(options.speed > 0.0 && options.speed.is_finite()) {
        return Err(ServerError::Options(format!("speed must be positive, got {}", options.speed)));
    }
    if !(options.snapshot_hz > 0.0 && options.snapshot_hz.is_finite()) {
        return Err(ServerError::Options(format!("snapshot_hz must be positive, got {}", options.snapshot_hz)));
    }
    let sim = Simulation::new(options.scenario.clone())?;
    let recorder = match &options.record {
        Some(dir) => Some(
            Recorder::create(dir, &options.scenario)
                .map_err(|source| ServerError::Record { dir: dir.clone(), source })?,
        ),
        None => None,
    };
    let listener = tokio::net::TcpListener::bind(options.bind)
        .await
        .map_err(|source| ServerError::Bind { addr: options.bind, source })?;
    let addr = listener.local_addr()?;

    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let (snap_tx, snap_rx) = watch::channel(Arc::new(stepper::initial_message(&sim, options.speed)));
    let stop = Arc::new(AtomicBool::new(false));
    let stepper = Stepper {
        sim,
        commands: cmd_rx,
        snapshots: snap_tx,
        recorder,
        speed: options.speed,
        snapshot_hz: options.snapshot_hz,
        stop: stop.clone(),
    };
    let stepper = std::thread::Builder::new().name("swarmlink-stepper".into()).spawn(move || stepper.run())?;

    let app = router(AppState { commands: cmd_tx, snapshots: snap_rx }, options.static_dir);
    let (http_stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let http = tokio::spawn(async move {
        let serve = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = stopped.await;
        });
        if let Err(e) = serve.await {
            tracing::error!("http server stopped: {e}");
        }
    });
    tracing::info!("listening on {addr}");
    Ok(RunningServer { addr, stop, stepper: Some(stepper), http, http_stop: Some(http_stop) })
}

/// Runs until Ctrl-C.
pub async fn serve(options: ServerOptions) -> Result<(), ServerError> {
    let server = spawn(options).await?;
    tokio::signal::ctrl_c().await?;
    tracing::info!("shutting down");
    server.shutdown().await;
    Ok(())
}

fn router(state: AppState, static_dir: PathBuf) -> Router {
    Router::new().route("/ws", get(ws_upgrade)).with_state(state).fallback_service(ServeDir::new(static_dir))
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(mut socket: WebSocket, state: AppState) {
    let AppState { commands, mut snapshots } = state;
    let mut last_tick = None;
    // the current snapshot goes out immediately
    snapshots.mark_changed();
    loop {
        tokio::select! {
            changed = snapshots.changed() => {
                if changed.is_err() {
                    break;
                }
                let msg = snapshots.borrow_and_update().clone();
                if last_tick.is_some_and(|t| msg.world.tick <= t) {
                    continue;
                }
                last_tick = Some(msg.world.tick);
                let text = serde_json::to_string(&*msg).expect("snapshot serializes");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        if send_error(&mut socket, ErrorFrame::malformed("binary frames are not accepted")).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                match CommandMessage::parse(text.as_str()) {
                    Ok(cmd) => {
                        if commands.send(cmd).is_err() {
                            break;
                        }
                    }
                    Err(frame) => {
                        if send_error(&mut socket, frame).await.is_err() {
                            break;
                        }
                    }
                }
            }
        }
    }
}

async fn send_error(socket: &mut WebSocket, frame: ErrorFrame) -> Result<(), axum::Error> {
    let text = serde_json::to_string(&frame).expect("error frame serializes");
    socket.send(Message::Text(text.into())).await
}
