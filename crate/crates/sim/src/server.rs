//! Live host: one engine thread fed by a shared inbound queue, and any number
//! of WebSocket clients receiving every snapshot from their join point.

use std::io::Write;
use std::sync::Arc;
use std::sync::atomic::{AtomicBool, Ordering};

use axum::Router;
use axum::extract::State;
use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::response::{Html, IntoResponse, Json};
use axum::routing::get;
use gazepick::evaluation::EngineSetup;
use gazepick::gaze_sources::{CameraPose, SyntheticCamera, estimate_camera_homography, project_to_camera};
use gazepick::geometry::{Frame, InterfaceCalibration, build_affine};
use gazepick::service::{BAD_MESSAGE_REPLY, Engine, InboundMsg, InboundQueue, Pacing, PushOutcome, parse_inbound, run_loop};
use tokio::sync::{broadcast, watch};
use tracing::{debug, info, warn};

use crate::CliError;

/// Snapshots a slow client may fall behind by before it is disconnected.
const BROADCAST_DEPTH: usize = 4096;

pub struct ServeOptions {
    pub bind: String,
    pub setup: EngineSetup,
    pub camera_sim: bool,
    pub seed: u64,
}

#[derive(Clone)]
struct AppState {
    queue: Arc<InboundQueue>,
    snapshots: broadcast::Sender<Utf8Bytes>,
    shutdown: watch::Receiver<bool>,
    camera: Option<Arc<(SyntheticCamera, InterfaceCalibration)>>,
    calib_json: Arc<serde_json::Value>,
}

pub fn serve(opts: ServeOptions) -> Result<(), CliError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(format!("starting runtime: {e}")))?;
    rt.block_on(run(opts))
}

async fn run(opts: ServeOptions) -> Result<(), CliError> {
    let cfg = opts.setup.engine_config(opts.seed)?;
    let calib = cfg.calib.clone();
    let mut engine = Engine::new(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let camera = if opts.camera_sim {
        let cam = SyntheticCamera::looking_at(&calib, &CameraPose::default()).map_err(|e| CliError::Config(e.to_string()))?;
        let h = estimate_camera_homography(&cam, &calib, opts.seed).map_err(|e| CliError::Config(e.to_string()))?;
        engine.set_camera_homography(Some(h));
        Some(Arc::new((cam, calib.clone())))
    } else {
        None
    };
    let affine = build_affine(&calib)?;
    let calib_json = serde_json::json!({
        "calib": calib,
        "workspace_px": calib.workspace_px(),
        "menu": engine.config().menu,
        "interface_to_robot": affine.matrix(),
        "tick_rate": engine.config().tick_rate,
        "block_side": opts.setup.block_side,
        "camera_sim": opts.camera_sim,
    });

    let listener = tokio::net::TcpListener::bind(&opts.bind)
        .await
        .map_err(|e| CliError::Config(format!("cannot bind {}: {e}", opts.bind)))?;
    let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("listening on http://{addr}");
    let _ = std::io::stdout().flush();

    let queue = Arc::new(InboundQueue::default());
    let (snapshots, _) = broadcast::channel(BROADCAST_DEPTH);
    let stop = Arc::new(AtomicBool::new(false));
    let engine_thread = {
        let queue = Arc::clone(&queue);
        let stop = Arc::clone(&stop);
        let tx = snapshots.clone();
        std::thread::Builder::new()
            .name("engine".into())
            .spawn(move || {
                let mut src: &InboundQueue = &queue;
                run_loop(&mut engine, &mut src, Pacing::RealTime, &stop, |snap, _| {
                    // no receivers is fine
                    let _ = tx.send(Utf8Bytes::from(snap.to_json()));
                })
            })
            .map_err(|e| CliError::Runtime(format!("starting engine thread: {e}")))?
    };

    let (shutdown_tx, shutdown) = watch::channel(false);
    let state = AppState { queue, snapshots, shutdown, camera, calib_json: Arc::new(calib_json) };
    let app = Router::new()
        .route("/", get(page))
        .route("/calib.json", get(calib_info))
        .route("/ws", get(ws_upgrade))
        .with_state(state);
    let served = axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            let _ = tokio::signal::ctrl_c().await;
            info!("shutting down");
            let _ = shutdown_tx.send(true);
        })
        .await;
    stop.store(true, Ordering::Relaxed);
    let looped = engine_thread.join().map_err(|_| CliError::Runtime("engine thread panicked".into()))?;
    served.map_err(|e| CliError::Runtime(e.to_string()))?;
    looped.map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

async fn page() -> Html<&'static str> {
    Html(include_str!("page.html"))
}

async fn calib_info(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.calib_json.as_ref().clone())
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(st): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, st))
}

/// Interface-frame gaze re-expressed as the synthetic camera would see it.
fn through_camera(msg: InboundMsg, camera: Option<&(SyntheticCamera, InterfaceCalibration)>) -> InboundMsg {
    match (msg, camera) {
        (InboundMsg::Gaze { t, p, frame: Frame::Interface, valid }, Some((cam, calib))) => {
            let seen = if valid { project_to_camera(cam, calib.interface_to_surface(p)).ok() } else { None };
            match seen {
                Some(q) => InboundMsg::Gaze { t, p: q, frame: Frame::Camera, valid: true },
                None => InboundMsg::Gaze { t, p, frame: Frame::Camera, valid: false },
            }
        }
        (m, _) => m,
    }
}

async fn client(mut socket: WebSocket, st: AppState) {
    let mut rx = st.snapshots.subscribe();
    let mut shutdown = st.shutdown.clone();
    loop {
        tokio::select! {
            snap = rx.recv() => match snap {
                Ok(text) => {
                    if socket.send(Message::Text(text)).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    // closing keeps every delivered sequence gap-free
                    warn!(missed = n, "client too slow, disconnecting");
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            inbound = socket.recv() => match inbound {
                Some(Ok(Message::Text(text))) => match parse_inbound(text.as_str()) {
                    Ok(msg) => {
                        if st.queue.push(through_camera(msg, st.camera.as_deref())) != PushOutcome::Queued {
                            debug!("inbound queue full, gaze sample shed");
                        }
                    }
                    Err(e) => {
                        debug!(%e, "bad message");
                        if socket.send(Message::Text(BAD_MESSAGE_REPLY.into())).await.is_err() {
                            break;
                        }
                    }
                },
                Some(Ok(Message::Binary(_))) => {
                    if socket.send(Message::Text(BAD_MESSAGE_REPLY.into())).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
            _ = shutdown.changed() => break,
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}
