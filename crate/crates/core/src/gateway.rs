//! The HTTP service in front of the runtime.
//!
//! One listener accepts register/invoke/deregister requests; every request
//! is placed in a bounded FIFO queue and served by a fixed pool of worker
//! threads driving the runtime, so at most `worker_count` invocations
//! execute simultaneously. A full queue rejects with 503 rather than
//! building unbounded backlog. `/metrics` and `/functions` are read-only
//! and answered inline.
//!
//! Status mapping: 200 ok, 400 malformed request, 404 not-registered,
//! 500 guest-error, 503 rejected-queue-full, 507 oom. Error bodies carry a
//! machine-readable `outcome` field.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine as _;
use crossbeam_channel::{Receiver, Sender, TrySendError};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::oneshot;

use crate::accounting::{GIB, MIB};
use crate::runtime::{Outcome, Runtime, RuntimeConfig};

/// Gateway tunables. Runtime-level knobs live in [`RuntimeConfig`].
#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub addr: SocketAddr,
    /// Fixed worker pool size; the stand-in for CPU isolation.
    pub worker_count: usize,
    /// Bounded FIFO request queue capacity.
    pub queue_capacity: usize,
    /// Largest accepted /invoke and /deregister body.
    pub invoke_body_limit: usize,
    /// Largest accepted /register body (base64-inflated artifact plus envelope).
    pub register_body_limit: usize,
    /// How long shutdown waits for queued work to drain.
    pub drain_deadline: Duration,
    pub runtime: RuntimeConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".parse().expect("static address"),
            worker_count: std::thread::available_parallelism()
                .map(|n| n.get() * 2)
                .unwrap_or(4),
            queue_capacity: 1024,
            invoke_body_limit: 4 * MIB as usize,
            register_body_limit: 24 * MIB as usize,
            drain_deadline: Duration::from_secs(10),
            runtime: RuntimeConfig::default(),
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.worker_count == 0 {
            return Err("worker_count must be at least 1".into());
        }
        if self.queue_capacity == 0 {
            return Err("queue_capacity must be at least 1".into());
        }
        self.runtime.validate()
    }
}

/// One queued request. All three mutating methods flow through the same
/// queue and worker pool.
enum Job {
    Register {
        code: Vec<u8>,
        fid: String,
        fep: String,
        mem: u64,
        language: String,
        respond: oneshot::Sender<bool>,
    },
    Deregister {
        fid: String,
        respond: oneshot::Sender<bool>,
    },
    Invoke {
        fid: String,
        args: String,
        enqueued: Instant,
        respond: oneshot::Sender<InvocationRecord>,
    },
}

/// Per-invocation record assembled by the worker.
#[derive(Debug, Clone)]
pub struct InvocationRecord {
    pub fid: String,
    pub outcome: Outcome,
    pub cold: bool,
    pub enqueued: Instant,
    pub started: Instant,
    pub finished: Instant,
}

struct Shared {
    runtime: Arc<Runtime>,
    queue: Sender<Job>,
}

/// A running gateway. Dropping it without calling [`Gateway::shutdown`]
/// aborts the listener without draining.
pub struct Gateway {
    runtime: Arc<Runtime>,
    local_addr: SocketAddr,
    shutdown_tx: Option<oneshot::Sender<()>>,
    server_thread: Option<JoinHandle<()>>,
    workers: Vec<JoinHandle<()>>,
    queue_tx: Option<Sender<Job>>,
    drain_deadline: Duration,
}

impl Gateway {
    /// Bind, spawn the worker pool, and start serving.
    pub fn start(cfg: GatewayConfig) -> anyhow::Result<Gateway> {
        cfg.validate().map_err(|e| anyhow::anyhow!(e))?;
        let runtime = Runtime::new(cfg.runtime.clone());
        Self::start_with_runtime(cfg, runtime)
    }

    pub fn start_with_runtime(cfg: GatewayConfig, runtime: Arc<Runtime>) -> anyhow::Result<Gateway> {
        let (queue_tx, queue_rx) = crossbeam_channel::bounded::<Job>(cfg.queue_capacity);

        let workers = (0..cfg.worker_count)
            .map(|i| {
                let rx = queue_rx.clone();
                let rt = runtime.clone();
                std::thread::Builder::new()
                    .name(format!("isovisor-worker-{i}"))
                    .spawn(move || worker_loop(rx, rt))
                    .expect("spawning gateway worker")
            })
            .collect();

        let shared = Arc::new(Shared {
            runtime: runtime.clone(),
            queue: queue_tx.clone(),
        });

        let app = Router::new()
            .route(
                "/register",
                post(handle_register).layer(DefaultBodyLimit::max(cfg.register_body_limit)),
            )
            .route(
                "/invoke",
                post(handle_invoke).layer(DefaultBodyLimit::max(cfg.invoke_body_limit)),
            )
            .route(
                "/deregister",
                post(handle_deregister).layer(DefaultBodyLimit::max(cfg.invoke_body_limit)),
            )
            .route("/metrics", get(handle_metrics))
            .route("/functions", get(handle_functions))
            .with_state(shared);

        let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel::<anyhow::Result<SocketAddr>>();
        let bind_addr = cfg.addr;

        let server_thread = std::thread::Builder::new()
            .name("isovisor-gateway".into())
            .spawn(move || {
                let tokio_rt = tokio::runtime::Builder::new_current_thread()
                    .enable_all()
                    .build()
                    .expect("building gateway tokio runtime");
                tokio_rt.block_on(async move {
                    let listener = match tokio::net::TcpListener::bind(bind_addr).await {
                        Ok(l) => l,
                        Err(e) => {
                            let _ = addr_tx.send(Err(anyhow::anyhow!("bind {bind_addr}: {e}")));
                            return;
                        }
                    };
                    let local = listener.local_addr().expect("bound listener has an address");
                    let _ = addr_tx.send(Ok(local));
                    tracing::info!(%local, "gateway listening");
                    let serve = axum::serve(listener, app).with_graceful_shutdown(async move {
                        let _ = shutdown_rx.await;
                    });
                    if let Err(e) = serve.await {
                        tracing::error!(error = %e, "gateway server error");
                    }
                });
            })
            .expect("spawning gateway thread");

        let local_addr = addr_rx
            .recv()
            .map_err(|_| anyhow::anyhow!("gateway thread exited before binding"))??;

        Ok(Gateway {
            runtime,
            local_addr,
            shutdown_tx: Some(shutdown_tx),
            server_thread: Some(server_thread),
            workers,
            queue_tx: Some(queue_tx),
            drain_deadline: cfg.drain_deadline,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn runtime(&self) -> &Arc<Runtime> {
        &self.runtime
    }

    /// Stop accepting, drain queued work up to the deadline, then reap all
    /// pooled isolates.
    pub fn shutdown(mut self) {
        if let Some(tx) = self.shutdown_tx.take() {
            let _ = tx.send(());
        }
        if let Some(handle) = self.server_thread.take() {
            let _ = handle.join();
        }
        // Closing the queue lets workers drain what is left and exit.
        drop(self.queue_tx.take());
        let deadline = Instant::now() + self.drain_deadline;
        for worker in self.workers.drain(..) {
            if Instant::now() >= deadline {
                // Past the deadline: leave stragglers to finish detached.
                break;
            }
            let _ = worker.join();
        }
        self.runtime.drain();
        tracing::info!("gateway shut down");
    }

    /// Block until the server thread exits (e.g. after SIGINT triggers the
    /// in-process shutdown path), then drain.
    pub fn join(mut self) {
        if let Some(handle) = self.server_thread.take() {
            let _ = handle.join();
        }
        drop(self.queue_tx.take());
        for worker in self.workers.drain(..) {
            let _ = worker.join();
        }
        self.runtime.drain();
    }
}

fn worker_loop(rx: Receiver<Job>, runtime: Arc<Runtime>) {
    while let Ok(job) = rx.recv() {
        match job {
            Job::Register {
                code,
                fid,
                fep,
                mem,
                language,
                respond,
            } => {
                let accepted = runtime.register(code, &fid, &fep, mem, &language);
                let _ = respond.send(accepted);
            }
            Job::Deregister { fid, respond } => {
                let _ = respond.send(runtime.deregister(&fid));
            }
            Job::Invoke {
                fid,
                args,
                enqueued,
                respond,
            } => {
                let started = Instant::now();
                let result = runtime.invoke(&fid, &args);
                let record = InvocationRecord {
                    fid,
                    outcome: result.outcome,
                    cold: result.cold,
                    enqueued,
                    started,
                    finished: Instant::now(),
                };
                let _ = respond.send(record);
            }
        }
    }
}

fn error_body(status: StatusCode, outcome: &str, message: &str) -> Response {
    (
        status,
        axum::Json(json!({ "outcome": outcome, "error": message })),
    )
        .into_response()
}

fn bad_request(message: &str) -> Response {
    error_body(StatusCode::BAD_REQUEST, "bad-request", message)
}

fn queue_full() -> Response {
    error_body(
        StatusCode::SERVICE_UNAVAILABLE,
        "rejected-queue-full",
        "request queue is full",
    )
}

fn enqueue(shared: &Shared, job: Job) -> Result<(), Response> {
    match shared.queue.try_send(job) {
        Ok(()) => Ok(()),
        Err(TrySendError::Full(_)) => Err(queue_full()),
        Err(TrySendError::Disconnected(_)) => Err(error_body(
            StatusCode::SERVICE_UNAVAILABLE,
            "shutting-down",
            "gateway is shutting down",
        )),
    }
}

#[derive(Deserialize)]
struct RegisterBody {
    /// Base64-encoded code artifact.
    code: String,
    fid: String,
    fep: String,
    /// Memory budget in bytes.
    mem: u64,
    language: String,
}

async fn handle_register(State(shared): State<Arc<Shared>>, body: Bytes) -> Response {
    let parsed: RegisterBody = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => return bad_request(&format!("invalid register body: {e}")),
    };
    let code = match base64::engine::general_purpose::STANDARD.decode(&parsed.code) {
        Ok(c) => c,
        Err(e) => return bad_request(&format!("code is not valid base64: {e}")),
    };
    let (tx, rx) = oneshot::channel();
    if let Err(resp) = enqueue(
        &shared,
        Job::Register {
            code,
            fid: parsed.fid,
            fep: parsed.fep,
            mem: parsed.mem,
            language: parsed.language,
            respond: tx,
        },
    ) {
        return resp;
    }
    match rx.await {
        Ok(accepted) => (StatusCode::OK, axum::Json(accepted)).into_response(),
        Err(_) => error_body(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            "worker dropped the request",
        ),
    }
}

#[derive(Deserialize)]
struct DeregisterBody {
    fid: String,
}

async fn handle_deregister(State(shared): State<Arc<Shared>>, body: Bytes) -> Response {
    let parsed: DeregisterBody = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => return bad_request(&format!("invalid deregister body: {e}")),
    };
    let (tx, rx) = oneshot::channel();
    if let Err(resp) = enqueue(
        &shared,
        Job::Deregister {
            fid: parsed.fid,
            respond: tx,
        },
    ) {
        return resp;
    }
    match rx.await {
        Ok(removed) => (StatusCode::OK, axum::Json(removed)).into_response(),
        Err(_) => error_body(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            "worker dropped the request",
        ),
    }
}

#[derive(Deserialize)]
struct InvokeBody {
    fid: String,
    args: serde_json::Value,
}

async fn handle_invoke(State(shared): State<Arc<Shared>>, body: Bytes) -> Response {
    let parsed: InvokeBody = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => return bad_request(&format!("invalid invoke body: {e}")),
    };
    if !parsed.args.is_object() {
        return bad_request("args must be a JSON object");
    }
    let args = serde_json::to_string(&parsed.args).expect("value serializes");
    let (tx, rx) = oneshot::channel();
    if let Err(resp) = enqueue(
        &shared,
        Job::Invoke {
            fid: parsed.fid,
            args,
            enqueued: Instant::now(),
            respond: tx,
        },
    ) {
        return resp;
    }
    let record = match rx.await {
        Ok(r) => r,
        Err(_) => {
            return error_body(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                "worker dropped the request",
            )
        }
    };
    match record.outcome {
        Outcome::Ok(result) => (
            StatusCode::OK,
            [(axum::http::header::CONTENT_TYPE, "application/json")],
            result,
        )
            .into_response(),
        Outcome::NotRegistered => error_body(
            StatusCode::NOT_FOUND,
            "not-registered",
            &format!("function {:?} is not registered", record.fid),
        ),
        Outcome::Oom => error_body(
            StatusCode::INSUFFICIENT_STORAGE,
            "oom",
            "invocation exceeded its memory budget",
        ),
        Outcome::GuestError(msg) => error_body(StatusCode::INTERNAL_SERVER_ERROR, "guest-error", &msg),
    }
}

async fn handle_metrics(State(shared): State<Arc<Shared>>) -> Response {
    let queue_depth = shared.queue.len() as u64;
    let snapshot = shared.runtime.metrics_snapshot(queue_depth);
    (StatusCode::OK, axum::Json(snapshot)).into_response()
}

async fn handle_functions(State(shared): State<Arc<Shared>>) -> Response {
    let functions: Vec<_> = shared
        .runtime
        .registry()
        .list()
        .into_iter()
        .map(|d| {
            json!({
                "fid": d.fid,
                "fep": d.fep,
                "mem": d.mem,
                "language": d.language,
                "code_bytes": d.code.len(),
            })
        })
        .collect();
    (StatusCode::OK, axum::Json(functions)).into_response()
}

/// Convenience default used by the CLI when no cap is given: the 2 GiB
/// per-runtime limit.
pub const DEFAULT_MEMORY_CAP: u64 = 2 * GIB;
