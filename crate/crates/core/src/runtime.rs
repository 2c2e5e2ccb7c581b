//! The isovisor runtime: one process hosting many concurrent function
//! invocations in pooled, memory-budgeted isolates.
//!
//! [`Runtime`] is the embeddable core. The HTTP gateway, the CLI, the trace
//! replayer's live mode, and the C ABI all drive this same object.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Weak};
use std::time::{Duration, Instant};

use crate::accounting::{GlobalAccounting, GIB, MIB};
use crate::engine::EngineSet;
use crate::isolate::{
    HandleTable, HandleValue, InvokeFailure, IsolateManager, ManagerConfig,
};
use crate::metrics::{MetricsSnapshot, RuntimeMetrics};
use crate::registry::{FunctionDescriptor, FunctionRegistry};

/// Tunables for one runtime instance.
#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    /// Runtime-wide accounted-memory cap.
    pub memory_cap: u64,
    /// How long idle isolates stay warm in the pool.
    pub ttl: Duration,
    /// How often the background reaper scans the pool.
    pub reaper_period: Duration,
    /// Maximum concurrent guest contexts per isolate.
    pub max_contexts: usize,
    /// Co-locate contexts of one function in a shared isolate so they share
    /// the compiled program. Disabling also pins isolates to one context.
    pub share_code_cache: bool,
    /// Warm isolates to pre-create per registered function.
    pub prewarm_n: usize,
    /// Pre-allocated heap charged to every isolate at creation.
    pub base_heap_bytes: u64,
    /// Fraction of synthetic allocations physically touched (accounting is
    /// always full). Lets big replays run on small machines.
    pub synthetic_touch_scale: f64,
    /// Run the periodic reaper thread. Tests that drive `reap` manually and
    /// short-lived embedders can turn it off.
    pub start_reaper: bool,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            memory_cap: 2 * GIB,
            ttl: Duration::from_secs(10),
            reaper_period: Duration::from_secs(1),
            max_contexts: 4,
            share_code_cache: true,
            prewarm_n: 0,
            base_heap_bytes: MIB,
            synthetic_touch_scale: 1.0,
            start_reaper: true,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.memory_cap < 16 * MIB {
            return Err("memory_cap must be at least 16 MiB".into());
        }
        if self.max_contexts == 0 {
            return Err("max_contexts must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.synthetic_touch_scale) {
            return Err("synthetic_touch_scale must be within [0, 1]".into());
        }
        Ok(())
    }
}

/// How one invocation ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// The function's JSON result.
    Ok(String),
    NotRegistered,
    Oom,
    GuestError(String),
}

impl Outcome {
    /// Machine-readable outcome tag, shared with the HTTP bodies.
    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::Ok(_) => "ok",
            Outcome::NotRegistered => "not-registered",
            Outcome::Oom => "oom",
            Outcome::GuestError(_) => "guest-error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct InvocationResult {
    pub outcome: Outcome,
    /// Whether a fresh isolate had to be created for this invocation.
    pub cold: bool,
    pub latency: Duration,
}

pub struct Runtime {
    cfg: RuntimeConfig,
    registry: FunctionRegistry,
    manager: IsolateManager,
    handles: Arc<HandleTable>,
    global: Arc<GlobalAccounting>,
    metrics: Arc<RuntimeMetrics>,
    reaper_stop: Arc<AtomicBool>,
}

impl Runtime {
    pub fn new(cfg: RuntimeConfig) -> Arc<Self> {
        let global = GlobalAccounting::new(cfg.memory_cap);
        let metrics = Arc::new(RuntimeMetrics::default());
        let handles = Arc::new(HandleTable::new());
        let engines = Arc::new(EngineSet::with_defaults(cfg.synthetic_touch_scale));
        let registry = FunctionRegistry::new(engines.languages());
        let manager = IsolateManager::new(
            ManagerConfig {
                max_contexts: cfg.max_contexts,
                share_code_cache: cfg.share_code_cache,
                base_heap_bytes: cfg.base_heap_bytes,
                ttl: cfg.ttl,
            },
            global.clone(),
            engines,
            metrics.clone(),
            handles.clone(),
        );
        let reaper_stop = Arc::new(AtomicBool::new(false));
        let runtime = Arc::new(Self {
            cfg,
            registry,
            manager,
            handles,
            global,
            metrics,
            reaper_stop,
        });
        if runtime.cfg.start_reaper {
            spawn_reaper(Arc::downgrade(&runtime), runtime.cfg.reaper_period);
        }
        runtime
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &FunctionRegistry {
        &self.registry
    }

    pub fn manager(&self) -> &IsolateManager {
        &self.manager
    }

    pub fn handles(&self) -> &Arc<HandleTable> {
        &self.handles
    }

    /// Install a function. Returns `true` iff the registration took effect.
    pub fn register(&self, code: Vec<u8>, fid: &str, fep: &str, mem: u64, language: &str) -> bool {
        let descriptor = FunctionDescriptor {
            fid: fid.to_string(),
            fep: fep.to_string(),
            code,
            mem,
            language: language.to_string(),
        };
        let accepted = self.registry.register(descriptor);
        if accepted {
            tracing::debug!(fid, language, mem, "function registered");
            if self.cfg.prewarm_n > 0 {
                if let Some(desc) = self.registry.lookup(fid) {
                    self.manager.prewarm(&desc, self.cfg.prewarm_n);
                }
            }
        }
        accepted
    }

    /// Remove a function. Warm isolates are doomed: idle ones die now,
    /// executing ones when their current invocation finishes.
    pub fn deregister(&self, fid: &str) -> bool {
        let removed = self.registry.deregister(fid);
        if removed {
            self.manager.doom_fid(fid);
            tracing::debug!(fid, "function deregistered");
        }
        removed
    }

    /// Invoke a registered function with a JSON argument string.
    pub fn invoke(&self, fid: &str, args_json: &str) -> InvocationResult {
        let start = Instant::now();
        let Some(descriptor) = self.registry.lookup(fid) else {
            return InvocationResult {
                outcome: Outcome::NotRegistered,
                cold: false,
                latency: start.elapsed(),
            };
        };

        let (isolate, cold) = match self.manager.acquire(&descriptor) {
            Ok(pair) => pair,
            Err(oom) => {
                tracing::debug!(fid, error = %oom, "isolate admission failed");
                let latency = start.elapsed();
                self.metrics
                    .record_invocation(true, latency.as_micros() as u64);
                return InvocationResult {
                    outcome: Outcome::Oom,
                    cold: true,
                    latency,
                };
            }
        };

        let func_handle = self
            .handles
            .pin(HandleValue::Function(descriptor.clone()));
        let args_handle = self.handles.pin(HandleValue::Json(args_json.to_string()));

        let run = self.manager.run_in_isolate(&isolate, func_handle, args_handle);
        self.manager.complete(&isolate);

        let outcome = match run {
            Ok(result_handle) => match self.handles.retrieve(result_handle) {
                Ok(HandleValue::Json(result)) => Outcome::Ok(result),
                Ok(HandleValue::Function(_)) | Err(_) => {
                    Outcome::GuestError("invocation result handle was invalid".into())
                }
            },
            Err(InvokeFailure::NotRegistered) => Outcome::NotRegistered,
            Err(InvokeFailure::Oom(_)) => Outcome::Oom,
            Err(InvokeFailure::Guest(e)) => Outcome::GuestError(e.to_string()),
            Err(InvokeFailure::Handle(e)) => Outcome::GuestError(e.to_string()),
        };

        let latency = start.elapsed();
        self.metrics
            .record_invocation(cold, latency.as_micros() as u64);
        InvocationResult {
            outcome,
            cold,
            latency,
        }
    }

    /// Destroy pooled isolates idle past the TTL as of `now`.
    pub fn reap(&self, now: Instant) -> usize {
        self.manager.reap(now)
    }

    /// Destroy all pooled isolates immediately.
    pub fn drain(&self) -> usize {
        self.manager.drain()
    }

    pub fn accounted_memory(&self) -> u64 {
        self.global.used()
    }

    pub fn metrics(&self) -> &Arc<RuntimeMetrics> {
        &self.metrics
    }

    /// Point-in-time metrics. `queue_depth` belongs to the gateway; callers
    /// embedding the runtime directly report zero.
    pub fn metrics_snapshot(&self, queue_depth: u64) -> MetricsSnapshot {
        MetricsSnapshot {
            accounted_memory_bytes: self.global.used(),
            memory_cap_bytes: self.global.cap(),
            live_isolates: self.metrics.live_isolates.load(Ordering::Relaxed),
            pooled_isolates: self.manager.pool().pooled_count() as u64,
            compiles_total: self.metrics.compiles_total.load(Ordering::Relaxed),
            cold_invocations_total: self
                .metrics
                .cold_invocations_total
                .load(Ordering::Relaxed),
            warm_invocations_total: self
                .metrics
                .warm_invocations_total
                .load(Ordering::Relaxed),
            isolates_created_total: self
                .metrics
                .isolates_created_total
                .load(Ordering::Relaxed),
            isolates_destroyed_total: self
                .metrics
                .isolates_destroyed_total
                .load(Ordering::Relaxed),
            registrations_total: self.registry.registrations_total(),
            registered_functions: self.registry.len() as u64,
            peak_isolate_contexts: self.metrics.peak_isolate_contexts.load(Ordering::Relaxed)
                as u64,
            queue_depth,
            latency_histogram: self.metrics.invocation_latency.snapshot(),
            isolate_create_us: self.metrics.isolate_create.snapshot(),
        }
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        self.reaper_stop.store(true, Ordering::Release);
    }
}

fn spawn_reaper(runtime: Weak<Runtime>, period: Duration) {
    std::thread::Builder::new()
        .name("isovisor-reaper".into())
        .spawn(move || loop {
            std::thread::sleep(period);
            match runtime.upgrade() {
                Some(rt) => {
                    if rt.reaper_stop.load(Ordering::Acquire) {
                        break;
                    }
                    let reaped = rt.manager.reap(Instant::now());
                    if reaped > 0 {
                        tracing::debug!(reaped, "reaper destroyed idle isolates");
                    }
                }
                None => break,
            }
        })
        .expect("spawning reaper thread");
}
