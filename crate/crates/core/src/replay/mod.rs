//! Trace-driven comparison of runtime-virtualization policies.
//!
//! A trace is a list of invocation records (arrival, tenant, function,
//! duration, memory). The replayer schedules every event onto runtime
//! workers under one of three policies and reports what the fleet cost:
//!
//! * `per-invocation` — a worker accepts invocations of a single function,
//!   one at a time (OpenWhisk-style runtime reuse).
//! * `per-function` — a worker accepts many concurrent invocations of a
//!   single function (Photons-style).
//! * `per-tenant` — a worker accepts many concurrent invocations of any of
//!   one tenant's functions (the virtualized-runtime model).
//!
//! Scheduling decisions are made in virtual trace time by a deterministic
//! discrete-event pass, identically in both modes; `sim` mode stops there,
//! `live` mode additionally executes every admitted invocation on real
//! in-process runtimes at wall-clock arrival times and measures latencies.
//! Worker, cold-start, and rejection counts are therefore mode-independent
//! by construction, which is exactly what makes the two modes comparable.

pub mod live;
pub mod report;
mod sim;
pub mod trace;

pub use report::{write_report_files, ReplaySummary};
pub use trace::{parse_trace, synthesize_trace, SynthParams, TraceError};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::accounting::{GIB, MIB};

/// One invocation record from a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Arrival offset from trace start, milliseconds.
    pub t_ms: u64,
    pub tenant_id: String,
    pub function_id: String,
    pub duration_ms: u64,
    pub memory_mb: u64,
}

/// Worker-virtualization policy under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    PerInvocation,
    PerFunction,
    PerTenant,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::PerInvocation, Policy::PerFunction, Policy::PerTenant];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::PerInvocation => "per-invocation",
            Policy::PerFunction => "per-function",
            Policy::PerTenant => "per-tenant",
        }
    }

    pub fn parse(s: &str) -> Option<Policy> {
        match s.to_ascii_lowercase().as_str() {
            "per-invocation" | "per_invocation" | "openwhisk" => Some(Policy::PerInvocation),
            "per-function" | "per_function" | "photons" => Some(Policy::PerFunction),
            "per-tenant" | "per_tenant" | "isovisor" => Some(Policy::PerTenant),
            _ => None,
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Cost model for worker and isolate provisioning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostModel {
    /// Starting a fresh runtime worker (VM + runtime boot).
    pub runtime_cold_start_ms: f64,
    /// Creating a fresh isolate inside a live worker.
    pub isolate_cold_start_us: u64,
    /// Fixed runtime footprint added to every live worker.
    pub per_worker_overhead_mb: u64,
    /// Footprint of each live isolate (its pre-allocated heap).
    pub per_isolate_overhead_mb: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            runtime_cold_start_ms: 200.0,
            isolate_cold_start_us: 500,
            per_worker_overhead_mb: 30,
            per_isolate_overhead_mb: 1,
        }
    }
}

impl CostModel {
    pub fn runtime_cold_start_us(&self) -> u64 {
        (self.runtime_cold_start_ms * 1000.0).round() as u64
    }
}

/// Replay parameters shared by both modes.
#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub cost: CostModel,
    /// Fleet-wide memory limit; events that would exceed it are rejected.
    pub global_cap_bytes: u64,
    /// Per-worker memory limit for the shared policies. Per-invocation
    /// workers are sized to their function instead.
    pub worker_cap_bytes: u64,
    /// How long an idle worker is retained before eviction.
    pub keep_alive: Duration,
    /// How long an idle isolate inside a live worker is retained.
    pub isolate_ttl: Duration,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            cost: CostModel::default(),
            global_cap_bytes: 16 * GIB,
            worker_cap_bytes: 2 * GIB,
            keep_alive: Duration::from_secs(60),
            isolate_ttl: Duration::from_secs(10),
        }
    }
}

/// What provisioning an admitted invocation had to pay for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColdKind {
    /// A new runtime worker was started.
    RuntimeCold,
    /// A new isolate was created inside an existing worker.
    IsolateCold,
    /// Served entirely from warm capacity.
    Warm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventOutcome {
    Completed,
    /// Admitting the event would have exceeded the global memory cap.
    Rejected,
}

/// Per-event scheduling (and, in live mode, execution) record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: usize,
    pub outcome: EventOutcome,
    pub worker_id: Option<u64>,
    pub cold: ColdKind,
    pub cold_charge_us: u64,
    /// Arrival time, trace-relative microseconds.
    pub start_us: u64,
    /// Completion time in virtual time (admitted events only).
    pub finish_us: u64,
    /// End-to-end latency: queue wait + cold charge + duration. In live
    /// mode the duration part is measured on a real runtime.
    pub latency_us: u64,
    /// Live-mode execution failure, if any. Always `None` in sim mode.
    pub error: Option<String>,
}

/// Everything one replay produced.
#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub policy: Policy,
    pub records: Vec<EventRecord>,
    /// Step-function of total fleet footprint: (time_us, bytes) at every
    /// change point.
    pub memory_points: Vec<(u64, u64)>,
    /// Step-function of live worker count: (time_us, count).
    pub worker_points: Vec<(u64, u64)>,
    pub workers_created: u64,
    pub runtime_cold_starts: u64,
    pub isolate_cold_starts: u64,
    pub rejected: u64,
    /// Virtual time of the last completion; the reporting horizon.
    pub horizon_us: u64,
}

impl ReplayReport {
    pub fn completed(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.outcome == EventOutcome::Completed)
            .count()
    }
}

/// Deterministic simulated replay.
pub fn replay(events: &[TraceEvent], policy: Policy, cfg: &ReplayConfig) -> ReplayReport {
    sim::schedule(events, policy, cfg)
}

pub(crate) fn mb(bytes_in_mb: u64) -> u64 {
    bytes_in_mb * MIB
}
