//! Live replay: execute the schedule against real in-process runtimes.
//!
//! The deterministic scheduling pass decides worker assignment, cold-start
//! charges, and rejections exactly as in sim mode. This driver then stands
//! up one real [`Runtime`] per scheduled worker, registers the synthetic
//! emulator function for each trace function, and fires every admitted
//! invocation at its wall-clock arrival offset, measuring real execution
//! latency. Reported latency = scheduled cold charge + measured execution.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;

use super::{sim, EventOutcome, Policy, ReplayConfig, ReplayReport, TraceEvent};
use crate::accounting::MIB;
use crate::runtime::{Outcome, Runtime, RuntimeConfig};

#[derive(Debug, Clone)]
pub struct LiveOptions {
    /// Fraction of each synthetic allocation physically touched. Accounting
    /// is unaffected; lower this to replay big traces on small machines.
    pub touch_scale: f64,
    /// Contexts per isolate for the live runtimes.
    pub max_contexts: usize,
}

impl Default for LiveOptions {
    fn default() -> Self {
        Self {
            touch_scale: 1.0,
            max_contexts: 4,
        }
    }
}

struct Host {
    runtime: Arc<Runtime>,
    registered: Mutex<HashSet<String>>,
}

impl Host {
    fn ensure_registered(&self, event: &TraceEvent) {
        let mut registered = self.registered.lock();
        if registered.contains(&event.function_id) {
            return;
        }
        // One emulator per function; per-request sizes arrive as arguments.
        let accepted = self.runtime.register(
            br#"{"alloc_mb":0,"run_ms":0}"#.to_vec(),
            &event.function_id,
            "main",
            (event.memory_mb + 8) * MIB,
            "synthetic",
        );
        if accepted {
            registered.insert(event.function_id.clone());
        }
    }
}

/// Replay `events` against live runtimes. Scheduling (worker counts, cold
/// starts, rejections, memory timeline) is identical to sim mode by
/// construction; latencies are measured.
pub fn replay_live(
    events: &[TraceEvent],
    policy: Policy,
    cfg: &ReplayConfig,
    opts: &LiveOptions,
) -> ReplayReport {
    let mut report = sim::schedule(events, policy, cfg);

    let hosts: Mutex<HashMap<u64, Arc<Host>>> = Mutex::new(HashMap::new());
    let host_for = |worker_id: u64| -> Arc<Host> {
        let mut hosts = hosts.lock();
        hosts
            .entry(worker_id)
            .or_insert_with(|| {
                let runtime = Runtime::new(RuntimeConfig {
                    // Admission authority is the schedule; size the live cap
                    // with slack so bookkeeping overheads never spuriously
                    // reject what the schedule admitted.
                    memory_cap: cfg.worker_cap_bytes.saturating_mul(2),
                    ttl: cfg.isolate_ttl,
                    max_contexts: opts.max_contexts,
                    synthetic_touch_scale: opts.touch_scale,
                    ..RuntimeConfig::default()
                });
                Arc::new(Host {
                    runtime,
                    registered: Mutex::new(HashSet::new()),
                })
            })
            .clone()
    };

    let wall_start = Instant::now();
    let mut workers: Vec<std::thread::JoinHandle<(usize, Outcome, u64)>> = Vec::new();

    for record in &report.records {
        if record.outcome != EventOutcome::Completed {
            continue;
        }
        let event = &events[record.index];
        let target = wall_start + Duration::from_micros(record.start_us);
        let now = Instant::now();
        if target > now {
            std::thread::sleep(target - now);
        }

        let host = host_for(record.worker_id.expect("completed events have a worker"));
        let index = record.index;
        let fid = event.function_id.clone();
        let args = format!(
            r#"{{"alloc_mb":{},"run_ms":{}}}"#,
            event.memory_mb, event.duration_ms
        );
        host.ensure_registered(event);
        workers.push(std::thread::spawn(move || {
            let t0 = Instant::now();
            let result = host.runtime.invoke(&fid, &args);
            (index, result.outcome, t0.elapsed().as_micros() as u64)
        }));
    }

    for handle in workers {
        let (index, outcome, measured_us) = handle.join().expect("invocation thread");
        let record = &mut report.records[index];
        record.latency_us = record.cold_charge_us + measured_us;
        record.finish_us = record.start_us + record.latency_us;
        if !matches!(outcome, Outcome::Ok(_)) {
            record.error = Some(format!("live invocation failed: {}", outcome.tag()));
        }
    }
    report
}
