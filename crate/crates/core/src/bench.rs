//! The cold/warm-start micro-benchmark.
//!
//! Measures four latencies over N iterations against a live runtime:
//!
//! * isolate cold create — allocating a fresh isolate (budget + base heap);
//! * warm poll hit — taking an already-warm isolate out of the pool;
//! * cold invocation — a full first invocation (create + compile + context
//!   + execute) of a no-op function;
//! * warm invocation — the same invocation served from the pool.
//!
//! The cold/warm gap is the measurable form of the cold-start hierarchy:
//! reusing a warm isolate skips creation, compilation, and context setup.

use std::time::Instant;

use serde::Serialize;

use crate::accounting::MIB;
use crate::registry::FunctionDescriptor;
use crate::runtime::{Outcome, Runtime, RuntimeConfig};

#[derive(Debug, Clone)]
pub struct BenchParams {
    pub iterations: usize,
    /// Hold this many live isolates while measuring creation latency.
    pub concurrent_isolates: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            concurrent_isolates: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchStats {
    pub median_us: f64,
    pub p99_us: f64,
}

impl BenchStats {
    /// Samples arrive in nanoseconds; stats are reported in microseconds.
    fn from_samples(mut samples: Vec<u64>) -> Self {
        samples.sort_unstable();
        let pick = |q: f64| -> f64 {
            if samples.is_empty() {
                return 0.0;
            }
            let rank = ((q * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
            samples[rank - 1] as f64 / 1000.0
        };
        Self {
            median_us: pick(0.50),
            p99_us: pick(0.99),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub iterations: usize,
    pub concurrent_isolates: usize,
    pub isolate_create: BenchStats,
    pub warm_poll_hit: BenchStats,
    pub cold_invocation: BenchStats,
    pub warm_invocation: BenchStats,
}

impl BenchReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "benchmark ({} iterations, {} held isolates)\n",
            self.iterations, self.concurrent_isolates
        ));
        out.push_str(&format!("{:<24}{:>12}{:>12}\n", "measurement", "median_us", "p99_us"));
        for (name, stats) in [
            ("isolate cold create", &self.isolate_create),
            ("warm poll hit", &self.warm_poll_hit),
            ("cold invocation", &self.cold_invocation),
            ("warm invocation", &self.warm_invocation),
        ] {
            out.push_str(&format!(
                "{:<24}{:>12.2}{:>12.2}\n",
                name, stats.median_us, stats.p99_us
            ));
        }
        out
    }
}

fn nop_descriptor(fid: &str) -> FunctionDescriptor {
    FunctionDescriptor {
        fid: fid.into(),
        fep: "main".into(),
        code: br#"{"alloc_mb":0,"run_ms":0}"#.to_vec(),
        mem: 4 * MIB,
        language: "synthetic".into(),
    }
}

pub fn run_bench(params: &BenchParams) -> BenchReport {
    let runtime = Runtime::new(RuntimeConfig {
        start_reaper: false,
        ..RuntimeConfig::default()
    });
    let manager = runtime.manager();
    assert!(runtime.register(
        br#"{"alloc_mb":0,"run_ms":0}"#.to_vec(),
        "bench-nop",
        "main",
        4 * MIB,
        "synthetic"
    ));
    let descriptor = nop_descriptor("bench-nop");
    let iterations = params.iterations.max(1);

    // Optionally hold a population of live isolates while measuring.
    let held: Vec<_> = (0..params.concurrent_isolates)
        .map(|_| manager.create_isolate(&descriptor).expect("create held isolate"))
        .collect();

    let mut create_samples = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t0 = Instant::now();
        let iso = manager.create_isolate(&descriptor).expect("create isolate");
        create_samples.push(t0.elapsed().as_nanos() as u64);
        manager.destroy_isolate(iso);
    }

    let mut poll_samples = Vec::with_capacity(iterations);
    let warm = manager.create_isolate(&descriptor).expect("create isolate");
    manager.pool().offer(warm);
    for _ in 0..iterations {
        let t0 = Instant::now();
        let iso = manager.pool().poll("bench-nop").expect("warm isolate pooled");
        poll_samples.push(t0.elapsed().as_nanos() as u64);
        manager.pool().offer(iso);
    }
    manager.drain();

    let mut cold_samples = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t0 = Instant::now();
        let result = runtime.invoke("bench-nop", "{}");
        cold_samples.push(t0.elapsed().as_nanos() as u64);
        assert!(matches!(result.outcome, Outcome::Ok(_)));
        assert!(result.cold, "pool was drained, invocation must be cold");
        manager.drain();
    }

    let mut warm_samples = Vec::with_capacity(iterations);
    let first = runtime.invoke("bench-nop", "{}");
    assert!(matches!(first.outcome, Outcome::Ok(_)));
    for _ in 0..iterations {
        let t0 = Instant::now();
        let result = runtime.invoke("bench-nop", "{}");
        warm_samples.push(t0.elapsed().as_nanos() as u64);
        assert!(!result.cold, "pooled isolate must serve warm invocations");
    }

    drop(held);
    BenchReport {
        iterations,
        concurrent_isolates: params.concurrent_isolates,
        isolate_create: BenchStats::from_samples(create_samples),
        warm_poll_hit: BenchStats::from_samples(poll_samples),
        cold_invocation: BenchStats::from_samples(cold_samples),
        warm_invocation: BenchStats::from_samples(warm_samples),
    }
}
