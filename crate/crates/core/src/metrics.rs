//! Runtime observability counters.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use serde::Serialize;

/// Upper bucket bounds in microseconds, roughly quarter-decade spaced.
pub const LATENCY_BUCKET_BOUNDS_US: [u64; 16] = [
    10, 30, 100, 300, 1_000, 3_000, 10_000, 30_000, 100_000, 300_000, 1_000_000, 3_000_000,
    10_000_000, 30_000_000, 100_000_000, u64::MAX,
];

/// Fixed-bucket latency histogram; lock-free to record.
#[derive(Debug, Default)]
pub struct LatencyHistogram {
    buckets: [AtomicU64; 16],
    count: AtomicU64,
    sum_us: AtomicU64,
}

impl LatencyHistogram {
    pub fn record_us(&self, us: u64) {
        let idx = LATENCY_BUCKET_BOUNDS_US
            .iter()
            .position(|&b| us <= b)
            .unwrap_or(LATENCY_BUCKET_BOUNDS_US.len() - 1);
        self.buckets[idx].fetch_add(1, Ordering::Relaxed);
        self.count.fetch_add(1, Ordering::Relaxed);
        self.sum_us.fetch_add(us, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> HistogramSnapshot {
        HistogramSnapshot {
            buckets: LATENCY_BUCKET_BOUNDS_US
                .iter()
                .zip(self.buckets.iter())
                .map(|(&le_us, c)| HistogramBucket {
                    le_us,
                    count: c.load(Ordering::Relaxed),
                })
                .collect(),
            count: self.count.load(Ordering::Relaxed),
            sum_us: self.sum_us.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramBucket {
    /// Bucket upper bound (inclusive), microseconds. The last bucket's
    /// bound serializes as the catch-all value.
    pub le_us: u64,
    pub count: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramSnapshot {
    pub buckets: Vec<HistogramBucket>,
    pub count: u64,
    pub sum_us: u64,
}

/// Counters shared across the whole runtime. Gauges that derive from other
/// structures (accounted memory, pool size, queue depth) are sampled at
/// snapshot time by the owner.
#[derive(Debug, Default)]
pub struct RuntimeMetrics {
    pub compiles_total: AtomicU64,
    pub cold_invocations_total: AtomicU64,
    pub warm_invocations_total: AtomicU64,
    pub isolates_created_total: AtomicU64,
    pub isolates_destroyed_total: AtomicU64,
    pub live_isolates: AtomicU64,
    pub peak_isolate_contexts: AtomicUsize,
    pub invocation_latency: LatencyHistogram,
    pub isolate_create: LatencyHistogram,
}

impl RuntimeMetrics {
    pub fn record_compile(&self) {
        self.compiles_total.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_invocation(&self, cold: bool, latency_us: u64) {
        if cold {
            self.cold_invocations_total.fetch_add(1, Ordering::Relaxed);
        } else {
            self.warm_invocations_total.fetch_add(1, Ordering::Relaxed);
        }
        self.invocation_latency.record_us(latency_us);
    }

    pub fn record_isolate_created(&self, create_us: u64) {
        self.isolates_created_total.fetch_add(1, Ordering::Relaxed);
        self.live_isolates.fetch_add(1, Ordering::Relaxed);
        self.isolate_create.record_us(create_us);
    }

    pub fn record_isolate_destroyed(&self) {
        self.isolates_destroyed_total.fetch_add(1, Ordering::Relaxed);
        self.live_isolates.fetch_sub(1, Ordering::Relaxed);
    }

    pub fn note_peak_contexts(&self, contexts: usize) {
        self.peak_isolate_contexts
            .fetch_max(contexts, Ordering::Relaxed);
    }
}

/// Point-in-time view of the runtime, served by the gateway's `/metrics`.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsSnapshot {
    pub accounted_memory_bytes: u64,
    pub memory_cap_bytes: u64,
    pub live_isolates: u64,
    pub pooled_isolates: u64,
    pub compiles_total: u64,
    pub cold_invocations_total: u64,
    pub warm_invocations_total: u64,
    pub isolates_created_total: u64,
    pub isolates_destroyed_total: u64,
    pub registrations_total: u64,
    pub registered_functions: u64,
    pub peak_isolate_contexts: u64,
    pub queue_depth: u64,
    pub latency_histogram: HistogramSnapshot,
    pub isolate_create_us: HistogramSnapshot,
}
