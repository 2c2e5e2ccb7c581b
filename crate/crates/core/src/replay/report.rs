//! Replay summaries and plot-ready output files.
//!
//! `compute_metrics` reduces a [`ReplayReport`] to the headline numbers;
//! `write_report_files` emits `summary.json`, `memory_timeline.csv`
//! (`t_s,bytes`, max within each 1 s bucket), and `latency_cdf.csv`
//! (`latency_ms,fraction`). Mean/max figures are time-weighted over
//! [0, horizon] where the horizon is the last completion; the timeline file
//! additionally shows the drain tail past the horizon.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{EventOutcome, ReplayReport};

#[derive(Debug, Clone, Serialize)]
pub struct LatencyStats {
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemoryStats {
    pub mean_bytes: f64,
    pub max_bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplaySummary {
    pub policy: String,
    pub events: usize,
    pub completed: usize,
    pub rejected: usize,
    pub workers_created: u64,
    pub runtime_cold_starts: u64,
    pub isolate_cold_starts: u64,
    pub latency: LatencyStats,
    pub memory: MemoryStats,
    pub mean_active_workers: f64,
    pub horizon_ms: u64,
    /// Live-mode execution failures (always 0 in sim mode).
    pub errors: usize,
}

/// Nearest-rank percentile of a sorted sample.
fn percentile_sorted(sorted: &[u64], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Time-weighted mean and maximum of a step function over [0, horizon].
fn step_stats(points: &[(u64, u64)], horizon_us: u64) -> (f64, u64) {
    if horizon_us == 0 || points.is_empty() {
        return (0.0, points.iter().map(|&(_, v)| v).max().unwrap_or(0));
    }
    let mut weighted: u128 = 0;
    let mut max_value = 0u64;
    let mut prev_t = 0u64;
    let mut prev_v = 0u64;
    for &(t, v) in points {
        if t >= horizon_us {
            break;
        }
        let t_clamped = t.min(horizon_us);
        weighted += (t_clamped - prev_t) as u128 * prev_v as u128;
        if t_clamped <= horizon_us {
            max_value = max_value.max(v);
        }
        prev_t = t_clamped;
        prev_v = v;
    }
    weighted += (horizon_us - prev_t) as u128 * prev_v as u128;
    max_value = max_value.max(prev_v);
    (weighted as f64 / horizon_us as f64, max_value)
}

/// Reduce a report to its summary statistics.
pub fn compute_metrics(report: &ReplayReport) -> ReplaySummary {
    let mut latencies: Vec<u64> = report
        .records
        .iter()
        .filter(|r| r.outcome == EventOutcome::Completed)
        .map(|r| r.latency_us)
        .collect();
    latencies.sort_unstable();

    let (mean_mem, max_mem) = step_stats(&report.memory_points, report.horizon_us);
    let (mean_workers, _) = step_stats(&report.worker_points, report.horizon_us);
    let errors = report
        .records
        .iter()
        .filter(|r| r.error.is_some())
        .count();

    ReplaySummary {
        policy: report.policy.name().to_string(),
        events: report.records.len(),
        completed: latencies.len(),
        rejected: report.rejected as usize,
        workers_created: report.workers_created,
        runtime_cold_starts: report.runtime_cold_starts,
        isolate_cold_starts: report.isolate_cold_starts,
        latency: LatencyStats {
            p50_ms: percentile_sorted(&latencies, 0.50) as f64 / 1000.0,
            p90_ms: percentile_sorted(&latencies, 0.90) as f64 / 1000.0,
            p99_ms: percentile_sorted(&latencies, 0.99) as f64 / 1000.0,
        },
        memory: MemoryStats {
            mean_bytes: mean_mem,
            max_bytes: max_mem,
        },
        mean_active_workers: mean_workers,
        horizon_ms: report.horizon_us / 1000,
        errors,
    }
}

/// Bucket a step function into 1 s buckets, max within bucket, carrying the
/// running value across empty buckets.
pub fn bucket_max_per_second(points: &[(u64, u64)]) -> Vec<(u64, u64)> {
    if points.is_empty() {
        return Vec::new();
    }
    let last_t = points.last().map(|&(t, _)| t).unwrap_or(0);
    let buckets = last_t / 1_000_000 + 1;
    let mut out = Vec::with_capacity(buckets as usize);
    let mut idx = 0usize;
    let mut current = 0u64;
    for b in 0..buckets {
        let end = (b + 1) * 1_000_000;
        let mut bucket_max = current;
        while idx < points.len() && points[idx].0 < end {
            current = points[idx].1;
            bucket_max = bucket_max.max(current);
            idx += 1;
        }
        out.push((b, bucket_max));
    }
    out
}

/// Write `summary.json`, `memory_timeline.csv`, and `latency_cdf.csv` for a
/// report into `dir`, with file names prefixed by `prefix` when non-empty
/// (comparison runs write one set per policy).
pub fn write_report_files(
    report: &ReplayReport,
    summary: &ReplaySummary,
    dir: &Path,
    prefix: &str,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let name = |base: &str| {
        if prefix.is_empty() {
            base.to_string()
        } else {
            format!("{prefix}_{base}")
        }
    };

    let mut mem = std::fs::File::create(dir.join(name("memory_timeline.csv")))?;
    writeln!(mem, "t_s,bytes")?;
    for (t_s, bytes) in bucket_max_per_second(&report.memory_points) {
        writeln!(mem, "{t_s},{bytes}")?;
    }

    let mut cdf = std::fs::File::create(dir.join(name("latency_cdf.csv")))?;
    writeln!(cdf, "latency_ms,fraction")?;
    let mut latencies: Vec<u64> = report
        .records
        .iter()
        .filter(|r| r.outcome == EventOutcome::Completed)
        .map(|r| r.latency_us)
        .collect();
    latencies.sort_unstable();
    let n = latencies.len();
    for (i, us) in latencies.iter().enumerate() {
        writeln!(cdf, "{:.3},{:.6}", *us as f64 / 1000.0, (i + 1) as f64 / n as f64)?;
    }

    let file = std::fs::File::create(dir.join(name("summary.json")))?;
    serde_json::to_writer_pretty(file, summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::{replay, Policy, ReplayConfig, TraceEvent};

    fn event(t_ms: u64, func: &str, duration_ms: u64, memory_mb: u64) -> TraceEvent {
        TraceEvent {
            t_ms,
            tenant_id: "t1".into(),
            function_id: func.into(),
            duration_ms,
            memory_mb,
        }
    }

    #[test]
    fn empty_report_is_all_zeros() {
        let report = replay(&[], Policy::PerTenant, &ReplayConfig::default());
        let summary = compute_metrics(&report);
        assert_eq!(summary.events, 0);
        assert_eq!(summary.completed, 0);
        assert_eq!(summary.latency.p99_ms, 0.0);
        assert_eq!(summary.memory.max_bytes, 0);
        assert_eq!(summary.mean_active_workers, 0.0);
    }

    #[test]
    fn single_cold_event_p99_is_cold_plus_duration() {
        let report = replay(
            &[event(0, "f1", 100, 150)],
            Policy::PerTenant,
            &ReplayConfig::default(),
        );
        let summary = compute_metrics(&report);
        assert!((summary.latency.p99_ms - 300.0).abs() < 1e-9);
        assert!((summary.latency.p50_ms - 300.0).abs() < 1e-9);
    }

    #[test]
    fn comparative_memory_ordering_on_four_function_tenant() {
        // Oracle: analytic worker counts x footprints. 8 overlapping
        // invocations, 4 functions, one tenant:
        //   per-invocation: 8 workers x (150 + 30) MB
        //   per-function:   4 workers x 30 MB + 8 x (150 + 1) MB
        //   per-tenant:     1 worker  x 30 MB + 8 x (150 + 1) MB
        let mut events = Vec::new();
        for (i, f) in ["f1", "f2", "f3", "f4"].iter().enumerate() {
            events.push(event(10 * (2 * i as u64), f, 1000, 150));
            events.push(event(10 * (2 * i as u64 + 1), f, 1000, 150));
        }
        events.sort_by_key(|e| e.t_ms);

        let cfg = ReplayConfig::default();
        let inv = compute_metrics(&replay(&events, Policy::PerInvocation, &cfg));
        let fun = compute_metrics(&replay(&events, Policy::PerFunction, &cfg));
        let ten = compute_metrics(&replay(&events, Policy::PerTenant, &cfg));

        assert!(
            ten.memory.mean_bytes < fun.memory.mean_bytes,
            "per-tenant {} < per-function {}",
            ten.memory.mean_bytes,
            fun.memory.mean_bytes
        );
        assert!(
            fun.memory.mean_bytes < inv.memory.mean_bytes,
            "per-function {} < per-invocation {}",
            fun.memory.mean_bytes,
            inv.memory.mean_bytes
        );

        // Peak footprint during full overlap matches the analytic oracle.
        use crate::accounting::MIB;
        assert_eq!(inv.memory.max_bytes, 8 * (150 + 30) * MIB);
        assert_eq!(fun.memory.max_bytes, (4 * 30 + 8 * 151) * MIB);
        assert_eq!(ten.memory.max_bytes, (30 + 8 * 151) * MIB);
    }

    #[test]
    fn bucketing_carries_values_and_takes_max() {
        // Step function: 0 at t=0, 10 at t=0.5s, 4 at t=2.2s.
        let points = vec![(0, 0), (500_000, 10), (2_200_000, 4)];
        let buckets = bucket_max_per_second(&points);
        assert_eq!(buckets, vec![(0, 10), (1, 10), (2, 10)]);
    }

    #[test]
    fn report_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let report = replay(
            &[event(0, "f1", 100, 150)],
            Policy::PerTenant,
            &ReplayConfig::default(),
        );
        let summary = compute_metrics(&report);
        write_report_files(&report, &summary, dir.path(), "").unwrap();
        for f in ["summary.json", "memory_timeline.csv", "latency_cdf.csv"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        let cdf = std::fs::read_to_string(dir.path().join("latency_cdf.csv")).unwrap();
        assert!(cdf.lines().count() >= 2);
        assert!(cdf.lines().nth(1).unwrap().ends_with(",1.000000"));
    }
}
