//! Trace ingestion: the internal CSV format, a seeded synthetic generator,
//! and a converter for the public Azure Functions invocation trace.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::TraceEvent;

/// Exact header of the internal trace format.
pub const TRACE_HEADER: &str = "t_ms,tenant_id,function_id,duration_ms,memory_mb";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Parse {
        line,
        message: message.into(),
    }
}

/// Parse and validate an internal-format trace file. Events come back
/// sorted by arrival time.
pub fn parse_trace(path: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    let mut file = std::fs::File::open(path)?;
    let mut contents = String::new();
    file.read_to_string(&mut contents)?;
    parse_trace_str(&contents)
}

pub fn parse_trace_str(contents: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(contents.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let got = headers.iter().collect::<Vec<_>>().join(",");
    if got != TRACE_HEADER {
        return Err(parse_err(
            1,
            format!("expected header {TRACE_HEADER:?}, got {got:?}"),
        ));
    }

    let mut events = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        if row.len() != 5 {
            return Err(parse_err(line, format!("expected 5 fields, got {}", row.len())));
        }
        let t_ms: u64 = row[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("t_ms: {e}")))?;
        let tenant_id = row[1].trim().to_string();
        let function_id = row[2].trim().to_string();
        let duration_ms: u64 = row[3]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("duration_ms: {e}")))?;
        let memory_mb: u64 = row[4]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("memory_mb: {e}")))?;
        if tenant_id.is_empty() || function_id.is_empty() {
            return Err(parse_err(line, "tenant_id and function_id must be non-empty"));
        }
        if duration_ms == 0 {
            return Err(parse_err(line, "duration_ms must be > 0"));
        }
        if memory_mb == 0 {
            return Err(parse_err(line, "memory_mb must be > 0"));
        }
        events.push(TraceEvent {
            t_ms,
            tenant_id,
            function_id,
            duration_ms,
            memory_mb,
        });
    }
    events.sort_by(|a, b| {
        a.t_ms
            .cmp(&b.t_ms)
            .then_with(|| a.tenant_id.cmp(&b.tenant_id))
            .then_with(|| a.function_id.cmp(&b.function_id))
    });
    Ok(events)
}

pub fn write_trace<W: std::io::Write>(mut w: W, events: &[TraceEvent]) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.t_ms, e.tenant_id, e.function_id, e.duration_ms, e.memory_mb
        )?;
    }
    Ok(())
}

/// Parameters for the synthetic trace generator.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub tenants: usize,
    pub funcs_per_tenant: usize,
    /// Mean invocations per second across the whole trace.
    pub rate: f64,
    pub duration_s: u64,
    pub seed: u64,
}

/// Deterministically generate a bursty multi-tenant trace.
///
/// Each function gets a fixed memory requirement in [120, 170] MB; tenants
/// fire bursts in which every one of their functions is invoked within a
/// 200 ms window, with durations in [100, 3000] ms — so one tenant's
/// functions overlap heavily inside a burst while bursts stay sparse.
pub fn synthesize_trace(params: &SynthParams) -> Vec<TraceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let total_events = (params.rate * params.duration_s as f64).round() as usize;
    let per_tenant_funcs = params.funcs_per_tenant.max(1);
    let tenants = params.tenants.max(1);
    let bursts_per_tenant =
        (total_events / (tenants * per_tenant_funcs)).max(1);
    let horizon_ms = params.duration_s * 1000;

    let mut events = Vec::new();
    for t in 0..tenants {
        let tenant_id = format!("tenant-{t:03}");
        let memories: Vec<u64> = (0..per_tenant_funcs)
            .map(|_| rng.gen_range(120..=170))
            .collect();
        for _ in 0..bursts_per_tenant {
            let burst_ms = rng.gen_range(0..horizon_ms.max(1));
            for f in 0..per_tenant_funcs {
                let offset = rng.gen_range(0..200);
                let t_ms = (burst_ms + offset).min(horizon_ms.saturating_sub(1));
                events.push(TraceEvent {
                    t_ms,
                    tenant_id: tenant_id.clone(),
                    function_id: format!("tenant-{t:03}-fn-{f:02}"),
                    duration_ms: rng.gen_range(100..=3000),
                    memory_mb: memories[f],
                });
            }
        }
    }
    events.sort_by(|a, b| {
        a.t_ms
            .cmp(&b.t_ms)
            .then_with(|| a.tenant_id.cmp(&b.tenant_id))
            .then_with(|| a.function_id.cmp(&b.function_id))
    });
    events
}

/// How the Azure converter assigns per-application memory, which the public
/// invocation trace does not carry.
#[derive(Debug, Clone, Copy)]
pub enum MemoryAssignment {
    /// Every application gets this many MB.
    Fixed(u64),
    /// Sample per application from the Burr(c, k, lambda) fit published for
    /// the production workload study, clamped to [32, 2048] MB.
    Burr,
}

/// Options for [`convert_azure_trace`].
#[derive(Debug, Clone)]
pub struct ConvertOptions {
    /// Window start in trace seconds; `None` starts at the earliest event.
    pub window_start_s: Option<f64>,
    /// Window length in seconds (the usual segment is 600 s).
    pub window_len_s: f64,
    pub memory: MemoryAssignment,
    pub seed: u64,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            window_start_s: None,
            window_len_s: 600.0,
            memory: MemoryAssignment::Burr,
            seed: 1,
        }
    }
}

fn burr_sample<R: Rng>(c: f64, k: f64, lambda: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    lambda * ((1.0 - u).powf(-1.0 / k) - 1.0).powf(1.0 / c)
}

/// Convert the public Azure Functions invocation trace (columns
/// `app,func,end_timestamp,duration`, seconds) into the internal format.
///
/// Mapping: tenant = owning app, function = func hash, arrival =
/// `end_timestamp - duration` shifted to the window start, duration in ms
/// (minimum 1), memory per app from [`MemoryAssignment`].
pub fn convert_azure_trace(
    contents: &str,
    opts: &ConvertOptions,
) -> Result<Vec<TraceEvent>, TraceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(contents.as_bytes());

    struct Row {
        app: String,
        func: String,
        start_s: f64,
        duration_s: f64,
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() < 4 {
            return Err(parse_err(line, format!("expected 4 fields, got {}", rec.len())));
        }
        // Tolerate a header row.
        if line == 1 && rec[2].parse::<f64>().is_err() {
            continue;
        }
        let end_s: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("end_timestamp: {e}")))?;
        let duration_s: f64 = rec[3]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("duration: {e}")))?;
        rows.push(Row {
            app: rec[0].trim().to_string(),
            func: rec[1].trim().to_string(),
            start_s: end_s - duration_s,
            duration_s,
        });
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }

    let earliest = rows.iter().map(|r| r.start_s).fold(f64::INFINITY, f64::min);
    let window_start = opts.window_start_s.unwrap_or(earliest);
    let window_end = window_start + opts.window_len_s;

    let mut app_memory: std::collections::HashMap<String, u64> = std::collections::HashMap::new();
    let mut events = Vec::new();
    for row in rows {
        if row.start_s < window_start || row.start_s >= window_end {
            continue;
        }
        let memory_mb = *app_memory.entry(row.app.clone()).or_insert_with(|| {
            match opts.memory {
                MemoryAssignment::Fixed(mb) => mb.max(1),
                MemoryAssignment::Burr => {
                    (burr_sample(11.652, 0.221, 107.083, &mut rng).ceil() as u64).clamp(32, 2048)
                }
            }
        });
        events.push(TraceEvent {
            t_ms: ((row.start_s - window_start) * 1000.0).round() as u64,
            tenant_id: row.app,
            function_id: row.func,
            duration_ms: ((row.duration_s * 1000.0).round() as u64).max(1),
            memory_mb,
        });
    }
    events.sort_by(|a, b| {
        a.t_ms
            .cmp(&b.t_ms)
            .then_with(|| a.tenant_id.cmp(&b.tenant_id))
            .then_with(|| a.function_id.cmp(&b.function_id))
    });
    Ok(events)
}
