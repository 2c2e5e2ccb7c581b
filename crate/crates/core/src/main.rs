//! isovisor operator CLI: serve the runtime, replay traces, run the
//! cold/warm-start micro-benchmark, and generate or convert trace files.

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use isovisor::bench::{run_bench, BenchParams};
use isovisor::config::{apply_config_file, parse_size};
use isovisor::gateway::{Gateway, GatewayConfig};
use isovisor::replay::live::{replay_live, LiveOptions};
use isovisor::replay::report::compute_metrics;
use isovisor::replay::trace::{convert_azure_trace, write_trace, ConvertOptions, MemoryAssignment};
use isovisor::replay::{
    parse_trace, replay, synthesize_trace, write_report_files, CostModel, Policy, ReplayConfig,
    SynthParams,
};

#[derive(Parser)]
#[command(name = "isovisor", version, about = "Virtualized polyglot serverless runtime and trace replayer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway.
    Serve(ServeArgs),
    /// Replay a trace under one or all policies and write report files.
    Replay(ReplayArgs),
    /// Measure cold/warm start latencies.
    Bench(BenchArgs),
    /// Generate a seeded synthetic trace.
    SynthTrace(SynthArgs),
    /// Convert a public Azure Functions invocation trace to the internal format.
    ConvertTrace(ConvertArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    addr: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Worker pool size (defaults to 2x CPUs).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    queue_capacity: Option<usize>,
    /// Runtime-wide memory cap, e.g. 2GiB or a byte count.
    #[arg(long)]
    memory_cap: Option<String>,
    /// Idle-isolate TTL in seconds.
    #[arg(long)]
    ttl: Option<u64>,
    /// Maximum concurrent contexts per isolate.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    max_contexts: Option<u32>,
    /// Disable code-cache sharing (one context per isolate, unmultiplied budget).
    #[arg(long)]
    no_share_code_cache: bool,
    /// Warm isolates to pre-create per registered function.
    #[arg(long)]
    prewarm: Option<usize>,
    /// Config file (key=value); ISOVISOR_CONFIG is used when not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    /// per-invocation | per-function | per-tenant | all
    #[arg(long)]
    policy: String,
    /// sim (deterministic model) or live (drive real runtimes).
    #[arg(long, default_value = "sim")]
    mode: String,
    /// Fleet-wide memory cap, e.g. 16GiB.
    #[arg(long, default_value = "16GiB")]
    global_cap: String,
    /// Per-worker memory cap for shared policies, e.g. 2GiB.
    #[arg(long, default_value = "2GiB")]
    worker_cap: String,
    /// Idle-worker keep-alive in seconds.
    #[arg(long, default_value_t = 60)]
    keep_alive: u64,
    /// Runtime (worker) cold-start charge in milliseconds.
    #[arg(long, default_value_t = 200.0)]
    cold_start_ms: f64,
    /// Isolate cold-start charge in microseconds.
    #[arg(long, default_value_t = 500)]
    isolate_cold_us: u64,
    /// Fixed per-worker footprint in MB.
    #[arg(long, default_value_t = 30)]
    worker_overhead_mb: u64,
    /// Per-isolate footprint in MB.
    #[arg(long, default_value_t = 1)]
    isolate_overhead_mb: u64,
    /// Live mode: fraction of synthetic allocations physically touched.
    #[arg(long, default_value_t = 1.0)]
    touch_scale: f64,
    /// Output directory for summary.json and the CSV series.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// Hold this many live isolates while measuring creation latency.
    #[arg(long, default_value_t = 0)]
    concurrent_isolates: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    tenants: usize,
    #[arg(long, default_value_t = 4)]
    functions_per_tenant: usize,
    /// Mean invocations per second across the trace.
    #[arg(long, default_value_t = 4.0)]
    rate: f64,
    #[arg(long, default_value_t = 120)]
    duration_s: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    /// Azure invocation trace CSV (app,func,end_timestamp,duration).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Window start in trace seconds (defaults to the earliest event).
    #[arg(long)]
    window_start: Option<f64>,
    /// Window length in seconds.
    #[arg(long, default_value_t = 600.0)]
    window_len: f64,
    /// Fixed per-app memory in MB; omitted means the published Burr fit.
    #[arg(long)]
    memory_mb: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(args) => cmd_serve(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Bench(args) => cmd_bench(args),
        Command::SynthTrace(args) => cmd_synth(args),
        Command::ConvertTrace(args) => cmd_convert(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn cmd_serve(args: ServeArgs) -> anyhow::Result<()> {
    let mut cfg = GatewayConfig::default();

    let config_path = args
        .config
        .or_else(|| std::env::var_os("ISOVISOR_CONFIG").map(PathBuf::from));
    if let Some(path) = config_path {
        apply_config_file(&path, &mut cfg).map_err(|e| anyhow::anyhow!(e))?;
    }

    cfg.addr = SocketAddr::new(args.addr, args.port);
    if let Some(w) = args.workers {
        cfg.worker_count = w;
    }
    if let Some(q) = args.queue_capacity {
        cfg.queue_capacity = q;
    }
    if let Some(cap) = args.memory_cap {
        cfg.runtime.memory_cap = parse_size(&cap).map_err(|e| anyhow::anyhow!(e))?;
    }
    if let Some(ttl) = args.ttl {
        cfg.runtime.ttl = Duration::from_secs(ttl);
    }
    if let Some(mc) = args.max_contexts {
        cfg.runtime.max_contexts = mc as usize;
    }
    if args.no_share_code_cache {
        cfg.runtime.share_code_cache = false;
    }
    if let Some(p) = args.prewarm {
        cfg.runtime.prewarm_n = p;
    }
    cfg.validate().map_err(|e| anyhow::anyhow!(e))?;

    tracing::info!(
        addr = %cfg.addr,
        workers = cfg.worker_count,
        queue = cfg.queue_capacity,
        memory_cap = cfg.runtime.memory_cap,
        ttl_s = cfg.runtime.ttl.as_secs(),
        max_contexts = cfg.runtime.max_contexts,
        share_code_cache = cfg.runtime.share_code_cache,
        prewarm = cfg.runtime.prewarm_n,
        "starting gateway"
    );
    let gateway = Gateway::start(cfg)?;
    println!("listening on http://{}", gateway.local_addr());

    let signals = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?;
    signals.block_on(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    tracing::info!("shutdown signal received");
    gateway.shutdown();
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> anyhow::Result<()> {
    let events = parse_trace(&args.trace)
        .with_context(|| format!("parsing {}", args.trace.display()))?;
    let cfg = ReplayConfig {
        cost: CostModel {
            runtime_cold_start_ms: args.cold_start_ms,
            isolate_cold_start_us: args.isolate_cold_us,
            per_worker_overhead_mb: args.worker_overhead_mb,
            per_isolate_overhead_mb: args.isolate_overhead_mb,
        },
        global_cap_bytes: parse_size(&args.global_cap).map_err(|e| anyhow::anyhow!(e))?,
        worker_cap_bytes: parse_size(&args.worker_cap).map_err(|e| anyhow::anyhow!(e))?,
        keep_alive: Duration::from_secs(args.keep_alive),
        ..ReplayConfig::default()
    };
    let live = match args.mode.as_str() {
        "sim" => false,
        "live" => true,
        other => bail!("unknown mode {other:?}; expected sim or live"),
    };
    let policies: Vec<Policy> = if args.policy == "all" {
        Policy::ALL.to_vec()
    } else {
        vec![Policy::parse(&args.policy)
            .with_context(|| format!("unknown policy {:?}", args.policy))?]
    };
    let comparison = policies.len() > 1;

    let mut summaries = Vec::new();
    for policy in policies {
        let report = if live {
            replay_live(
                &events,
                policy,
                &cfg,
                &LiveOptions {
                    touch_scale: args.touch_scale,
                    ..LiveOptions::default()
                },
            )
        } else {
            replay(&events, policy, &cfg)
        };
        let summary = compute_metrics(&report);
        let prefix = if comparison {
            policy.name().replace('-', "_")
        } else {
            String::new()
        };
        write_report_files(&report, &summary, &args.out, &prefix)?;
        println!(
            "{}: events={} completed={} rejected={} workers={} p50={:.1}ms p99={:.1}ms mean_mem={:.1}MB max_mem={}MB",
            policy,
            summary.events,
            summary.completed,
            summary.rejected,
            summary.workers_created,
            summary.latency.p50_ms,
            summary.latency.p99_ms,
            summary.memory.mean_bytes / (1024.0 * 1024.0),
            summary.memory.max_bytes / (1024 * 1024),
        );
        summaries.push(summary);
    }
    if comparison {
        let file = std::fs::File::create(args.out.join("comparison.json"))?;
        serde_json::to_writer_pretty(file, &summaries)?;
        println!(
            "comparison written to {}",
            args.out.join("comparison.json").display()
        );
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    let report = run_bench(&BenchParams {
        iterations: args.iterations,
        concurrent_isolates: args.concurrent_isolates,
    });
    print!("{}", report.table());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let events = synthesize_trace(&SynthParams {
        tenants: args.tenants,
        funcs_per_tenant: args.functions_per_tenant,
        rate: args.rate,
        duration_s: args.duration_s,
        seed: args.seed,
    });
    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_trace(file, &events)?;
    println!("wrote {} events to {}", events.len(), args.out.display());
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> anyhow::Result<()> {
    let contents = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let opts = ConvertOptions {
        window_start_s: args.window_start,
        window_len_s: args.window_len,
        memory: match args.memory_mb {
            Some(mb) => MemoryAssignment::Fixed(mb),
            None => MemoryAssignment::Burr,
        },
        seed: args.seed,
    };
    let events = convert_azure_trace(&contents, &opts)
        .with_context(|| format!("converting {}", args.input.display()))?;
    let file = std::fs::File::create(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    write_trace(file, &events)?;
    println!("wrote {} events to {}", events.len(), args.output.display());
    Ok(())
}
