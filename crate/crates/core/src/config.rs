//! CLI/operator configuration plumbing: byte-size parsing with `KiB` /
//! `MiB` / `GiB` suffixes (CLI only; serialized values are always plain
//! bytes) and the `key=value` config file mirroring the gateway settings.

use std::collections::HashMap;
use std::path::Path;

use crate::gateway::GatewayConfig;

/// Parse a size: plain bytes, or a number with a `KiB`/`MiB`/`GiB` suffix
/// (case-insensitive, `K`/`M`/`G` accepted).
pub fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty size".into());
    }
    let lower = s.to_ascii_lowercase();
    let (number, multiplier) = if let Some(n) = lower.strip_suffix("kib").or(lower.strip_suffix("k")) {
        (n, 1024u64)
    } else if let Some(n) = lower.strip_suffix("mib").or(lower.strip_suffix("m")) {
        (n, 1024 * 1024)
    } else if let Some(n) = lower.strip_suffix("gib").or(lower.strip_suffix("g")) {
        (n, 1024 * 1024 * 1024)
    } else {
        (lower.as_str(), 1)
    };
    let number = number.trim();
    let value: f64 = number
        .parse()
        .map_err(|e| format!("invalid size {s:?}: {e}"))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("invalid size {s:?}"));
    }
    Ok((value * multiplier as f64).round() as u64)
}

/// Parse a `key=value` config file. Blank lines and `#` comments are
/// ignored; unknown keys are errors.
pub fn apply_config_file(path: &Path, cfg: &mut GatewayConfig) -> Result<(), String> {
    let contents =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut pairs = HashMap::new();
    for (i, line) in contents.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        pairs.insert(key.trim().to_string(), value.trim().to_string());
    }

    for (key, value) in pairs {
        let parse_u64 = |v: &str| v.parse::<u64>().map_err(|e| format!("{key}: {e}"));
        let parse_bool = |v: &str| match v {
            "true" | "1" | "on" => Ok(true),
            "false" | "0" | "off" => Ok(false),
            other => Err(format!("{key}: expected true/false, got {other:?}")),
        };
        match key.as_str() {
            "addr" => {
                let port = cfg.addr.port();
                let ip = value
                    .parse()
                    .map_err(|e| format!("addr: {e}"))?;
                cfg.addr = std::net::SocketAddr::new(ip, port);
            }
            "port" => {
                let port = parse_u64(&value)? as u16;
                cfg.addr.set_port(port);
            }
            "worker_count" => cfg.worker_count = parse_u64(&value)? as usize,
            "queue_capacity" => cfg.queue_capacity = parse_u64(&value)? as usize,
            "runtime_memory_cap" => cfg.runtime.memory_cap = parse_u64(&value)?,
            "ttl_seconds" => {
                cfg.runtime.ttl = std::time::Duration::from_secs(parse_u64(&value)?)
            }
            "max_contexts" => cfg.runtime.max_contexts = parse_u64(&value)? as usize,
            "share_code_cache" => cfg.runtime.share_code_cache = parse_bool(&value)?,
            "prewarm_n" => cfg.runtime.prewarm_n = parse_u64(&value)? as usize,
            other => return Err(format!("unknown config key {other:?}")),
        }
    }
    Ok(())
}
