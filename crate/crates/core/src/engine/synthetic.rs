//! The synthetic function engine.
//!
//! A synthetic function's code artifact is a JSON document describing what
//! the function pretends to do: allocate `alloc_mb` mebibytes, run for
//! `run_ms` milliseconds, and optionally echo its input. Execution really
//! allocates and touches the memory (so budgets and RSS behave like a real
//! guest) and really waits out the duration.

use std::any::Any;

use serde::Deserialize;

use crate::accounting::{round_to_pages, AccountingAllocator, MIB};
use crate::engine::{CompiledProgram, GuestContext, GuestEngine, GuestError};
use crate::registry::FunctionDescriptor;

/// Fixed charge for a synthetic context's bookkeeping arena.
const CONTEXT_OVERHEAD_BYTES: u64 = 64 * 1024;

/// The synthetic-spec document: the `code` artifact for `language="synthetic"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Mebibytes to allocate and touch for the duration of the invocation.
    pub alloc_mb: f64,
    /// Milliseconds the invocation runs.
    pub run_ms: f64,
    /// Copy the input JSON to the output instead of returning `{}`.
    #[serde(default)]
    pub echo: bool,
}

impl SyntheticSpec {
    pub fn parse(code: &[u8]) -> Result<Self, GuestError> {
        let spec: SyntheticSpec = serde_json::from_slice(code)
            .map_err(|e| GuestError::Compile(format!("invalid synthetic spec: {e}")))?;
        if !spec.alloc_mb.is_finite() || spec.alloc_mb < 0.0 {
            return Err(GuestError::Compile("alloc_mb must be >= 0".into()));
        }
        if !spec.run_ms.is_finite() || spec.run_ms < 0.0 {
            return Err(GuestError::Compile("run_ms must be >= 0".into()));
        }
        Ok(spec)
    }

    pub fn alloc_bytes(&self) -> u64 {
        round_to_pages((self.alloc_mb * MIB as f64).round() as u64)
    }
}

pub struct SyntheticEngine {
    /// Fraction of the accounted allocation that is physically touched.
    /// Accounting always charges the full amount; scaling only reduces RSS
    /// so large replays fit on small machines.
    touch_scale: f64,
}

impl SyntheticEngine {
    pub fn new(touch_scale: f64) -> Self {
        Self {
            touch_scale: touch_scale.clamp(0.0, 1.0),
        }
    }
}

impl GuestEngine for SyntheticEngine {
    fn language(&self) -> &'static str {
        "synthetic"
    }

    fn compile_repr(
        &self,
        descriptor: &FunctionDescriptor,
    ) -> Result<Box<dyn Any + Send + Sync>, GuestError> {
        let spec = SyntheticSpec::parse(&descriptor.code)?;
        Ok(Box::new(spec))
    }

    fn create_context_state(
        &self,
        _program: &CompiledProgram,
        alloc: &AccountingAllocator,
    ) -> Result<(Box<dyn Any + Send>, u64), GuestError> {
        alloc.charge(CONTEXT_OVERHEAD_BYTES)?;
        Ok((Box::new(()), CONTEXT_OVERHEAD_BYTES))
    }

    fn exec(
        &self,
        ctx: &mut GuestContext,
        _fep: &str,
        args_json: &str,
        alloc: &AccountingAllocator,
    ) -> Result<String, GuestError> {
        let mut spec = ctx.program().repr::<SyntheticSpec>().clone();

        // Numeric `alloc_mb` / `run_ms` argument fields override the spec,
        // so one registered emulator function can reproduce a whole trace
        // with per-request sizes.
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(args_json) {
            if let Some(x) = value.get("alloc_mb").and_then(serde_json::Value::as_f64) {
                if x.is_finite() && x >= 0.0 {
                    spec.alloc_mb = x;
                }
            }
            if let Some(x) = value.get("run_ms").and_then(serde_json::Value::as_f64) {
                if x.is_finite() && x >= 0.0 {
                    spec.run_ms = x;
                }
            }
        }

        let output = if spec.echo {
            let value: serde_json::Value = serde_json::from_str(args_json)
                .map_err(|e| GuestError::Runtime(format!("invalid argument JSON: {e}")))?;
            serde_json::to_string(&value).expect("re-serializing parsed JSON")
        } else {
            "{}".to_string()
        };

        let bytes = spec.alloc_bytes();
        alloc.charge(bytes)?;
        let touched = (bytes as f64 * self.touch_scale) as usize;
        let mut buffer = vec![0u8; touched];
        // Write one byte per page so the pages are actually committed.
        let mut i = 0;
        while i < buffer.len() {
            buffer[i] = 1;
            i += 4096;
        }

        if spec.run_ms > 0.0 {
            std::thread::sleep(std::time::Duration::from_secs_f64(spec.run_ms / 1000.0));
        }

        std::hint::black_box(&buffer);
        drop(buffer);
        alloc.release(bytes);
        Ok(output)
    }
}
