//! The embedded scripting engine, backed by rhai.
//!
//! The code artifact is rhai source defining one or more functions; the
//! registered entry point names the function to call. Arguments arrive as a
//! JSON value mapped into the guest, the return value is mapped back to
//! JSON. Each context owns a private object map exposed to the script as
//! `this`, which persists across invocations of the same context — that map
//! is the context-local mutable state, and two contexts never see each
//! other's.

use std::any::Any;
use std::collections::HashSet;

use rhai::{CallFnOptions, Dynamic, Scope, AST};

use crate::accounting::{round_to_pages, AccountingAllocator};
use crate::engine::{CompiledProgram, GuestContext, GuestEngine, GuestError};
use crate::registry::FunctionDescriptor;

/// Fixed charge for a fresh script context (interpreter scope + state map).
const CONTEXT_ARENA_BYTES: u64 = 256 * 1024;

/// Guard against runaway scripts; generous for function workloads.
const MAX_OPERATIONS: u64 = 50_000_000;

struct ScriptProgram {
    ast: AST,
    functions: HashSet<String>,
}

struct ScriptState {
    this_state: Dynamic,
}

pub struct ScriptEngine {
    engine: rhai::Engine,
}

impl Default for ScriptEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptEngine {
    pub fn new() -> Self {
        let mut engine = rhai::Engine::new();
        engine.set_max_operations(MAX_OPERATIONS);
        engine.set_max_expr_depths(64, 64);
        engine.set_max_string_size(4 * 1024 * 1024);
        engine.set_max_array_size(1_000_000);
        engine.set_max_map_size(1_000_000);
        Self { engine }
    }
}

/// Rough retained-size estimate of a guest value, for page-granular
/// accounting of context state.
fn estimate_bytes(value: &Dynamic) -> u64 {
    if let Some(s) = value.read_lock::<rhai::ImmutableString>() {
        return 24 + s.len() as u64;
    }
    if let Some(arr) = value.read_lock::<rhai::Array>() {
        return 32 + arr.iter().map(estimate_bytes).sum::<u64>();
    }
    if let Some(map) = value.read_lock::<rhai::Map>() {
        return 32
            + map
                .iter()
                .map(|(k, v)| 24 + k.len() as u64 + estimate_bytes(v))
                .sum::<u64>();
    }
    16
}

impl GuestEngine for ScriptEngine {
    fn language(&self) -> &'static str {
        "rhai"
    }

    fn compile_repr(
        &self,
        descriptor: &FunctionDescriptor,
    ) -> Result<Box<dyn Any + Send + Sync>, GuestError> {
        let source = std::str::from_utf8(&descriptor.code)
            .map_err(|e| GuestError::Compile(format!("script is not valid UTF-8: {e}")))?;
        if source.trim().is_empty() {
            return Err(GuestError::Compile("empty script".into()));
        }
        let ast = self
            .engine
            .compile(source)
            .map_err(|e| GuestError::Compile(e.to_string()))?;
        let functions = ast
            .iter_functions()
            .map(|f| f.name.to_string())
            .collect::<HashSet<_>>();
        Ok(Box::new(ScriptProgram { ast, functions }))
    }

    fn create_context_state(
        &self,
        _program: &CompiledProgram,
        alloc: &AccountingAllocator,
    ) -> Result<(Box<dyn Any + Send>, u64), GuestError> {
        alloc.charge(CONTEXT_ARENA_BYTES)?;
        let state = ScriptState {
            this_state: Dynamic::from(rhai::Map::new()),
        };
        Ok((Box::new(state), CONTEXT_ARENA_BYTES))
    }

    fn exec(
        &self,
        ctx: &mut GuestContext,
        fep: &str,
        args_json: &str,
        alloc: &AccountingAllocator,
    ) -> Result<String, GuestError> {
        let program = ctx.program().clone();
        let script = program.repr::<ScriptProgram>();
        if !script.functions.contains(fep) {
            return Err(GuestError::EntryPointNotFound(fep.to_string()));
        }

        let args_value: serde_json::Value = serde_json::from_str(args_json)
            .map_err(|e| GuestError::Runtime(format!("invalid argument JSON: {e}")))?;
        let args: Dynamic = rhai::serde::to_dynamic(&args_value)
            .map_err(|e| GuestError::Runtime(format!("argument mapping failed: {e}")))?;

        let state = ctx.state_mut::<ScriptState>();
        let mut scope = Scope::new();
        let options = CallFnOptions::new().bind_this_ptr(&mut state.this_state);
        let result: Dynamic = self
            .engine
            .call_fn_with_options(options, &mut scope, &script.ast, fep, (args,))
            .map_err(|e| map_eval_error(*e, fep))?;

        let result_value: serde_json::Value = rhai::serde::from_dynamic(&result)
            .map_err(|e| GuestError::Runtime(format!("result is not JSON-mappable: {e}")))?;
        let output =
            serde_json::to_string(&result_value).expect("serde_json::Value always serializes");

        // Re-measure retained state at page granularity.
        let state_bytes = estimate_bytes(&ctx.state_mut::<ScriptState>().this_state);
        let new_total = CONTEXT_ARENA_BYTES + round_to_pages(state_bytes);
        ctx.recharge(alloc, new_total)?;
        Ok(output)
    }
}

fn map_eval_error(err: rhai::EvalAltResult, fep: &str) -> GuestError {
    match &err {
        rhai::EvalAltResult::ErrorFunctionNotFound(name, _) if name.starts_with(fep) => {
            GuestError::EntryPointNotFound(fep.to_string())
        }
        _ => GuestError::Runtime(err.to_string()),
    }
}
