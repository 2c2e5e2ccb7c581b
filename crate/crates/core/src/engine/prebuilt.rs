//! Host-implemented builtin functions.
//!
//! A prebuilt function's code artifact is simply the name of a builtin in
//! the host registry. Builtins skip compilation entirely — the analogue of
//! deploying an ahead-of-time compiled library — so their first invocation
//! in a fresh isolate has no warm-up beyond context bookkeeping.

use std::any::Any;
use std::collections::HashMap;

use crate::accounting::AccountingAllocator;
use crate::engine::{CompiledProgram, GuestContext, GuestEngine, GuestError};
use crate::registry::FunctionDescriptor;

const CONTEXT_OVERHEAD_BYTES: u64 = 4 * 1024;

/// A builtin: JSON in, JSON out.
pub type BuiltinFn = fn(&serde_json::Value) -> Result<serde_json::Value, String>;

/// Named host functions addressable from registrations.
pub struct PrebuiltRegistry {
    builtins: HashMap<String, BuiltinFn>,
}

impl PrebuiltRegistry {
    pub fn new() -> Self {
        Self {
            builtins: HashMap::new(),
        }
    }

    /// The stock builtins: `nop`, `echo`, and `len`.
    pub fn with_defaults() -> Self {
        let mut reg = Self::new();
        reg.install("nop", |_| Ok(serde_json::json!({})));
        reg.install("echo", |args| Ok(args.clone()));
        reg.install("len", |args| {
            let canonical = serde_json::to_string(args).map_err(|e| e.to_string())?;
            Ok(serde_json::json!({ "len": canonical.len() }))
        });
        reg
    }

    pub fn install(&mut self, name: &str, f: BuiltinFn) {
        self.builtins.insert(name.to_string(), f);
    }

    pub fn get(&self, name: &str) -> Option<BuiltinFn> {
        self.builtins.get(name).copied()
    }
}

impl Default for PrebuiltRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

pub struct PrebuiltEngine {
    registry: PrebuiltRegistry,
}

impl PrebuiltEngine {
    pub fn new(registry: PrebuiltRegistry) -> Self {
        Self { registry }
    }
}

impl GuestEngine for PrebuiltEngine {
    fn language(&self) -> &'static str {
        "prebuilt"
    }

    fn counts_as_compile(&self) -> bool {
        false
    }

    fn compile_repr(
        &self,
        descriptor: &FunctionDescriptor,
    ) -> Result<Box<dyn Any + Send + Sync>, GuestError> {
        let name = std::str::from_utf8(&descriptor.code)
            .map_err(|_| GuestError::Compile("builtin name is not valid UTF-8".into()))?
            .trim();
        let f = self
            .registry
            .get(name)
            .ok_or_else(|| GuestError::Compile(format!("unknown builtin {name:?}")))?;
        Ok(Box::new(f))
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
        _alloc: &AccountingAllocator,
    ) -> Result<String, GuestError> {
        let f = *ctx.program().repr::<BuiltinFn>();
        let args: serde_json::Value = serde_json::from_str(args_json)
            .map_err(|e| GuestError::Runtime(format!("invalid argument JSON: {e}")))?;
        let out = f(&args).map_err(GuestError::Runtime)?;
        Ok(serde_json::to_string(&out).expect("serde_json::Value always serializes"))
    }
}
