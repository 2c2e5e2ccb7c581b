//! Pluggable guest-code execution.
//!
//! An engine knows how to compile one language's code artifact into an
//! immutable [`CompiledProgram`] and how to run it inside a [`GuestContext`].
//! Compiled programs are shared by every context within one isolate (the
//! code-cache-sharing mechanism); contexts hold the per-invocation mutable
//! guest state and never share it with each other.
//!
//! Three engines ship by default:
//!
//! * `synthetic` — emulates a function by allocating and touching a given
//!   amount of memory and running for a given time; drives the replayer.
//! * `rhai` — a real embedded scripting engine.
//! * `prebuilt` — host-implemented builtins addressed by name, modelling the
//!   zero-warmup property of ahead-of-time compiled functions.

mod prebuilt;
mod script;
mod synthetic;

pub use prebuilt::{BuiltinFn, PrebuiltEngine, PrebuiltRegistry};
pub use script::ScriptEngine;
pub use synthetic::{SyntheticEngine, SyntheticSpec};

use std::any::Any;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::accounting::{AccountingAllocator, Oom};
use crate::registry::FunctionDescriptor;

/// Failure modes of guest compilation and execution.
#[derive(Debug, Error)]
pub enum GuestError {
    #[error("compile error: {0}")]
    Compile(String),
    #[error("entry point not found: {0}")]
    EntryPointNotFound(String),
    #[error("guest runtime error: {0}")]
    Runtime(String),
    #[error("out of memory: {0}")]
    Oom(#[from] Oom),
}

impl GuestError {
    /// An OOM poisons the isolate; every other guest failure leaves it usable.
    pub fn is_oom(&self) -> bool {
        matches!(self, GuestError::Oom(_))
    }
}

/// An immutable compiled representation of a function artifact.
///
/// Shareable by any number of contexts within the isolate that compiled it.
pub struct CompiledProgram {
    pub fid: String,
    pub language: String,
    pub fep: String,
    pub compiled_at: Instant,
    repr: Box<dyn Any + Send + Sync>,
}

impl std::fmt::Debug for CompiledProgram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompiledProgram")
            .field("fid", &self.fid)
            .field("language", &self.language)
            .field("fep", &self.fep)
            .finish_non_exhaustive()
    }
}

impl CompiledProgram {
    pub fn repr<T: 'static>(&self) -> &T {
        self.repr
            .downcast_ref::<T>()
            .expect("program representation type matches its engine")
    }
}

/// Per-invocation mutable guest state bound to one compiled program.
///
/// A context is confined: exactly one worker executes in it at a time,
/// though it may be handed between workers across invocations.
pub struct GuestContext {
    program: Arc<CompiledProgram>,
    state: Box<dyn Any + Send>,
    /// Bytes currently charged to the isolate allocator on behalf of this
    /// context (creation arena plus retained guest state).
    charged_bytes: u64,
}

impl GuestContext {
    pub fn program(&self) -> &Arc<CompiledProgram> {
        &self.program
    }

    pub fn state_mut<T: 'static>(&mut self) -> &mut T {
        self.state
            .downcast_mut::<T>()
            .expect("context state type matches its engine")
    }

    pub fn charged_bytes(&self) -> u64 {
        self.charged_bytes
    }

    /// Adjust the context's retained charge to `new_total`, moving the
    /// difference through the allocator.
    pub fn recharge(&mut self, alloc: &AccountingAllocator, new_total: u64) -> Result<(), Oom> {
        if new_total > self.charged_bytes {
            alloc.charge(new_total - self.charged_bytes)?;
        } else {
            alloc.release(self.charged_bytes - new_total);
        }
        self.charged_bytes = new_total;
        Ok(())
    }

    /// Release everything this context holds. Called on teardown.
    pub fn release_all(&mut self, alloc: &AccountingAllocator) {
        alloc.release(self.charged_bytes);
        self.charged_bytes = 0;
    }
}

/// One guest language implementation.
pub trait GuestEngine: Send + Sync {
    /// Language tag used in registrations.
    fn language(&self) -> &'static str;

    /// Whether compiled programs are cached and shared per isolate.
    fn supports_compilation_cache(&self) -> bool {
        true
    }

    /// Whether a compilation counts against the global compile counter.
    /// Prebuilt builtins bypass compilation entirely.
    fn counts_as_compile(&self) -> bool {
        true
    }

    /// Produce the engine-specific compiled representation.
    fn compile_repr(
        &self,
        descriptor: &FunctionDescriptor,
    ) -> Result<Box<dyn Any + Send + Sync>, GuestError>;

    /// Produce fresh per-context state, charging whatever the context needs
    /// up front. Returns the state and the bytes charged.
    fn create_context_state(
        &self,
        program: &CompiledProgram,
        alloc: &AccountingAllocator,
    ) -> Result<(Box<dyn Any + Send>, u64), GuestError>;

    /// Run the entry point with a JSON argument string, returning the JSON
    /// result string. Guest allocations flow through `alloc`.
    fn exec(
        &self,
        ctx: &mut GuestContext,
        fep: &str,
        args_json: &str,
        alloc: &AccountingAllocator,
    ) -> Result<String, GuestError>;
}

/// The set of installed engines, keyed by language tag.
pub struct EngineSet {
    engines: HashMap<&'static str, Arc<dyn GuestEngine>>,
}

impl EngineSet {
    /// The default installation: synthetic, rhai, and the stock builtins.
    pub fn with_defaults(synthetic_touch_scale: f64) -> Self {
        let mut engines: HashMap<&'static str, Arc<dyn GuestEngine>> = HashMap::new();
        let synthetic = Arc::new(SyntheticEngine::new(synthetic_touch_scale));
        let script = Arc::new(ScriptEngine::new());
        let prebuilt = Arc::new(PrebuiltEngine::new(PrebuiltRegistry::with_defaults()));
        engines.insert(synthetic.language(), synthetic);
        engines.insert(script.language(), script);
        engines.insert(prebuilt.language(), prebuilt);
        Self { engines }
    }

    pub fn get(&self, language: &str) -> Option<&Arc<dyn GuestEngine>> {
        self.engines.get(language)
    }

    pub fn languages(&self) -> std::collections::BTreeSet<String> {
        self.engines.keys().map(|l| l.to_string()).collect()
    }

    /// Compile a descriptor with its engine, wrapping the result.
    pub fn compile(
        &self,
        descriptor: &FunctionDescriptor,
    ) -> Result<(Arc<CompiledProgram>, bool), GuestError> {
        let engine = self.get(&descriptor.language).ok_or_else(|| {
            GuestError::Compile(format!("no engine for language {:?}", descriptor.language))
        })?;
        let repr = engine.compile_repr(descriptor)?;
        let program = Arc::new(CompiledProgram {
            fid: descriptor.fid.clone(),
            language: descriptor.language.clone(),
            fep: descriptor.fep.clone(),
            compiled_at: Instant::now(),
            repr,
        });
        Ok((program, engine.counts_as_compile()))
    }

    /// Create a context for a program compiled by one of our engines.
    pub fn create_context(
        &self,
        program: &Arc<CompiledProgram>,
        alloc: &AccountingAllocator,
    ) -> Result<GuestContext, GuestError> {
        let engine = self.get(&program.language).ok_or_else(|| {
            GuestError::Compile(format!("no engine for language {:?}", program.language))
        })?;
        let (state, charged) = engine.create_context_state(program, alloc)?;
        Ok(GuestContext {
            program: program.clone(),
            state,
            charged_bytes: charged,
        })
    }

    pub fn exec(
        &self,
        ctx: &mut GuestContext,
        fep: &str,
        args_json: &str,
        alloc: &AccountingAllocator,
    ) -> Result<String, GuestError> {
        let engine = self
            .get(&ctx.program.language)
            .expect("context was created by an installed engine")
            .clone();
        engine.exec(ctx, fep, args_json, alloc)
    }
}
