//! isovisor: a single-process, virtualized, polyglot serverless function
//! runtime, plus a trace replayer comparing runtime-virtualization policies.
//!
//! The runtime hosts many concurrent function invocations in pooled,
//! memory-budgeted isolates behind a minimal HTTP interface. Each isolate
//! serves one function, holds a shared compiled-program cache, and admits up
//! to a configurable number of concurrent guest contexts. Idle isolates stay
//! warm in an MRU pool until a TTL reaper destroys them and returns their
//! memory to the runtime ledger.
//!
//! The replayer feeds recorded invocation traces through three
//! virtualization policies — one worker per invocation, per function, or
//! per tenant — and reports memory-footprint timelines, worker counts, and
//! latency distributions, either simulated or against live runtimes.

pub mod accounting;
pub mod bench;
pub mod config;
pub mod engine;
pub mod gateway;
pub mod isolate;
pub mod metrics;
pub mod registry;
pub mod replay;
pub mod runtime;

pub use accounting::{AccountingAllocator, GlobalAccounting, Oom, GIB, KIB, MIB};
pub use registry::{FunctionDescriptor, FunctionRegistry};
pub use runtime::{InvocationResult, Outcome, Runtime, RuntimeConfig};
