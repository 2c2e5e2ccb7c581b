//! Isolates and their lifecycle: create, pool, reuse, reap, destroy.
//!
//! An isolate is a memory-budgeted sandbox that hosts invocations of exactly
//! one function. It owns an accounting allocator, a per-isolate compiled
//! program cache, and up to `max_contexts` guest contexts. With code-cache
//! sharing enabled, concurrent invocations of the same function co-locate in
//! one isolate, each bound to its own context, all sharing one compiled
//! program — so the isolate compiles once no matter how many contexts it
//! ever creates.

mod handle;
mod pool;

pub use handle::{HandleError, HandleTable, HandleValue, ObjectHandle};
pub use pool::{IsolatePool, OfferDisposition};

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use thiserror::Error;

use crate::accounting::{AccountingAllocator, GlobalAccounting, Oom};
use crate::engine::{CompiledProgram, EngineSet, GuestContext, GuestError};
use crate::metrics::RuntimeMetrics;
use crate::registry::FunctionDescriptor;

/// A memory-budgeted execution sandbox for one function.
pub struct Isolate {
    id: u64,
    fid: String,
    allocator: AccountingAllocator,
    /// The pre-allocated isolate heap; kept alive for the isolate's lifetime.
    #[allow(dead_code)]
    base_heap: Vec<u8>,
    code_cache: Mutex<Option<Arc<CompiledProgram>>>,
    /// `None` slots are contexts currently checked out by a worker.
    contexts: Mutex<Vec<Option<GuestContext>>>,
    max_contexts: usize,
    in_flight: AtomicUsize,
    last_used: Mutex<Instant>,
    doomed: AtomicBool,
    poisoned: AtomicBool,
}

impl std::fmt::Debug for Isolate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Isolate")
            .field("id", &self.id)
            .field("fid", &self.fid)
            .field("budget", &self.allocator.budget())
            .field("in_flight", &self.in_flight())
            .finish_non_exhaustive()
    }
}

impl Isolate {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn fid(&self) -> &str {
        &self.fid
    }

    pub fn allocator(&self) -> &AccountingAllocator {
        &self.allocator
    }

    pub fn budget(&self) -> u64 {
        self.allocator.budget()
    }

    pub fn last_used(&self) -> Instant {
        *self.last_used.lock()
    }

    pub fn touch(&self, now: Instant) {
        *self.last_used.lock() = now;
    }

    pub fn is_doomed(&self) -> bool {
        self.doomed.load(Ordering::Acquire)
    }

    pub fn doom(&self) {
        self.doomed.store(true, Ordering::Release);
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned.load(Ordering::Acquire)
    }

    fn poison(&self) {
        self.poisoned.store(true, Ordering::Release);
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::Acquire)
    }

    pub fn context_count(&self) -> usize {
        self.contexts.lock().len()
    }

    /// The compiled program for this isolate, compiling on first use.
    fn program(
        &self,
        engines: &EngineSet,
        descriptor: &FunctionDescriptor,
        metrics: &RuntimeMetrics,
    ) -> Result<Arc<CompiledProgram>, GuestError> {
        let mut cache = self.code_cache.lock();
        if let Some(program) = cache.as_ref() {
            return Ok(program.clone());
        }
        let (program, counts) = engines.compile(descriptor)?;
        if counts {
            metrics.record_compile();
        }
        *cache = Some(program.clone());
        Ok(program)
    }

    /// Bind the calling worker to a context: reuse a warm idle one or create
    /// a fresh one if there is slot capacity.
    fn checkout_context(
        &self,
        engines: &EngineSet,
        descriptor: &FunctionDescriptor,
        metrics: &RuntimeMetrics,
    ) -> Result<(usize, GuestContext), GuestError> {
        let mut slots = self.contexts.lock();
        if let Some(idx) = slots.iter().position(|s| s.is_some()) {
            let ctx = slots[idx].take().expect("slot checked above");
            return Ok((idx, ctx));
        }
        if slots.len() >= self.max_contexts {
            // Admission bounds in-flight workers by max_contexts, so a free
            // slot or slot capacity must exist here.
            return Err(GuestError::Runtime(format!(
                "isolate {} has no free context",
                self.id
            )));
        }
        let program = self.program(engines, descriptor, metrics)?;
        let ctx = engines.create_context(&program, &self.allocator)?;
        slots.push(None);
        metrics.note_peak_contexts(slots.len());
        Ok((slots.len() - 1, ctx))
    }

    fn return_context(&self, idx: usize, ctx: GuestContext) {
        let mut slots = self.contexts.lock();
        debug_assert!(slots[idx].is_none(), "returning to an occupied slot");
        slots[idx] = Some(ctx);
    }
}

/// How an invocation attempt failed inside the manager.
#[derive(Debug, Error)]
pub enum InvokeFailure {
    #[error("function not registered")]
    NotRegistered,
    #[error(transparent)]
    Oom(#[from] Oom),
    #[error(transparent)]
    Guest(GuestError),
    #[error(transparent)]
    Handle(#[from] HandleError),
}

impl From<GuestError> for InvokeFailure {
    fn from(e: GuestError) -> Self {
        match e {
            GuestError::Oom(oom) => InvokeFailure::Oom(oom),
            other => InvokeFailure::Guest(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManagerConfig {
    pub max_contexts: usize,
    pub share_code_cache: bool,
    pub base_heap_bytes: u64,
    pub ttl: Duration,
}

impl ManagerConfig {
    /// Contexts an isolate may host under this configuration.
    pub fn effective_max_contexts(&self) -> usize {
        if self.share_code_cache {
            self.max_contexts.max(1)
        } else {
            1
        }
    }

    /// Isolate budget for a function with the given memory budget.
    pub fn isolate_budget(&self, mem: u64) -> u64 {
        mem.saturating_mul(self.effective_max_contexts() as u64)
    }
}

/// Creates, pools, co-locates, reaps, and destroys isolates.
pub struct IsolateManager {
    cfg: ManagerConfig,
    pool: IsolatePool,
    /// Isolates currently hosting at least one invocation, per function,
    /// most recently admitted at the back.
    executing: Mutex<HashMap<String, Vec<Arc<Isolate>>>>,
    global: Arc<GlobalAccounting>,
    engines: Arc<EngineSet>,
    metrics: Arc<RuntimeMetrics>,
    handles: Arc<HandleTable>,
    next_id: AtomicU64,
}

impl IsolateManager {
    pub fn new(
        cfg: ManagerConfig,
        global: Arc<GlobalAccounting>,
        engines: Arc<EngineSet>,
        metrics: Arc<RuntimeMetrics>,
        handles: Arc<HandleTable>,
    ) -> Self {
        let ttl = cfg.ttl;
        Self {
            cfg,
            pool: IsolatePool::new(ttl),
            executing: Mutex::new(HashMap::new()),
            global,
            engines,
            metrics,
            handles,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn pool(&self) -> &IsolatePool {
        &self.pool
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.cfg
    }

    /// Allocate a fresh isolate for `descriptor`: budgeted allocator plus the
    /// pre-allocated base heap, empty code cache, no contexts.
    pub fn create_isolate(&self, descriptor: &FunctionDescriptor) -> Result<Arc<Isolate>, Oom> {
        let start = Instant::now();
        let budget = self.cfg.isolate_budget(descriptor.mem);
        let allocator = AccountingAllocator::new(budget, self.global.clone());
        allocator.charge(self.cfg.base_heap_bytes)?;

        // Commit the base heap for real so creation cost is honest.
        let mut base_heap = vec![0u8; self.cfg.base_heap_bytes as usize];
        let mut i = 0;
        while i < base_heap.len() {
            base_heap[i] = 1;
            i += 4096;
        }

        let isolate = Arc::new(Isolate {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            fid: descriptor.fid.clone(),
            allocator,
            base_heap,
            code_cache: Mutex::new(None),
            contexts: Mutex::new(Vec::new()),
            max_contexts: self.cfg.effective_max_contexts(),
            in_flight: AtomicUsize::new(0),
            last_used: Mutex::new(Instant::now()),
            doomed: AtomicBool::new(false),
            poisoned: AtomicBool::new(false),
        });
        self.metrics
            .record_isolate_created(start.elapsed().as_micros() as u64);
        tracing::trace!(id = isolate.id, fid = %descriptor.fid, budget, "isolate created");
        Ok(isolate)
    }

    /// Find or create an isolate to host one invocation of `descriptor`.
    /// Preference order: warm pooled isolate, co-location in an executing
    /// isolate with context headroom, then a fresh isolate. Returns the
    /// isolate and whether it is cold (newly created).
    pub fn acquire(&self, descriptor: &FunctionDescriptor) -> Result<(Arc<Isolate>, bool), Oom> {
        let mut executing = self.executing.lock();

        if let Some(iso) = self.pool.poll(&descriptor.fid) {
            iso.in_flight.fetch_add(1, Ordering::AcqRel);
            executing
                .entry(descriptor.fid.clone())
                .or_default()
                .push(iso.clone());
            return Ok((iso, false));
        }

        if self.cfg.share_code_cache {
            if let Some(list) = executing.get(&descriptor.fid) {
                for iso in list.iter().rev() {
                    if !iso.is_doomed()
                        && !iso.is_poisoned()
                        && iso.in_flight() < iso.max_contexts
                    {
                        iso.in_flight.fetch_add(1, Ordering::AcqRel);
                        return Ok((iso.clone(), false));
                    }
                }
            }
        }

        let iso = self.create_isolate(descriptor)?;
        iso.in_flight.fetch_add(1, Ordering::AcqRel);
        executing
            .entry(descriptor.fid.clone())
            .or_default()
            .push(iso.clone());
        Ok((iso, true))
    }

    /// Execute one invocation inside `isolate`. The function and arguments
    /// arrive as handles (retrieved and released here); the JSON result is
    /// pinned into a fresh handle.
    pub fn run_in_isolate(
        &self,
        isolate: &Arc<Isolate>,
        func_handle: ObjectHandle,
        args_handle: ObjectHandle,
    ) -> Result<ObjectHandle, InvokeFailure> {
        let descriptor = match self.handles.retrieve(func_handle)? {
            HandleValue::Function(d) => d,
            HandleValue::Json(_) => {
                return Err(InvokeFailure::Guest(GuestError::Runtime(
                    "function handle does not reference a function".into(),
                )))
            }
        };
        let args = match self.handles.retrieve(args_handle)? {
            HandleValue::Json(s) => s,
            HandleValue::Function(_) => {
                return Err(InvokeFailure::Guest(GuestError::Runtime(
                    "argument handle does not reference arguments".into(),
                )))
            }
        };

        let (idx, mut ctx) =
            match isolate.checkout_context(&self.engines, &descriptor, &self.metrics) {
                Ok(pair) => pair,
                Err(e) => return Err(self.fail(isolate, e)),
            };

        match self
            .engines
            .exec(&mut ctx, &descriptor.fep, &args, &isolate.allocator)
        {
            Ok(result) => {
                isolate.return_context(idx, ctx);
                isolate.touch(Instant::now());
                Ok(self.handles.pin(HandleValue::Json(result)))
            }
            Err(e) => {
                if e.is_oom() {
                    // Budget breached mid-execution: the context's guest
                    // state is untrustworthy, drop it with its charges.
                    ctx.release_all(&isolate.allocator);
                } else {
                    isolate.return_context(idx, ctx);
                    isolate.touch(Instant::now());
                }
                Err(self.fail(isolate, e))
            }
        }
    }

    fn fail(&self, isolate: &Arc<Isolate>, e: GuestError) -> InvokeFailure {
        if e.is_oom() {
            isolate.poison();
            tracing::debug!(id = isolate.id, fid = %isolate.fid, "isolate poisoned by oom");
        }
        e.into()
    }

    /// Release one invocation's claim on `isolate`. The last worker out
    /// either pools the isolate or destroys it (doomed or poisoned).
    pub fn complete(&self, isolate: &Arc<Isolate>) {
        let mut executing = self.executing.lock();
        let remaining = isolate.in_flight.fetch_sub(1, Ordering::AcqRel) - 1;
        if remaining > 0 {
            return;
        }
        if let Some(list) = executing.get_mut(isolate.fid()) {
            list.retain(|i| i.id != isolate.id);
            if list.is_empty() {
                executing.remove(isolate.fid());
            }
        }
        drop(executing);

        if isolate.is_doomed() || isolate.is_poisoned() {
            self.destroy(isolate.clone());
        } else if let OfferDisposition::Doomed(iso) = self.pool.offer(isolate.clone()) {
            self.destroy(iso);
        }
    }

    /// Destroy every pooled isolate idle past the TTL as of `now`.
    pub fn reap(&self, now: Instant) -> usize {
        let expired = self.pool.reap_expired(now);
        let count = expired.len();
        for iso in expired {
            self.destroy(iso);
        }
        count
    }

    /// Deregistration: idle isolates die now, executing ones when they finish.
    pub fn doom_fid(&self, fid: &str) {
        {
            let executing = self.executing.lock();
            if let Some(list) = executing.get(fid) {
                for iso in list {
                    iso.doom();
                }
            }
        }
        for iso in self.pool.remove_fid(fid) {
            self.destroy(iso);
        }
    }

    /// Destroy all pooled isolates immediately (shutdown path).
    pub fn drain(&self) -> usize {
        let drained = self.pool.drain();
        let count = drained.len();
        for iso in drained {
            self.destroy(iso);
        }
        count
    }

    /// Destroy an isolate the caller owns (not pooled, not executing),
    /// releasing everything it has charged.
    pub fn destroy_isolate(&self, isolate: Arc<Isolate>) {
        self.destroy(isolate);
    }

    /// Pre-create `n` warm isolates for a function, best effort under the
    /// memory cap.
    pub fn prewarm(&self, descriptor: &FunctionDescriptor, n: usize) {
        for _ in 0..n {
            match self.create_isolate(descriptor) {
                Ok(iso) => {
                    if let OfferDisposition::Doomed(iso) = self.pool.offer(iso) {
                        self.destroy(iso);
                        break;
                    }
                }
                Err(e) => {
                    tracing::warn!(fid = %descriptor.fid, error = %e, "prewarm stopped");
                    break;
                }
            }
        }
    }

    fn destroy(&self, isolate: Arc<Isolate>) {
        // Release eagerly so accounting is exact even if a stale Arc
        // lingers briefly; the allocator's Drop handles the remainder.
        isolate.allocator.release(isolate.allocator.used());
        self.metrics.record_isolate_destroyed();
        tracing::trace!(id = isolate.id, fid = %isolate.fid, "isolate destroyed");
    }

    pub fn executing_count(&self) -> usize {
        self.executing.lock().values().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::MIB;

    fn manager(cap: u64, share: bool) -> (IsolateManager, Arc<RuntimeMetrics>) {
        let metrics = Arc::new(RuntimeMetrics::default());
        let mgr = IsolateManager::new(
            ManagerConfig {
                max_contexts: 4,
                share_code_cache: share,
                base_heap_bytes: MIB,
                ttl: Duration::from_secs(10),
            },
            GlobalAccounting::new(cap),
            Arc::new(EngineSet::with_defaults(1.0)),
            metrics.clone(),
            Arc::new(HandleTable::new()),
        );
        (mgr, metrics)
    }

    fn invoke_via(mgr: &IsolateManager, desc: &FunctionDescriptor) -> Result<String, InvokeFailure> {
        invoke(mgr, &mgr.handles.clone(), desc)
    }

    fn nop_descriptor(fid: &str, mem: u64) -> FunctionDescriptor {
        FunctionDescriptor {
            fid: fid.into(),
            fep: "main".into(),
            code: br#"{"alloc_mb":0,"run_ms":0}"#.to_vec(),
            mem,
            language: "synthetic".into(),
        }
    }

    fn invoke(mgr: &IsolateManager, handles: &HandleTable, desc: &FunctionDescriptor) -> Result<String, InvokeFailure> {
        let (iso, _cold) = mgr.acquire(desc)?;
        let f = handles.pin(HandleValue::Function(Arc::new(desc.clone())));
        let a = handles.pin(HandleValue::Json("{}".into()));
        let result = mgr.run_in_isolate(&iso, f, a);
        mgr.complete(&iso);
        match result {
            Ok(h) => match handles.retrieve(h).unwrap() {
                HandleValue::Json(s) => Ok(s),
                _ => unreachable!(),
            },
            Err(e) => Err(e),
        }
    }

    #[test]
    fn fresh_isolate_has_base_heap_and_no_contexts() {
        let (mgr, _) = manager(64 * MIB, true);
        let desc = nop_descriptor("f", 4 * MIB);
        let iso = mgr.create_isolate(&desc).unwrap();
        assert_eq!(iso.allocator().used(), MIB);
        assert_eq!(iso.context_count(), 0);
        assert_eq!(iso.budget(), 16 * MIB, "budget is mem x max_contexts");
    }

    #[test]
    fn budget_without_sharing_is_descriptor_mem() {
        let (mgr, _) = manager(64 * MIB, false);
        let iso = mgr.create_isolate(&nop_descriptor("f", 4 * MIB)).unwrap();
        assert_eq!(iso.budget(), 4 * MIB);
    }

    #[test]
    fn creation_without_headroom_is_global_exhausted() {
        // Cap leaves less than the base heap free.
        let (mgr, _) = manager(MIB / 2, true);
        let err = mgr.create_isolate(&nop_descriptor("f", 4 * MIB)).unwrap_err();
        assert_eq!(err, Oom::GlobalCap);
    }

    #[test]
    fn acquire_prefers_pool_then_colocation() {
        let (mgr, _) = manager(256 * MIB, true);
        let desc = nop_descriptor("f", 4 * MIB);

        let (a, cold_a) = mgr.acquire(&desc).unwrap();
        assert!(cold_a);
        // Second concurrent acquire co-locates in the executing isolate.
        let (b, cold_b) = mgr.acquire(&desc).unwrap();
        assert!(!cold_b);
        assert_eq!(a.id(), b.id());
        assert_eq!(a.in_flight(), 2);
        mgr.complete(&a);
        mgr.complete(&b);
        // Now pooled; next acquire is a poll hit.
        assert_eq!(mgr.pool().pooled_for("f"), 1);
        let (c, cold_c) = mgr.acquire(&desc).unwrap();
        assert!(!cold_c);
        assert_eq!(c.id(), a.id());
        mgr.complete(&c);
    }

    #[test]
    fn colocation_spills_past_max_contexts() {
        let (mgr, _) = manager(256 * MIB, true);
        let desc = nop_descriptor("f", 4 * MIB);
        let mut held = Vec::new();
        for _ in 0..4 {
            held.push(mgr.acquire(&desc).unwrap());
        }
        let ids: std::collections::HashSet<u64> = held.iter().map(|(i, _)| i.id()).collect();
        assert_eq!(ids.len(), 1, "first four share one isolate");
        let (spill, cold) = mgr.acquire(&desc).unwrap();
        assert!(cold, "fifth concurrent invocation needs a new isolate");
        assert!(!ids.contains(&spill.id()));
        mgr.complete(&spill);
        for (iso, _) in held {
            mgr.complete(&iso);
        }
    }

    #[test]
    fn no_sharing_means_no_colocation() {
        let (mgr, _) = manager(256 * MIB, false);
        let desc = nop_descriptor("f", 4 * MIB);
        let (a, _) = mgr.acquire(&desc).unwrap();
        let (b, cold_b) = mgr.acquire(&desc).unwrap();
        assert!(cold_b);
        assert_ne!(a.id(), b.id());
        mgr.complete(&a);
        mgr.complete(&b);
    }

    #[test]
    fn mru_poll_order_matches_stack_oracle() {
        let (mgr, _) = manager(256 * MIB, true);
        let desc = nop_descriptor("f", 4 * MIB);
        let i1 = mgr.create_isolate(&desc).unwrap();
        let i2 = mgr.create_isolate(&desc).unwrap();
        let mut oracle = vec![i1.id(), i2.id()];

        mgr.pool().offer(i1);
        mgr.pool().offer(i2);
        let first = mgr.pool().poll("f").unwrap();
        assert_eq!(first.id(), oracle.pop().unwrap());
        let second = mgr.pool().poll("f").unwrap();
        assert_eq!(second.id(), oracle.pop().unwrap());
        assert!(mgr.pool().poll("f").is_none());
    }

    #[test]
    fn compile_once_per_isolate() {
        let (mgr, metrics) = manager(256 * MIB, true);
        let desc = nop_descriptor("f", 4 * MIB);
        for _ in 0..10 {
            invoke_via(&mgr, &desc).unwrap();
        }
        assert_eq!(metrics.compiles_total.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn oom_destroys_isolate_and_keeps_it_out_of_pool() {
        let (mgr, metrics) = manager(256 * MIB, true);
        // Budget = 2 MiB x 4 contexts = 8 MiB; allocating 9 MiB overflows it.
        let mut desc = nop_descriptor("f", 2 * MIB);
        desc.code = br#"{"alloc_mb":9,"run_ms":0}"#.to_vec();
        let err = invoke_via(&mgr, &desc).unwrap_err();
        assert!(matches!(err, InvokeFailure::Oom(_)));
        assert_eq!(mgr.pool().pooled_for("f"), 0);
        assert_eq!(metrics.live_isolates.load(Ordering::Relaxed), 0);
    }

    #[test]
    fn guest_error_keeps_isolate_reusable() {
        let (mgr, metrics) = manager(256 * MIB, true);
        let mut desc = nop_descriptor("f", 4 * MIB);
        desc.code = b"this is not json".to_vec();
        let err = invoke_via(&mgr, &desc).unwrap_err();
        assert!(matches!(err, InvokeFailure::Guest(GuestError::Compile(_))));
        // Isolate survived the compile failure and returned to the pool.
        assert_eq!(mgr.pool().pooled_for("f"), 1);
        assert_eq!(metrics.live_isolates.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn reap_destroys_only_expired() {
        let (mgr, metrics) = manager(256 * MIB, true);
        let desc = nop_descriptor("f", 4 * MIB);
        for _ in 0..5 {
            let iso = mgr.create_isolate(&desc).unwrap();
            mgr.pool().offer(iso);
        }
        let accounted_before = 5 * MIB;
        assert_eq!(metrics.live_isolates.load(Ordering::Relaxed), 5);

        // 9 seconds idle: survives a 10 second TTL.
        let reaped = mgr.reap(Instant::now() + Duration::from_secs(9));
        assert_eq!(reaped, 0);
        // 11 seconds idle: reaped, and the budgets drain from the ledger.
        let reaped = mgr.reap(Instant::now() + Duration::from_secs(11));
        assert_eq!(reaped, 5);
        assert_eq!(mgr.pool().pooled_count(), 0);
        assert_eq!(metrics.live_isolates.load(Ordering::Relaxed), 0);
        let _ = accounted_before;
    }

    #[test]
    fn doomed_isolate_is_destroyed_on_completion() {
        let (mgr, metrics) = manager(256 * MIB, true);
        let desc = nop_descriptor("f", 4 * MIB);
        let (iso, _) = mgr.acquire(&desc).unwrap();
        mgr.doom_fid("f");
        assert!(iso.is_doomed());
        mgr.complete(&iso);
        assert_eq!(mgr.pool().pooled_for("f"), 0);
        assert_eq!(metrics.live_isolates.load(Ordering::Relaxed), 0);
    }

    #[test]
    fn doom_fid_destroys_pooled_immediately() {
        let (mgr, metrics) = manager(256 * MIB, true);
        let desc = nop_descriptor("f", 4 * MIB);
        let iso = mgr.create_isolate(&desc).unwrap();
        mgr.pool().offer(iso);
        mgr.doom_fid("f");
        assert_eq!(mgr.pool().pooled_count(), 0);
        assert_eq!(metrics.live_isolates.load(Ordering::Relaxed), 0);
    }

    #[test]
    fn handles_are_single_use_through_invocation() {
        let (mgr, _) = manager(256 * MIB, true);
        let handles = Arc::new(HandleTable::new());
        let mgr = IsolateManager::new(
            mgr.cfg.clone(),
            GlobalAccounting::new(256 * MIB),
            Arc::new(EngineSet::with_defaults(1.0)),
            Arc::new(RuntimeMetrics::default()),
            handles.clone(),
        );
        let desc = nop_descriptor("f", 4 * MIB);
        let (iso, _) = mgr.acquire(&desc).unwrap();
        let f = handles.pin(HandleValue::Function(Arc::new(desc.clone())));
        let a = handles.pin(HandleValue::Json("{}".into()));
        let out = mgr.run_in_isolate(&iso, f, a).unwrap();
        mgr.complete(&iso);
        // Input handles were consumed by the invocation.
        assert!(matches!(handles.retrieve(f), Err(HandleError::Spent)));
        assert!(matches!(handles.retrieve(a), Err(HandleError::Spent)));
        assert!(handles.retrieve(out).is_ok());
        assert!(matches!(handles.retrieve(out), Err(HandleError::Spent)));
    }
}
