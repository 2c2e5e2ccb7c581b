//! Memory accounting for isolates and the runtime as a whole.
//!
//! Two levels of accounting cooperate:
//!
//! * [`GlobalAccounting`] tracks every byte charged anywhere in one runtime
//!   instance against the runtime-wide cap (default 2 GiB).
//! * [`AccountingAllocator`] tracks one isolate's bytes against its budget
//!   and forwards every successful charge to the global ledger.
//!
//! Charges are accounting-only: the allocator does not hand out memory, it
//! decides whether a guest allocation is admissible. Releasing never fails
//! and the running total never goes negative. Dropping an allocator releases
//! whatever it still holds, so destroying an isolate automatically returns
//! its memory to the runtime ledger.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

/// Why a charge was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Oom {
    /// The isolate's own budget would be exceeded.
    #[error("isolate budget exceeded")]
    IsolateBudget,
    /// The runtime-wide memory cap would be exceeded.
    #[error("runtime memory cap exceeded")]
    GlobalCap,
}

/// Runtime-wide memory ledger with a hard cap.
#[derive(Debug)]
pub struct GlobalAccounting {
    cap: u64,
    used: AtomicU64,
}

impl GlobalAccounting {
    pub fn new(cap: u64) -> Arc<Self> {
        Arc::new(Self {
            cap,
            used: AtomicU64::new(0),
        })
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Acquire)
    }

    /// Charge `bytes` against the cap. Never over-commits.
    pub fn try_charge(&self, bytes: u64) -> Result<(), Oom> {
        let mut cur = self.used.load(Ordering::Relaxed);
        loop {
            let next = cur.checked_add(bytes).ok_or(Oom::GlobalCap)?;
            if next > self.cap {
                return Err(Oom::GlobalCap);
            }
            match self
                .used
                .compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Relaxed)
            {
                Ok(_) => return Ok(()),
                Err(actual) => cur = actual,
            }
        }
    }

    pub fn release(&self, bytes: u64) {
        let mut cur = self.used.load(Ordering::Relaxed);
        loop {
            let next = cur.saturating_sub(bytes);
            match self
                .used
                .compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Relaxed)
            {
                Ok(_) => return,
                Err(actual) => cur = actual,
            }
        }
    }
}

/// Per-isolate accounting over a fixed budget, backed by the global ledger.
///
/// Every positive delta must fit in both the isolate budget and the global
/// cap or the whole charge is refused; a refused charge leaves both totals
/// untouched. Negative deltas (frees) always succeed and are clipped so the
/// total never underflows.
#[derive(Debug)]
pub struct AccountingAllocator {
    budget: u64,
    used: AtomicU64,
    global: Arc<GlobalAccounting>,
}

impl AccountingAllocator {
    pub fn new(budget: u64, global: Arc<GlobalAccounting>) -> Self {
        Self {
            budget,
            used: AtomicU64::new(0),
            global,
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Acquire)
    }

    /// Apply a signed accounting delta.
    pub fn account(&self, delta: i64) -> Result<(), Oom> {
        if delta >= 0 {
            self.charge(delta as u64)
        } else {
            self.release(delta.unsigned_abs());
            Ok(())
        }
    }

    pub fn charge(&self, bytes: u64) -> Result<(), Oom> {
        if bytes == 0 {
            return Ok(());
        }
        let mut cur = self.used.load(Ordering::Relaxed);
        loop {
            let next = cur.checked_add(bytes).ok_or(Oom::IsolateBudget)?;
            if next > self.budget {
                return Err(Oom::IsolateBudget);
            }
            match self
                .used
                .compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Relaxed)
            {
                Ok(_) => break,
                Err(actual) => cur = actual,
            }
        }
        if let Err(e) = self.global.try_charge(bytes) {
            // Roll back the local charge so neither ledger moved.
            self.release_local(bytes);
            return Err(e);
        }
        Ok(())
    }

    pub fn release(&self, bytes: u64) {
        let released = self.release_local(bytes);
        self.global.release(released);
    }

    /// Returns the amount actually released (clipped at zero).
    fn release_local(&self, bytes: u64) -> u64 {
        let mut cur = self.used.load(Ordering::Relaxed);
        loop {
            let releasable = bytes.min(cur);
            let next = cur - releasable;
            match self
                .used
                .compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Relaxed)
            {
                Ok(_) => return releasable,
                Err(actual) => cur = actual,
            }
        }
    }
}

impl Drop for AccountingAllocator {
    fn drop(&mut self) {
        // Return whatever is still charged to the runtime ledger.
        let remaining = self.used.load(Ordering::Acquire);
        if remaining > 0 {
            self.global.release(remaining);
        }
    }
}

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;
pub const GIB: u64 = 1024 * 1024 * 1024;

/// Allocation quantum: charges are rounded up to whole 4 KiB pages.
pub const PAGE: u64 = 4 * KIB;

/// Round a byte count up to the accounting quantum.
pub fn round_to_pages(bytes: u64) -> u64 {
    bytes.div_ceil(PAGE) * PAGE
}
