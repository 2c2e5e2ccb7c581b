//! The warm-isolate pool.
//!
//! Idle isolates are kept per function in MRU (stack) order: a poll returns
//! the most recently used isolate, so hot isolates stay hot and cold ones
//! age until the reaper destroys them. Offering a doomed isolate hands it
//! back for destruction instead of pooling it.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;

use super::Isolate;

pub enum OfferDisposition {
    Pooled,
    /// The isolate was doomed; the caller must destroy it.
    Doomed(Arc<Isolate>),
}

pub struct IsolatePool {
    idle: Mutex<HashMap<String, Vec<Arc<Isolate>>>>,
    ttl: Duration,
}

impl IsolatePool {
    pub fn new(ttl: Duration) -> Self {
        Self {
            idle: Mutex::new(HashMap::new()),
            ttl,
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Remove and return the most-recently-used warm isolate for `fid`.
    pub fn poll(&self, fid: &str) -> Option<Arc<Isolate>> {
        let mut idle = self.idle.lock();
        let list = idle.get_mut(fid)?;
        let iso = list.pop();
        if list.is_empty() {
            idle.remove(fid);
        }
        iso
    }

    /// Return an isolate to the pool, stamping its last-used time.
    pub fn offer(&self, isolate: Arc<Isolate>) -> OfferDisposition {
        isolate.touch(Instant::now());
        if isolate.is_doomed() {
            return OfferDisposition::Doomed(isolate);
        }
        let mut idle = self.idle.lock();
        idle.entry(isolate.fid().to_string())
            .or_default()
            .push(isolate);
        OfferDisposition::Pooled
    }

    /// Remove every pooled isolate idle longer than the TTL as of `now`.
    pub fn reap_expired(&self, now: Instant) -> Vec<Arc<Isolate>> {
        let mut idle = self.idle.lock();
        let mut expired = Vec::new();
        idle.retain(|_, list| {
            list.retain(|iso| {
                if now.saturating_duration_since(iso.last_used()) > self.ttl {
                    expired.push(iso.clone());
                    false
                } else {
                    true
                }
            });
            !list.is_empty()
        });
        expired
    }

    /// Remove every pooled isolate for `fid` (deregistration path).
    pub fn remove_fid(&self, fid: &str) -> Vec<Arc<Isolate>> {
        self.idle.lock().remove(fid).unwrap_or_default()
    }

    /// Remove everything (shutdown path).
    pub fn drain(&self) -> Vec<Arc<Isolate>> {
        self.idle.lock().drain().flat_map(|(_, v)| v).collect()
    }

    pub fn pooled_count(&self) -> usize {
        self.idle.lock().values().map(Vec::len).sum()
    }

    pub fn pooled_for(&self, fid: &str) -> usize {
        self.idle.lock().get(fid).map_or(0, Vec::len)
    }
}
