//! Object handles for passing values across the isolate boundary.
//!
//! A handle pins a value so it stays alive while an invocation moves between
//! isolates; retrieving the value releases the pin. Handles are single-use:
//! a second retrieve of the same handle is a detectable error rather than a
//! stale read.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;

use crate::registry::FunctionDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HandleError {
    /// The handle was already retrieved once; its pin is gone.
    #[error("handle already retrieved")]
    Spent,
    /// Not a handle this table ever issued.
    #[error("unknown handle")]
    Unknown,
}

/// Values that cross the isolate boundary on the invocation path.
#[derive(Debug, Clone)]
pub enum HandleValue {
    Function(Arc<FunctionDescriptor>),
    Json(String),
}

/// Single-use token referencing a pinned value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjectHandle(u64);

impl ObjectHandle {
    pub fn raw(&self) -> u64 {
        self.0
    }
}

/// Table of pinned values. Ids are never reused, so a missing id below the
/// issue counter means the handle was spent.
#[derive(Debug, Default)]
pub struct HandleTable {
    pinned: Mutex<HashMap<u64, HandleValue>>,
    next_id: AtomicU64,
}

impl HandleTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pin(&self, value: HandleValue) -> ObjectHandle {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.pinned.lock().insert(id, value);
        ObjectHandle(id)
    }

    /// Take the value out, releasing the pin. Succeeds exactly once.
    pub fn retrieve(&self, handle: ObjectHandle) -> Result<HandleValue, HandleError> {
        match self.pinned.lock().remove(&handle.0) {
            Some(v) => Ok(v),
            None if handle.0 < self.next_id.load(Ordering::Relaxed) => Err(HandleError::Spent),
            None => Err(HandleError::Unknown),
        }
    }

    pub fn pinned_count(&self) -> usize {
        self.pinned.lock().len()
    }
}
