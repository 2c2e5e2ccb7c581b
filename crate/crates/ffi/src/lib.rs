//! C ABI for the isovisor runtime.
//!
//! The API mirrors the function interface of the runtime: create a runtime,
//! register/invoke/deregister functions, read metrics, destroy the runtime.
//! Handles are opaque pointers owned by the caller and must be released with
//! the matching `_free` function exactly once. All strings crossing the
//! boundary are NUL-terminated UTF-8; strings returned by the library must
//! be released with `isovisor_string_free`.
//!
//! Every function tolerates NULL pointers by failing with
//! `ISOVISOR_STATUS_INVALID_ARGUMENT` (or returning `false`) instead of
//! crashing. A runtime handle may be shared across threads; all operations
//! are thread-safe.

use std::ffi::{c_char, CStr, CString};
use std::time::Duration;

use isovisor::runtime::{Outcome, Runtime, RuntimeConfig};

/// Opaque runtime handle.
pub struct IsovisorRuntime {
    inner: std::sync::Arc<Runtime>,
}

/// Status codes returned by fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsovisorStatus {
    Ok = 0,
    /// A required pointer was NULL, or a string was not valid UTF-8.
    InvalidArgument = 1,
    /// The function id is not registered.
    NotRegistered = 2,
    /// The invocation exceeded its memory budget or the runtime cap.
    OutOfMemory = 3,
    /// The guest failed (compile error, missing entry point, runtime error).
    /// The output string carries the error message.
    GuestError = 4,
    /// Internal failure.
    Internal = 5,
}

/// Runtime construction parameters. Zero-valued fields fall back to the
/// built-in defaults (2 GiB cap, 10 s TTL, 4 contexts).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IsovisorConfig {
    pub memory_cap_bytes: u64,
    pub isolate_ttl_ms: u64,
    pub max_contexts: u32,
    pub share_code_cache: bool,
    /// Run the periodic pool reaper thread.
    pub start_reaper: bool,
}

/// The default configuration.
#[no_mangle]
pub extern "C" fn isovisor_config_default() -> IsovisorConfig {
    let d = RuntimeConfig::default();
    IsovisorConfig {
        memory_cap_bytes: d.memory_cap,
        isolate_ttl_ms: d.ttl.as_millis() as u64,
        max_contexts: d.max_contexts as u32,
        share_code_cache: d.share_code_cache,
        start_reaper: d.start_reaper,
    }
}

/// Create a runtime. Returns NULL if the configuration is invalid.
/// Release with `isovisor_runtime_free`.
#[no_mangle]
pub extern "C" fn isovisor_runtime_new(config: IsovisorConfig) -> *mut IsovisorRuntime {
    let defaults = RuntimeConfig::default();
    let cfg = RuntimeConfig {
        memory_cap: if config.memory_cap_bytes == 0 {
            defaults.memory_cap
        } else {
            config.memory_cap_bytes
        },
        ttl: if config.isolate_ttl_ms == 0 {
            defaults.ttl
        } else {
            Duration::from_millis(config.isolate_ttl_ms)
        },
        max_contexts: if config.max_contexts == 0 {
            defaults.max_contexts
        } else {
            config.max_contexts as usize
        },
        share_code_cache: config.share_code_cache,
        start_reaper: config.start_reaper,
        ..defaults
    };
    if cfg.validate().is_err() {
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(IsovisorRuntime {
        inner: Runtime::new(cfg),
    }))
}

/// Destroy a runtime and everything it hosts. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn isovisor_runtime_free(runtime: *mut IsovisorRuntime) {
    if !runtime.is_null() {
        drop(Box::from_raw(runtime));
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Register a function. `code` is the raw artifact (`code_len` bytes), `mem`
/// is the memory budget in bytes. Returns `true` iff the registration took
/// effect (mirroring the HTTP interface's boolean contract).
#[no_mangle]
pub unsafe extern "C" fn isovisor_register(
    runtime: *const IsovisorRuntime,
    code: *const u8,
    code_len: usize,
    fid: *const c_char,
    fep: *const c_char,
    mem: u64,
    language: *const c_char,
) -> bool {
    let Some(runtime) = runtime.as_ref() else {
        return false;
    };
    if code.is_null() && code_len > 0 {
        return false;
    }
    let (Some(fid), Some(fep), Some(language)) = (cstr(fid), cstr(fep), cstr(language)) else {
        return false;
    };
    let code = if code_len == 0 {
        Vec::new()
    } else {
        std::slice::from_raw_parts(code, code_len).to_vec()
    };
    runtime.inner.register(code, fid, fep, mem, language)
}

/// Deregister a function. Returns `true` iff it was registered.
#[no_mangle]
pub unsafe extern "C" fn isovisor_deregister(
    runtime: *const IsovisorRuntime,
    fid: *const c_char,
) -> bool {
    let Some(runtime) = runtime.as_ref() else {
        return false;
    };
    let Some(fid) = cstr(fid) else {
        return false;
    };
    runtime.inner.deregister(fid)
}

fn string_out(out: *mut *mut c_char, s: String) {
    if out.is_null() {
        return;
    }
    let c = CString::new(s).unwrap_or_default();
    unsafe { *out = c.into_raw() };
}

/// Invoke a registered function with a JSON argument string. On
/// `ISOVISOR_STATUS_OK`, `*result_json` holds the function's JSON result; on
/// `ISOVISOR_STATUS_GUEST_ERROR` it holds the error message. Either way the
/// returned string must be released with `isovisor_string_free`.
#[no_mangle]
pub unsafe extern "C" fn isovisor_invoke(
    runtime: *const IsovisorRuntime,
    fid: *const c_char,
    args_json: *const c_char,
    result_json: *mut *mut c_char,
) -> IsovisorStatus {
    if !result_json.is_null() {
        *result_json = std::ptr::null_mut();
    }
    let Some(runtime) = runtime.as_ref() else {
        return IsovisorStatus::InvalidArgument;
    };
    let (Some(fid), Some(args)) = (cstr(fid), cstr(args_json)) else {
        return IsovisorStatus::InvalidArgument;
    };
    match runtime.inner.invoke(fid, args).outcome {
        Outcome::Ok(result) => {
            string_out(result_json, result);
            IsovisorStatus::Ok
        }
        Outcome::NotRegistered => IsovisorStatus::NotRegistered,
        Outcome::Oom => IsovisorStatus::OutOfMemory,
        Outcome::GuestError(message) => {
            string_out(result_json, message);
            IsovisorStatus::GuestError
        }
    }
}

/// Point-in-time runtime metrics as a JSON object string. Release with
/// `isovisor_string_free`.
#[no_mangle]
pub unsafe extern "C" fn isovisor_metrics_json(
    runtime: *const IsovisorRuntime,
    metrics_json: *mut *mut c_char,
) -> IsovisorStatus {
    if !metrics_json.is_null() {
        *metrics_json = std::ptr::null_mut();
    }
    let Some(runtime) = runtime.as_ref() else {
        return IsovisorStatus::InvalidArgument;
    };
    match serde_json::to_string(&runtime.inner.metrics_snapshot(0)) {
        Ok(s) => {
            string_out(metrics_json, s);
            IsovisorStatus::Ok
        }
        Err(_) => IsovisorStatus::Internal,
    }
}

/// Bytes currently charged against the runtime memory cap.
#[no_mangle]
pub unsafe extern "C" fn isovisor_accounted_memory(runtime: *const IsovisorRuntime) -> u64 {
    runtime.as_ref().map_or(0, |r| r.inner.accounted_memory())
}

/// Destroy pooled isolates idle past the TTL right now; returns how many.
#[no_mangle]
pub unsafe extern "C" fn isovisor_reap_now(runtime: *const IsovisorRuntime) -> u64 {
    runtime
        .as_ref()
        .map_or(0, |r| r.inner.reap(std::time::Instant::now()) as u64)
}

/// Release a string returned by this library. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn isovisor_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
