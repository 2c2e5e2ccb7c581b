//! Exercises the C ABI the way a foreign caller would: raw pointers,
//! NUL-terminated strings, explicit frees.

use std::ffi::{CStr, CString};

use isovisor_ffi::{
    isovisor_accounted_memory, isovisor_config_default, isovisor_deregister, isovisor_invoke,
    isovisor_metrics_json, isovisor_reap_now, isovisor_register, isovisor_runtime_free,
    isovisor_runtime_new, isovisor_string_free, IsovisorStatus,
};

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take_string(ptr: *mut std::ffi::c_char) -> String {
    assert!(!ptr.is_null());
    let s = CStr::from_ptr(ptr).to_str().unwrap().to_string();
    isovisor_string_free(ptr);
    s
}

#[test]
fn full_lifecycle_through_the_c_abi() {
    unsafe {
        let mut cfg = isovisor_config_default();
        cfg.start_reaper = false;
        let rt = isovisor_runtime_new(cfg);
        assert!(!rt.is_null());

        let code = br#"{"alloc_mb":0,"run_ms":0,"echo":true}"#;
        let fid = c("f1");
        let fep = c("main");
        let lang = c("synthetic");
        assert!(isovisor_register(
            rt,
            code.as_ptr(),
            code.len(),
            fid.as_ptr(),
            fep.as_ptr(),
            16 * 1024 * 1024,
            lang.as_ptr(),
        ));
        // Duplicate registration is refused.
        assert!(!isovisor_register(
            rt,
            code.as_ptr(),
            code.len(),
            fid.as_ptr(),
            fep.as_ptr(),
            16 * 1024 * 1024,
            lang.as_ptr(),
        ));

        let args = c(r#"{"x":[1,2,3]}"#);
        let mut out: *mut std::ffi::c_char = std::ptr::null_mut();
        let status = isovisor_invoke(rt, fid.as_ptr(), args.as_ptr(), &mut out);
        assert_eq!(status, IsovisorStatus::Ok);
        assert_eq!(take_string(out), r#"{"x":[1,2,3]}"#);

        assert!(isovisor_accounted_memory(rt) > 0);

        let mut metrics: *mut std::ffi::c_char = std::ptr::null_mut();
        assert_eq!(isovisor_metrics_json(rt, &mut metrics), IsovisorStatus::Ok);
        let metrics: serde_json::Value = serde_json::from_str(&take_string(metrics)).unwrap();
        assert_eq!(metrics["cold_invocations_total"], 1);
        assert_eq!(metrics["pooled_isolates"], 1);

        assert!(isovisor_deregister(rt, fid.as_ptr()));
        assert!(!isovisor_deregister(rt, fid.as_ptr()));
        let status = isovisor_invoke(rt, fid.as_ptr(), args.as_ptr(), &mut out);
        assert_eq!(status, IsovisorStatus::NotRegistered);
        assert!(out.is_null());

        isovisor_runtime_free(rt);
    }
}

#[test]
fn status_codes_for_failure_modes() {
    unsafe {
        let mut cfg = isovisor_config_default();
        cfg.start_reaper = false;
        let rt = isovisor_runtime_new(cfg);

        // Over-budget allocation: mem 4 MiB x 4 contexts = 16 MiB budget.
        let code = br#"{"alloc_mb":64,"run_ms":0}"#;
        let fid = c("oom");
        let fep = c("main");
        let lang = c("synthetic");
        assert!(isovisor_register(
            rt,
            code.as_ptr(),
            code.len(),
            fid.as_ptr(),
            fep.as_ptr(),
            4 * 1024 * 1024,
            lang.as_ptr(),
        ));
        let args = c("{}");
        let mut out: *mut std::ffi::c_char = std::ptr::null_mut();
        assert_eq!(
            isovisor_invoke(rt, fid.as_ptr(), args.as_ptr(), &mut out),
            IsovisorStatus::OutOfMemory
        );

        // Guest error carries a message.
        let bad = b"not a synthetic spec";
        let bad_fid = c("bad");
        assert!(isovisor_register(
            rt,
            bad.as_ptr(),
            bad.len(),
            bad_fid.as_ptr(),
            fep.as_ptr(),
            4 * 1024 * 1024,
            lang.as_ptr(),
        ));
        let status = isovisor_invoke(rt, bad_fid.as_ptr(), args.as_ptr(), &mut out);
        assert_eq!(status, IsovisorStatus::GuestError);
        let message = take_string(out);
        assert!(message.contains("compile"), "{message}");

        // NULL handling.
        assert_eq!(
            isovisor_invoke(std::ptr::null(), fid.as_ptr(), args.as_ptr(), &mut out),
            IsovisorStatus::InvalidArgument
        );
        assert_eq!(
            isovisor_invoke(rt, std::ptr::null(), args.as_ptr(), &mut out),
            IsovisorStatus::InvalidArgument
        );
        assert!(!isovisor_register(
            rt,
            std::ptr::null(),
            4,
            fid.as_ptr(),
            fep.as_ptr(),
            1024,
            lang.as_ptr(),
        ));
        isovisor_string_free(std::ptr::null_mut());
        isovisor_runtime_free(std::ptr::null_mut());

        isovisor_runtime_free(rt);
    }
}

#[test]
fn manual_reap_through_the_abi() {
    unsafe {
        let mut cfg = isovisor_config_default();
        cfg.start_reaper = false;
        cfg.isolate_ttl_ms = 1; // everything idle is immediately stale
        let rt = isovisor_runtime_new(cfg);

        let code = br#"{"alloc_mb":0,"run_ms":0}"#;
        let fid = c("f");
        let fep = c("main");
        let lang = c("synthetic");
        assert!(isovisor_register(
            rt,
            code.as_ptr(),
            code.len(),
            fid.as_ptr(),
            fep.as_ptr(),
            4 * 1024 * 1024,
            lang.as_ptr(),
        ));
        let args = c("{}");
        let mut out: *mut std::ffi::c_char = std::ptr::null_mut();
        assert_eq!(
            isovisor_invoke(rt, fid.as_ptr(), args.as_ptr(), &mut out),
            IsovisorStatus::Ok
        );
        isovisor_string_free(out);

        std::thread::sleep(std::time::Duration::from_millis(10));
        assert_eq!(isovisor_reap_now(rt), 1);
        assert_eq!(isovisor_accounted_memory(rt), 0);
        isovisor_runtime_free(rt);
    }
}
