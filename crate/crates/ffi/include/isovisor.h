#ifndef ISOVISOR_H
#define ISOVISOR_H

/* Generated by cbindgen from isovisor-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by fallible calls.
typedef enum IsovisorStatus {
  ISOVISOR_STATUS_OK = 0,
  // A required pointer was NULL, or a string was not valid UTF-8.
  ISOVISOR_STATUS_INVALID_ARGUMENT = 1,
  // The function id is not registered.
  ISOVISOR_STATUS_NOT_REGISTERED = 2,
  // The invocation exceeded its memory budget or the runtime cap.
  ISOVISOR_STATUS_OUT_OF_MEMORY = 3,
  // The guest failed (compile error, missing entry point, runtime error).
  // The output string carries the error message.
  ISOVISOR_STATUS_GUEST_ERROR = 4,
  // Internal failure.
  ISOVISOR_STATUS_INTERNAL = 5,
} IsovisorStatus;

// Opaque runtime handle.
typedef struct IsovisorRuntime IsovisorRuntime;

// Runtime construction parameters. Zero-valued fields fall back to the
// built-in defaults (2 GiB cap, 10 s TTL, 4 contexts).
typedef struct IsovisorConfig {
  uint64_t memory_cap_bytes;
  uint64_t isolate_ttl_ms;
  uint32_t max_contexts;
  bool share_code_cache;
  // Run the periodic pool reaper thread.
  bool start_reaper;
} IsovisorConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The default configuration.
struct IsovisorConfig isovisor_config_default(void);

// Create a runtime. Returns NULL if the configuration is invalid.
// Release with `isovisor_runtime_free`.
struct IsovisorRuntime *isovisor_runtime_new(struct IsovisorConfig config);

// Destroy a runtime and everything it hosts. NULL is a no-op.
void isovisor_runtime_free(struct IsovisorRuntime *runtime);

// Register a function. `code` is the raw artifact (`code_len` bytes), `mem`
// is the memory budget in bytes. Returns `true` iff the registration took
// effect (mirroring the HTTP interface's boolean contract).
bool isovisor_register(const struct IsovisorRuntime *runtime,
                       const uint8_t *code,
                       uintptr_t code_len,
                       const char *fid,
                       const char *fep,
                       uint64_t mem,
                       const char *language);

// Deregister a function. Returns `true` iff it was registered.
bool isovisor_deregister(const struct IsovisorRuntime *runtime, const char *fid);

// Invoke a registered function with a JSON argument string. On
// `ISOVISOR_STATUS_OK`, `*result_json` holds the function's JSON result; on
// `ISOVISOR_STATUS_GUEST_ERROR` it holds the error message. Either way the
// returned string must be released with `isovisor_string_free`.
enum IsovisorStatus isovisor_invoke(const struct IsovisorRuntime *runtime,
                                    const char *fid,
                                    const char *args_json,
                                    char **result_json);

// Point-in-time runtime metrics as a JSON object string. Release with
// `isovisor_string_free`.
enum IsovisorStatus isovisor_metrics_json(const struct IsovisorRuntime *runtime,
                                          char **metrics_json);

// Bytes currently charged against the runtime memory cap.
uint64_t isovisor_accounted_memory(const struct IsovisorRuntime *runtime);

// Destroy pooled isolates idle past the TTL right now; returns how many.
uint64_t isovisor_reap_now(const struct IsovisorRuntime *runtime);

// Release a string returned by this library. NULL is a no-op.
void isovisor_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISOVISOR_H */
