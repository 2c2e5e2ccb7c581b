//! The function cache: registered function artifacts and their metadata.
//!
//! Registration is all-or-nothing and duplicate ids are refused rather than
//! overwritten; a function stays immutable until it is deregistered. All
//! operations are safe to call from any number of gateway workers.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;

/// Largest accepted code artifact. Anything bigger is refused at registration.
pub const MAX_CODE_BYTES: usize = 16 * 1024 * 1024;

/// A registered function: its code artifact and invocation metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDescriptor {
    /// Function identifier, unique among live registrations.
    pub fid: String,
    /// Entry-point symbol within the code artifact.
    pub fep: String,
    /// The code artifact: script source, synthetic spec document, or
    /// prebuilt-builtin name.
    pub code: Vec<u8>,
    /// Per-invocation memory budget in bytes.
    pub mem: u64,
    /// Guest language tag; must name an installed engine.
    pub language: String,
}

/// Thread-safe map from function id to descriptor.
pub struct FunctionRegistry {
    functions: RwLock<HashMap<String, Arc<FunctionDescriptor>>>,
    installed_languages: BTreeSet<String>,
    registrations: AtomicU64,
}

impl FunctionRegistry {
    pub fn new(installed_languages: BTreeSet<String>) -> Self {
        Self {
            functions: RwLock::new(HashMap::new()),
            installed_languages,
            registrations: AtomicU64::new(0),
        }
    }

    pub fn installed_languages(&self) -> &BTreeSet<String> {
        &self.installed_languages
    }

    /// Install a descriptor. Returns `false` on any validation failure or a
    /// duplicate fid; a failed register leaves the cache unchanged.
    pub fn register(&self, descriptor: FunctionDescriptor) -> bool {
        if descriptor.fid.is_empty()
            || descriptor.fep.is_empty()
            || descriptor.code.is_empty()
            || descriptor.code.len() > MAX_CODE_BYTES
            || descriptor.mem == 0
            || !self.installed_languages.contains(&descriptor.language)
        {
            return false;
        }
        let mut map = self.functions.write();
        if map.contains_key(&descriptor.fid) {
            return false;
        }
        map.insert(descriptor.fid.clone(), Arc::new(descriptor));
        self.registrations.fetch_add(1, Ordering::Relaxed);
        true
    }

    /// Remove a descriptor. Returns `true` iff one was present.
    pub fn deregister(&self, fid: &str) -> bool {
        self.functions.write().remove(fid).is_some()
    }

    pub fn lookup(&self, fid: &str) -> Option<Arc<FunctionDescriptor>> {
        self.functions.read().get(fid).cloned()
    }

    pub fn list(&self) -> Vec<Arc<FunctionDescriptor>> {
        let mut all: Vec<_> = self.functions.read().values().cloned().collect();
        all.sort_by(|a, b| a.fid.cmp(&b.fid));
        all
    }

    pub fn len(&self) -> usize {
        self.functions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.read().is_empty()
    }

    /// Monotone count of successful registrations, for observability.
    pub fn registrations_total(&self) -> u64 {
        self.registrations.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_registry() -> FunctionRegistry {
        FunctionRegistry::new(["synthetic".to_string(), "rhai".to_string()].into())
    }

    fn descriptor(fid: &str) -> FunctionDescriptor {
        FunctionDescriptor {
            fid: fid.to_string(),
            fep: "main".to_string(),
            code: br#"{"alloc_mb":10,"run_ms":50}"#.to_vec(),
            mem: 256 * crate::accounting::MIB,
            language: "synthetic".to_string(),
        }
    }

    #[test]
    fn register_lookup_deregister() {
        let reg = test_registry();
        assert!(reg.register(descriptor("f1")));
        let found = reg.lookup("f1").expect("registered descriptor");
        assert_eq!(found.fep, "main");
        assert_eq!(found.mem, 256 * crate::accounting::MIB);
        assert!(reg.deregister("f1"));
        assert!(reg.lookup("f1").is_none());
    }

    #[test]
    fn duplicate_fid_refused_and_first_unchanged() {
        let reg = test_registry();
        assert!(reg.register(descriptor("f1")));
        let mut second = descriptor("f1");
        second.fep = "other".to_string();
        assert!(!reg.register(second));
        assert_eq!(reg.lookup("f1").unwrap().fep, "main");
        assert_eq!(reg.registrations_total(), 1);
    }

    #[test]
    fn validation_failures() {
        let reg = test_registry();
        let mut d = descriptor("f1");
        d.mem = 0;
        assert!(!reg.register(d));

        let mut d = descriptor("f2");
        d.code = Vec::new();
        assert!(!reg.register(d));

        let mut d = descriptor("f3");
        d.language = "cobol".to_string();
        assert!(!reg.register(d));

        let mut d = descriptor("");
        d.fid = String::new();
        assert!(!reg.register(d));

        let mut d = descriptor("f4");
        d.fep = String::new();
        assert!(!reg.register(d));

        let mut d = descriptor("f5");
        d.code = vec![b'x'; MAX_CODE_BYTES + 1];
        assert!(!reg.register(d));

        assert!(reg.is_empty());
    }

    #[test]
    fn deregister_absent_returns_false() {
        let reg = test_registry();
        assert!(!reg.deregister("ghost"));
    }

    #[test]
    fn fid_reusable_after_deregister() {
        // Oracle: replay the same op sequence against a plain map.
        let reg = test_registry();
        let mut oracle: HashMap<String, ()> = HashMap::new();

        assert_eq!(reg.register(descriptor("f1")), oracle.insert("f1".into(), ()).is_none());
        assert_eq!(reg.deregister("f1"), oracle.remove("f1").is_some());
        assert_eq!(reg.register(descriptor("f1")), oracle.insert("f1".into(), ()).is_none());
        assert!(reg.lookup("f1").is_some());
    }

    #[test]
    fn thousand_registrations_all_hit() {
        // Oracle: a reference map sees exactly the same keys.
        let reg = test_registry();
        let mut oracle = HashMap::new();
        for i in 0..1000 {
            let fid = format!("fn-{i}");
            assert!(reg.register(descriptor(&fid)));
            oracle.insert(fid, ());
        }
        for fid in oracle.keys() {
            assert!(reg.lookup(fid).is_some(), "missing {fid}");
        }
        assert_eq!(reg.len(), 1000);
    }
}
