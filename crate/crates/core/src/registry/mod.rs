//! The module library: accepted records, prompt rendering and persistence.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_signature_block, ModuleSignature, SignatureLookup};
use crate::executor::{builtin_headers, builtin_signatures, ErrorKind, ModuleKind, ModuleResolver, StepFault, Value};
use crate::sandbox::{invoke_candidate, load_candidate, CandidateHandle, Limits};
use crate::tools::SharedBackend;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("NAME_COLLISION: {0}")]
    NameCollision(String),
    #[error("GATE_VIOLATION: {0}")]
    GateViolation(String),
    #[error("NOT_FOUND: {0}")]
    NotFound(String),
    #[error("IO_ERROR: {0}")]
    Io(String),
    #[error("SCHEMA_ERROR: {0}")]
    Schema(String),
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::NameCollision(_) => "NAME_COLLISION",
            RegistryError::GateViolation(_) => "GATE_VIOLATION",
            RegistryError::NotFound(_) => "NOT_FOUND",
            RegistryError::Io(_) => "IO_ERROR",
            RegistryError::Schema(_) => "SCHEMA_ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleRecord {
    pub signature: ModuleSignature,
    pub source: String,
    pub kind: ModuleKind,
    pub origin_task: String,
    pub pass_rate: f64,
    pub eta_at_acceptance: f64,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub version: u32,
    pub test_case_ids: Vec<String>,
}

impl ModuleRecord {
    pub fn builtin(signature: ModuleSignature, header: &str) -> Self {
        Self {
            signature,
            source: header.to_string(),
            kind: ModuleKind::Builtin,
            origin_task: "builtin".into(),
            pass_rate: 1.0,
            eta_at_acceptance: 1.0,
            created_at: 0,
            version: 1,
            test_case_ids: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.signature.name
    }
}

/// On-disk metadata: a record minus its source, which lives beside it.
#[derive(Serialize, Deserialize)]
struct RecordMeta {
    signature: ModuleSignature,
    kind: ModuleKind,
    origin_task: String,
    pass_rate: f64,
    eta_at_acceptance: f64,
    created_at: u64,
    version: u32,
    test_case_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    modules: Vec<String>,
}

const FORMAT: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct Library {
    records: BTreeMap<String, ModuleRecord>,
    manifest: Vec<String>,
    handles: HashMap<String, CandidateHandle>,
    limits: Limits,
}

impl PartialEq for Library {
    fn eq(&self, other: &Self) -> bool {
        self.manifest == other.manifest && self.records == other.records
    }
}

impl Library {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Library holding the pre-defined catalogue only.
    pub fn with_builtins() -> Self {
        let mut lib = Self::empty();
        for (sig, header) in builtin_signatures().iter().zip(builtin_headers()) {
            lib.register(ModuleRecord::builtin(sig.clone(), header)).expect("builtin catalogue is consistent");
        }
        lib
    }

    pub fn set_limits(&mut self, limits: Limits) {
        self.limits = limits;
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn len(&self) -> usize {
        self.manifest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.manifest
    }

    pub fn contains(&self, name: &str) -> bool {
        self.records.contains_key(name)
    }

    /// Records in manifest order.
    pub fn records(&self) -> impl Iterator<Item = &ModuleRecord> {
        self.manifest.iter().map(|n| &self.records[n])
    }

    pub fn generated(&self) -> impl Iterator<Item = &ModuleRecord> {
        self.records().filter(|r| r.kind == ModuleKind::Generated)
    }

    /// Add `rec`. Re-registering an identical record is a no-op; replacing a
    /// record needs a higher version.
    pub fn register(&mut self, rec: ModuleRecord) -> Result<(), RegistryError> {
        let name = rec.name().to_string();
        let handle = match rec.kind {
            ModuleKind::Builtin => None,
            ModuleKind::Generated => Some(self.check_gate(&rec)?),
        };
        if let Some(old) = self.records.get(&name) {
            if old.source == rec.source && old.signature == rec.signature && old.kind == rec.kind {
                return Ok(());
            }
            if old.kind == ModuleKind::Builtin || rec.kind == ModuleKind::Builtin {
                return Err(RegistryError::NameCollision(format!("{name} is a pre-defined module")));
            }
            if rec.version <= old.version {
                return Err(RegistryError::NameCollision(format!(
                    "{name} v{} already registered with different source; bump the version",
                    old.version
                )));
            }
        } else {
            self.manifest.push(name.clone());
        }
        if let Some(h) = handle {
            self.handles.insert(name.clone(), h);
        }
        self.records.insert(name, rec);
        Ok(())
    }

    fn check_gate(&self, rec: &ModuleRecord) -> Result<CandidateHandle, RegistryError> {
        let name = rec.name();
        if !(0.0..=1.0).contains(&rec.pass_rate) || !(rec.eta_at_acceptance > 0.0 && rec.eta_at_acceptance <= 1.0) {
            return Err(RegistryError::GateViolation(format!("{name}: pass rate or threshold out of range")));
        }
        if rec.pass_rate < rec.eta_at_acceptance {
            return Err(RegistryError::GateViolation(format!(
                "{name}: pass rate {} below threshold {}",
                rec.pass_rate, rec.eta_at_acceptance
            )));
        }
        if rec.test_case_ids.is_empty() {
            return Err(RegistryError::GateViolation(format!("{name}: no test cases recorded")));
        }
        if rec.version == 0 {
            return Err(RegistryError::GateViolation(format!("{name}: version must be at least 1")));
        }
        load_candidate(&rec.source, &rec.signature)
            .map_err(|e| RegistryError::GateViolation(format!("{name}: source does not load: {e}")))
    }

    pub fn lookup(&self, name: &str) -> Result<&ModuleRecord, RegistryError> {
        self.records.get(name).ok_or_else(|| RegistryError::NotFound(name.to_string()))
    }

    /// Header blocks of every record in manifest order, for prompt slots.
    pub fn signature_prompt_text(&self) -> String {
        self.records().map(|r| r.signature.header_text()).collect()
    }

    /// Module names one per line, in manifest order.
    pub fn module_list_text(&self) -> String {
        self.manifest.iter().map(|n| format!("{n}\n")).collect()
    }

    pub fn signatures(&self) -> Vec<ModuleSignature> {
        self.records().map(|r| r.signature.clone()).collect()
    }

    /// Copy restricted to the builtins and the named generated modules.
    pub fn restricted_to(&self, keep: &[&str]) -> Library {
        let mut lib = Library::empty();
        lib.limits = self.limits;
        for r in self.records() {
            if r.kind == ModuleKind::Builtin || keep.contains(&r.name()) {
                lib.register(r.clone()).expect("subset of a consistent library");
            }
        }
        lib
    }

    pub fn save(&self, dir: &Path) -> Result<(), RegistryError> {
        let io = |e: std::io::Error| RegistryError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir.join("modules")).map_err(io)?;
        let manifest = Manifest {
            format: FORMAT,
            modules: self.manifest.clone(),
        };
        fs::write(dir.join("manifest.json"), to_json(&manifest)).map_err(io)?;
        for r in self.records() {
            let meta = RecordMeta {
                signature: r.signature.clone(),
                kind: r.kind,
                origin_task: r.origin_task.clone(),
                pass_rate: r.pass_rate,
                eta_at_acceptance: r.eta_at_acceptance,
                created_at: r.created_at,
                version: r.version,
                test_case_ids: r.test_case_ids.clone(),
            };
            let (src, meta_path) = module_paths(dir, r.name(), r.kind);
            fs::write(src, &r.source).map_err(io)?;
            fs::write(meta_path, to_json(&meta)).map_err(io)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Library, RegistryError> {
        let manifest_path = dir.join("manifest.json");
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| RegistryError::Io(format!("{}: {e}", manifest_path.display())))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| RegistryError::Schema(format!("manifest.json: {e}")))?;
        if manifest.format != FORMAT {
            return Err(RegistryError::Schema(format!("unsupported library format {}", manifest.format)));
        }
        let mut lib = Library::empty();
        for name in &manifest.modules {
            let meta_path = dir.join("modules").join(format!("{name}.json"));
            let meta_text = fs::read_to_string(&meta_path)
                .map_err(|_| RegistryError::Schema(format!("missing metadata for {name}")))?;
            let meta: RecordMeta = serde_json::from_str(&meta_text)
                .map_err(|e| RegistryError::Schema(format!("{name} metadata: {e}")))?;
            if meta.signature.name != *name {
                return Err(RegistryError::Schema(format!("metadata for {name} names {}", meta.signature.name)));
            }
            let (src_path, _) = module_paths(dir, name, meta.kind);
            let source = fs::read_to_string(&src_path)
                .map_err(|_| RegistryError::Schema(format!("missing source file {}", src_path.display())))?;
            if meta.kind == ModuleKind::Builtin && parse_signature_block(&source).is_err() {
                return Err(RegistryError::Schema(format!("{name}: builtin header does not parse")));
            }
            let rec = ModuleRecord {
                signature: meta.signature,
                source,
                kind: meta.kind,
                origin_task: meta.origin_task,
                pass_rate: meta.pass_rate,
                eta_at_acceptance: meta.eta_at_acceptance,
                created_at: meta.created_at,
                version: meta.version,
                test_case_ids: meta.test_case_ids,
            };
            if lib.records.contains_key(name) {
                return Err(RegistryError::Schema(format!("{name} listed twice")));
            }
            lib.register(rec).map_err(|e| RegistryError::Schema(e.to_string()))?;
        }
        Ok(lib)
    }
}

fn module_paths(dir: &Path, name: &str, kind: ModuleKind) -> (std::path::PathBuf, std::path::PathBuf) {
    let ext = match kind {
        ModuleKind::Builtin => "txt",
        ModuleKind::Generated => "rhai",
    };
    let m = dir.join("modules");
    (m.join(format!("{name}.{ext}")), m.join(format!("{name}.json")))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

impl SignatureLookup for Library {
    fn signature(&self, name: &str) -> Option<&ModuleSignature> {
        self.records.get(name).map(|r| &r.signature)
    }
}

impl ModuleResolver for Library {
    fn signature(&self, name: &str) -> Option<&ModuleSignature> {
        self.records.get(name).map(|r| &r.signature)
    }

    fn invoke(&self, name: &str, args: &[Value], backend: &SharedBackend) -> Result<Value, StepFault> {
        let h = self
            .handles
            .get(name)
            .ok_or_else(|| StepFault::new(ErrorKind::Name, format!("no implementation for {name}")))?;
        invoke_candidate(h, args, backend, &self.limits).map_err(|e| StepFault::new(ErrorKind::Sandbox, e.to_string()))
    }
}
