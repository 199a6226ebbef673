use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::Utc;
use sha2::{Digest, Sha256};

use super::{Config, ConfigError, InputProvenance, ScanReport, SCHEMA_VERSION};
use crate::ci::{CiCatalog, ExternalAnalyzer, InjectionAnalyzer, PatternAnalyzer};
use crate::extract::{CdnHosts, Extractor};
use crate::probe::{
    CacheError, Clock, FixedClock, FixtureArchive, FixtureError, LiveTransport, ProbeCache, ProbeError, Prober, RecordingTransport, ReplayTransport,
    StaticAvailability, SystemClock, Transport,
};
use crate::prompt::{PromptRecord, RecordStore};
use crate::threat::{
    compute_metrics, compute_overlap, default_family, AssessOptions, Assessor, ComponentRecord, ComponentRef, CountMode, ResponseAssessment,
    ThreatCategory,
};
use crate::vulndb::{LoadError, VulnDb};

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("{path}: {source}")]
    Input { path: String, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    VulnDb(#[from] LoadError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("ci catalog {path}: {source}")]
    Catalog { path: String, source: std::io::Error },
    #[error("live transport: {0}")]
    Transport(String),
    #[error("{input}: {source}")]
    Probe { input: String, source: ProbeError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbeMode {
    Live,
    /// Replay a recorded archive; anything not in it is a hard error.
    Fixture(PathBuf),
    /// Probe live and write every exchange to an archive.
    Record(PathBuf),
}

/// One response to scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanInput {
    pub id: String,
    pub source: String,
    pub text: String,
    pub labels: BTreeMap<String, String>,
}

impl ScanInput {
    pub fn text(id: impl Into<String>, text: impl Into<String>) -> Self {
        let id = id.into();
        Self { source: id.clone(), id, text: text.into(), labels: BTreeMap::new() }
    }

    /// One input per answered record.
    pub fn from_records(records: &[PromptRecord], source: &str) -> Vec<ScanInput> {
        records
            .iter()
            .filter_map(|r| {
                let text = r.response.clone()?;
                let model = r.model.as_deref().unwrap_or("unknown");
                Some(ScanInput { id: format!("{model}:{}", r.record_id()), source: source.to_owned(), text, labels: r.labels() })
            })
            .collect()
    }

    /// A `.jsonl` record store expands to its answered records; any other
    /// file is a single response.
    pub fn from_path(path: &Path) -> Result<Vec<ScanInput>, ScanError> {
        let shown = path.display().to_string();
        let err = |source| ScanError::Input { path: shown.clone(), source };
        if path.extension().is_some_and(|e| e == "jsonl") {
            let records = RecordStore::load(path).map_err(err)?;
            return Ok(Self::from_records(&records, &shown));
        }
        let text = std::fs::read_to_string(path).map_err(err)?;
        Ok(vec![ScanInput { id: shown.clone(), source: shown, text, labels: BTreeMap::new() }])
    }
}

struct Recorder {
    transport: Arc<RecordingTransport>,
    dir: PathBuf,
}

pub struct Scanner {
    config: Config,
    prober: Prober,
    db: VulnDb,
    analyzer: Box<dyn InjectionAnalyzer>,
    extractor: Extractor,
    fixture_manifest: Option<String>,
    recorder: Option<Recorder>,
    stamp: bool,
    warnings: Vec<String>,
}

fn live_transport(config: &Config) -> Result<Arc<LiveTransport>, ScanError> {
    let timeout = std::time::Duration::from_secs(config.probe.retry.timeout_secs);
    LiveTransport::new(timeout).map(Arc::new).map_err(|e| ScanError::Transport(e.to_string()))
}

impl Scanner {
    /// Sets up probing for `mode`. Only live mode uses the on-disk cache;
    /// fixture and record modes start from an empty in-memory cache so the
    /// archive alone decides the outcome.
    pub fn new(mut config: Config, mode: ProbeMode) -> Result<Self, ScanError> {
        config.validate()?;
        config.probe.github_token = std::env::var("GITHUB_TOKEN").ok().filter(|t| !t.is_empty());
        config.probe.availability_credential = std::env::var("SENTINEL_AVAILABILITY_KEY").ok().filter(|t| !t.is_empty());
        let ttl = chrono::Duration::hours(config.cache.ttl_hours as i64);
        match mode {
            ProbeMode::Fixture(dir) => {
                let archive = FixtureArchive::load(&dir)?;
                let hash = archive.manifest_hash();
                let clock = Arc::new(FixedClock(archive.created_at));
                let has_availability = archive.records().any(|r| r.key.contains("/v1/domains/available"));
                let mut s = Self::build_with(config, Arc::new(ReplayTransport::new(archive)), clock, Arc::new(ProbeCache::in_memory(ttl)), false, has_availability)?;
                s.fixture_manifest = Some(hash);
                Ok(s)
            }
            ProbeMode::Record(dir) => {
                let recorder = Arc::new(RecordingTransport::new(live_transport(&config)?, Utc::now()));
                let mut s = Self::build(config, recorder.clone(), Arc::new(SystemClock), Arc::new(ProbeCache::in_memory(ttl)), true)?;
                s.recorder = Some(Recorder { transport: recorder, dir });
                Ok(s)
            }
            ProbeMode::Live => {
                let cache = if config.cache.enabled {
                    let dir = config.cache_dir();
                    std::fs::create_dir_all(&dir).map_err(|source| CacheError::Io { path: dir.display().to_string(), source })?;
                    ProbeCache::open(&dir.join("probe-cache.json"), ttl)?
                } else {
                    ProbeCache::in_memory(ttl)
                };
                let transport = live_transport(&config)?;
                Self::build(config, transport, Arc::new(SystemClock), Arc::new(cache), true)
            }
        }
    }

    /// Scanner over an arbitrary transport, for embedding and tests.
    /// `stamp` adds the clock's time to reports. Without an availability
    /// credential every domain is `Unknown` and the registrar is not asked.
    pub fn build(config: Config, transport: Arc<dyn Transport>, clock: Arc<dyn Clock>, cache: Arc<ProbeCache>, stamp: bool) -> Result<Self, ScanError> {
        let registrar = config.probe.availability_credential.is_some();
        Self::build_with(config, transport, clock, cache, stamp, registrar)
    }

    fn build_with(
        config: Config,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
        cache: Arc<ProbeCache>,
        stamp: bool,
        registrar: bool,
    ) -> Result<Self, ScanError> {
        config.validate()?;
        let mut warnings = Vec::new();
        let db = match &config.vulndb {
            Some(p) => VulnDb::load(p)?,
            None => {
                let updated = config.cache_dir().join("jsrepository.json");
                if updated.is_file() {
                    VulnDb::load(&updated)?
                } else {
                    VulnDb::bundled()
                }
            }
        };
        warnings.extend(db.warnings().iter().map(|w| format!("vulnerability db: {w}")));
        let analyzer: Box<dyn InjectionAnalyzer> = match (&config.ci_analyzer, &config.ci_catalog) {
            (Some(cmd), _) if !cmd.is_empty() => Box::new(ExternalAnalyzer { program: PathBuf::from(&cmd[0]), args: cmd[1..].to_vec() }),
            (_, Some(path)) => {
                let catalog = CiCatalog::load(path).map_err(|source| ScanError::Catalog { path: path.display().to_string(), source })?;
                Box::new(PatternAnalyzer { catalog })
            }
            _ => Box::new(PatternAnalyzer::default()),
        };
        let mut hosts = CdnHosts::default();
        hosts.0.extend(config.cdn_hosts.iter().cloned());
        let mut prober = Prober::new(transport, config.probe.clone(), clock).with_cache(cache);
        if !registrar {
            prober = prober.with_availability(Arc::new(StaticAvailability::default()));
        }
        Ok(Self {
            config,
            prober,
            db,
            analyzer,
            extractor: Extractor::new(hosts),
            fixture_manifest: None,
            recorder: None,
            stamp,
            warnings,
        })
    }

    pub fn prober(&self) -> &Prober {
        &self.prober
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn vulndb(&self) -> &VulnDb {
        &self.db
    }

    fn assess_all(&self, inputs: &[ScanInput]) -> Result<Vec<ResponseAssessment>, ScanError> {
        let assessor = Assessor {
            prober: &self.prober,
            db: &self.db,
            analyzer: self.analyzer.as_ref(),
            options: AssessOptions { count_incomplete: self.config.count_incomplete },
        };
        let results: Mutex<Vec<Option<Result<ResponseAssessment, ScanError>>>> = Mutex::new((0..inputs.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..self.config.concurrency.min(inputs.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(input) = inputs.get(i) else { break };
                    let x = self.extractor.extract_all(&input.text);
                    let r = assessor.assess(&input.id, &x, &input.labels).map_err(|source| ScanError::Probe { input: input.id.clone(), source });
                    // A fatal probe error ends the scan; stop handing out work.
                    if r.is_err() {
                        next.store(inputs.len(), Ordering::SeqCst);
                    }
                    results.lock().expect("scan results lock")[i] = Some(r);
                });
            }
        });
        let mut out = Vec::with_capacity(inputs.len());
        for r in results.into_inner().expect("scan results lock") {
            match r {
                Some(r) => out.push(r?),
                None => continue,
            }
        }
        Ok(out)
    }

    pub fn scan(&self, inputs: &[ScanInput]) -> Result<ScanReport, ScanError> {
        let responses = self.assess_all(inputs)?;
        let mode = if self.config.dedup { CountMode::PerResponse } else { CountMode::Occurrences };
        let components: Vec<ComponentRecord> = responses.iter().flat_map(|r| r.components.iter().cloned()).collect();
        let metrics = compute_metrics(&components, &[], mode);
        let mut breakdowns = BTreeMap::new();
        for label in &self.config.group_by {
            if components.iter().any(|c| c.labels.contains_key(label)) {
                breakdowns.insert(label.clone(), compute_metrics(&components, &[label.as_str()], mode));
            }
        }

        let mut per_model: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in &responses {
            let Some(model) = r.labels.get("model") else { continue };
            let set = per_model.entry(model.clone()).or_default();
            for f in r.findings.iter().filter(|f| f.category == ThreatCategory::PackageHallucination) {
                match &f.component {
                    ComponentRef::Package(p) => set.insert(format!("{}/{}", p.registry, p.name)),
                    ComponentRef::CdnPackage(c) => set.insert(format!("npm/{}", c.package)),
                    _ => false,
                };
            }
        }
        let overlap = (per_model.len() >= 2).then(|| compute_overlap(&per_model, default_family));

        let inputs_prov: Vec<InputProvenance> = inputs
            .iter()
            .map(|i| InputProvenance { id: i.id.clone(), source: i.source.clone(), sha256: hex::encode(Sha256::digest(i.text.as_bytes())) })
            .collect();
        let mut h = Sha256::new();
        h.update(crate::TOOL_VERSION.as_bytes());
        h.update(self.db.snapshot_hash().as_bytes());
        h.update(self.fixture_manifest.as_deref().unwrap_or("live").as_bytes());
        h.update(format!("{mode:?}/{}", self.config.count_incomplete).as_bytes());
        for i in &inputs_prov {
            h.update(i.id.as_bytes());
            h.update(i.sha256.as_bytes());
        }
        Ok(ScanReport {
            schema_version: SCHEMA_VERSION,
            run_id: hex::encode(h.finalize())[..16].to_owned(),
            tool_version: crate::TOOL_VERSION.to_owned(),
            vulndb_snapshot: self.db.snapshot_hash().to_owned(),
            fixture_manifest: self.fixture_manifest.clone(),
            generated_at: self.stamp.then(|| self.prober.now()),
            count_mode: mode,
            inputs: inputs_prov,
            responses,
            probes: self.prober.provenance(),
            metrics,
            breakdowns,
            overlap,
            warnings: self.warnings.clone(),
        })
    }

    /// Persists the probe cache and, in record mode, the fixture archive.
    pub fn finish(&self) -> Result<(), ScanError> {
        self.prober.cache().save()?;
        if let Some(r) = &self.recorder {
            r.transport.archive().save(&r.dir)?;
        }
        Ok(())
    }
}
