//! The session workflow over the store, the backend registry and the
//! privacy guard. HTTP handlers and CLI commands are thin layers on top.
//!
//! Handlers hold no state of their own: every operation loads the session
//! from the store under a per-session lock, applies one step and persists
//! the result before returning.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use atelier_core::artifact::MEDIA_TYPE_PNG;
use atelier_core::edges::GRADIENT_DETECTOR;
use atelier_core::mask::MaskError;
use atelier_core::phase::TransitionError;
use atelier_core::{
    generate_from_sketch, inpaint, rasterize_mask, ArtifactId, ArtifactRef, ArtifactRole, BackendDescriptor, BackendRegistry, Capability,
    Clock, EdgeDetector, EdgeError, EdgeMap, Generated, GenerativeBackend, GradientDetector, IterationKind, IterationRecord, MaskImage,
    NewIteration, ParamsError, PartialParams, PipelineError, Prompt, PromptError, RegistryError, SafetyChecker, SafetyGate, SafetyVerdict,
    Session, SessionError, SessionId, SessionPhase, Stroke, StrokeSet, StubBackend,
};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{export_session, import_session, ArchiveError};
use crate::codec::{decode_gray, decode_raster, encode_gray_png, encode_png, CodecError};
use crate::config::ServiceConfig;
use crate::ingest::{ingest_image, IngestError};
use crate::privacy::{GuardViolation, PrivacyGuard, Violation};
use crate::queue::{BackendQueue, QueueError};
use crate::sidecar::{NeuralDetector, SidecarBackend, SidecarClient, SidecarError};
use crate::store::{AuditLog, Store, StoreError};

/// Coarse error classes; the HTTP layer maps each to one status code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Invalid,
    NotFound,
    Conflict,
    Unprocessable,
    Forbidden,
    Unavailable,
    Internal,
}

#[derive(Debug, Error)]
pub enum StudioError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown artifact {0:?}")]
    UnknownArtifact(String),
    #[error("unknown edge detector {0:?}")]
    UnknownDetector(String),
    #[error("{operation} is not allowed in phase {phase}")]
    PhaseConflict { operation: &'static str, phase: SessionPhase },
    #[error("artifact {artifact} has role {actual:?}; {expected} required")]
    WrongRole { artifact: ArtifactId, actual: ArtifactRole, expected: &'static str },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid generation parameters: {0}")]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    Guard(#[from] GuardViolation),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("stored image is unreadable: {0}")]
    Codec(#[from] CodecError),
    #[error("sidecar unavailable: {0}")]
    Sidecar(SidecarError),
}

impl From<SidecarError> for StudioError {
    fn from(e: SidecarError) -> Self {
        match e {
            SidecarError::Guard(g) => StudioError::Guard(g),
            other => StudioError::Sidecar(other),
        }
    }
}

impl StudioError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        use StudioError as E;
        match self {
            E::UnknownSession(_) => "UnknownSession",
            E::UnknownArtifact(_) => "UnknownArtifact",
            E::UnknownDetector(_) => "UnknownDetector",
            E::PhaseConflict { .. } => "PhaseMismatch",
            E::WrongRole { .. } => "WrongArtifactRole",
            E::Invalid(_) => "InvalidRequest",
            E::Session(e) => match e {
                SessionError::InvalidAlias(_) => "InvalidAlias",
                SessionError::InvalidSessionId(_) => "UnknownSession",
                SessionError::Transition(TransitionError::IllegalTransition { .. }) => "IllegalTransition",
                SessionError::Transition(TransitionError::SessionClosed { .. }) => "SessionClosed",
                SessionError::PhaseMismatch { .. } => "PhaseMismatch",
                SessionError::UnknownArtifact(_) => "UnknownArtifact",
                SessionError::OutputIsInput(_) => "OutputIsInput",
                SessionError::ImmutableRecord(_) => "ImmutableRecord",
                SessionError::InconsistentHistory(_) => "InconsistentHistory",
            },
            E::Ingest(e) => match e {
                IngestError::UnsupportedFormat(_) => "UnsupportedFormat",
                IngestError::CorruptImage(_) => "CorruptImage",
                IngestError::ImageTooSmall { .. } => "ImageTooSmall",
            },
            E::Mask(e) => match e {
                MaskError::EmptyMask => "EmptyMask",
                MaskError::OutOfBounds { .. } => "OutOfBounds",
                MaskError::NotBinary => "NotBinary",
                _ => "InvalidStroke",
            },
            E::Edge(e) => match e {
                EdgeError::DetectorUnavailable(_) => "DetectorUnavailable",
                _ => "InferenceFailure",
            },
            E::Prompt(_) => "InvalidPrompt",
            E::Params(_) => "InvalidParams",
            E::Registry(e) => match e {
                RegistryError::DuplicateName(_) => "DuplicateName",
                RegistryError::UnknownBackend(_) => "UnknownBackend",
                RegistryError::CapabilityMissing { .. } => "CapabilityMissing",
                RegistryError::NonLocalBackendRefused(_) => "NonLocalBackendRefused",
                RegistryError::NoCapabilities(_) => "NoCapabilities",
                RegistryError::NotAllowed(_) => "BackendNotAllowed",
            },
            E::Pipeline(e) => match e {
                PipelineError::CapabilityMissing { .. } => "CapabilityMissing",
                PipelineError::EmptyMask => "EmptyMask",
                PipelineError::DimensionMismatch { .. } => "DimensionMismatch",
                PipelineError::InferenceFailure(_) => "InferenceFailure",
                PipelineError::SafetyRejection { .. } => "SafetyRejection",
            },
            E::Queue(QueueError::Busy) => "BackendBusy",
            E::Queue(QueueError::Timeout) => "BackendTimeout",
            E::Guard(_) => "GuardViolation",
            E::Store(StoreError::HashMismatch { .. } | StoreError::MissingArtifact(_)) => "StorageCorruption",
            E::Store(StoreError::Immutable(_)) => "ImmutableRecord",
            E::Store(_) => "StorageFailure",
            E::Archive(e) => match e {
                ArchiveError::Malformed(_) => "MalformedArchive",
                ArchiveError::Manifest(_) => "InvalidManifest",
                ArchiveError::MissingArtifact(_) => "MissingArtifact",
                ArchiveError::HashMismatch { .. } => "HashMismatch",
                ArchiveError::UnknownSession(_) => "UnknownSession",
                ArchiveError::Store(StoreError::Immutable(_)) => "ImmutableRecord",
                ArchiveError::Store(_) => "StorageFailure",
            },
            E::Codec(_) => "StorageCorruption",
            E::Sidecar(_) => "SidecarUnavailable",
        }
    }

    pub fn class(&self) -> ErrorClass {
        use ErrorClass as C;
        match self.code() {
            "UnknownSession" | "UnknownArtifact" | "UnknownDetector" | "UnknownBackend" => C::NotFound,
            "PhaseMismatch" | "IllegalTransition" | "SessionClosed" | "OutputIsInput" | "ImmutableRecord" | "DuplicateName" => C::Conflict,
            "EmptyMask" | "DimensionMismatch" | "NotBinary" | "SafetyRejection" | "HashMismatch" | "MissingArtifact" => C::Unprocessable,
            "NonLocalBackendRefused" | "BackendNotAllowed" | "GuardViolation" => C::Forbidden,
            "BackendBusy" | "BackendTimeout" | "DetectorUnavailable" | "SidecarUnavailable" => C::Unavailable,
            "InferenceFailure" | "StorageFailure" | "StorageCorruption" | "InconsistentHistory" => C::Internal,
            _ => C::Invalid,
        }
    }
}

type ResolvedBackend = (String, Arc<dyn GenerativeBackend>, Arc<BackendQueue>);

/// `POST /v1/sessions` body.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub participant_alias: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseRequest {
    /// Phase name (`artistic_work`) or numeral (`ii`).
    pub target: String,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRequest {
    pub draft_id: String,
    #[serde(default)]
    pub detector: Option<String>,
    /// Binarize at this level; soft intensities pass through when absent.
    #[serde(default)]
    pub threshold: Option<u8>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub edge_id: String,
    pub prompt: String,
    #[serde(default)]
    pub negative_prompt: Option<String>,
    #[serde(default)]
    pub params: Option<PartialParams>,
    #[serde(default)]
    pub backend: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrokeMaskRequest {
    pub artwork_id: String,
    pub strokes: Vec<Stroke>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintRequest {
    pub artwork_id: String,
    pub mask_id: String,
    pub prompt: String,
    #[serde(default)]
    pub negative_prompt: Option<String>,
    #[serde(default)]
    pub params: Option<PartialParams>,
    #[serde(default)]
    pub backend: Option<String>,
}

#[derive(Serialize)]
struct SafetyAudit<'a> {
    at: chrono::DateTime<Utc>,
    session_id: &'a str,
    operation: &'a str,
    backend: &'a str,
    policy: atelier_core::SafetyPolicy,
    verdict: &'a SafetyVerdict,
    artifact_id: &'a ArtifactId,
    action: &'a str,
}

struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> chrono::DateTime<Utc> {
        Utc::now()
    }
}

pub struct StudioBuilder {
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    safety: Arc<dyn SafetyChecker>,
    backends: Vec<Arc<dyn GenerativeBackend>>,
    with_stub: bool,
}

impl StudioBuilder {
    pub fn clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn safety_checker(mut self, checker: impl SafetyChecker + 'static) -> Self {
        self.safety = Arc::new(checker);
        self
    }

    /// Registers an extra in-process backend at startup.
    pub fn backend(mut self, backend: Arc<dyn GenerativeBackend>) -> Self {
        self.backends.push(backend);
        self
    }

    /// Leaves out the built-in stub backend.
    pub fn without_stub(mut self) -> Self {
        self.with_stub = false;
        self
    }

    /// Opens the store, installs the privacy guard, then registers backends.
    pub fn build(self) -> Result<Studio, StudioError> {
        let config = self.config;
        config.validate().map_err(|e| StudioError::Invalid(e.to_string()))?;
        let store = Arc::new(Store::open(&config.data_dir)?);
        let sink_store = store.clone();
        let guard = Arc::new(PrivacyGuard::new(config.local_only).with_sink(move |v: &Violation| {
            if let Err(e) = sink_store.append_audit(AuditLog::Privacy, v) {
                tracing::error!("cannot write privacy audit: {e}");
            }
        }));
        guard.check_bind(&config.listen_address)?;

        let registry = BackendRegistry::new(guard.is_active()).with_allowlist(config.backend_allowlist.iter().cloned());
        let mut detectors: BTreeMap<String, Arc<dyn EdgeDetector>> = BTreeMap::new();
        detectors.insert(GRADIENT_DETECTOR.into(), Arc::new(GradientDetector));
        let sidecar =
            config.sidecar.as_ref().map(|s| SidecarClient::new(s.endpoint.clone(), guard.clone(), Duration::from_millis(s.timeout_ms)));
        let neural = Arc::new(NeuralDetector::new(sidecar.clone()));
        detectors.insert(neural.name().into(), neural);

        let studio = Studio {
            config,
            store,
            guard,
            registry: RwLock::new(registry),
            queues: RwLock::new(BTreeMap::new()),
            detectors,
            clock: self.clock,
            safety: self.safety,
            locks: Mutex::new(HashMap::new()),
        };
        if self.with_stub {
            studio.register_backend(Arc::new(StubBackend::new()))?;
        }
        if let Some(client) = sidecar {
            studio.register_backend(Arc::new(SidecarBackend::connect(client)?))?;
        }
        for b in self.backends {
            studio.register_backend(b)?;
        }
        Ok(studio)
    }
}

pub struct Studio {
    config: ServiceConfig,
    store: Arc<Store>,
    guard: Arc<PrivacyGuard>,
    registry: RwLock<BackendRegistry>,
    queues: RwLock<BTreeMap<String, Arc<BackendQueue>>>,
    detectors: BTreeMap<String, Arc<dyn EdgeDetector>>,
    clock: Arc<dyn Clock>,
    safety: Arc<dyn SafetyChecker>,
    locks: Mutex<HashMap<SessionId, Arc<Mutex<()>>>>,
}

fn read<T>(l: &RwLock<T>) -> std::sync::RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(|e| e.into_inner())
}

fn prompt_of(text: String, negative: Option<String>) -> Result<Prompt, StudioError> {
    let p = Prompt::new(text)?;
    Ok(match negative {
        Some(n) => p.with_negative(n)?,
        None => p,
    })
}

impl Studio {
    pub fn builder(config: ServiceConfig) -> StudioBuilder {
        StudioBuilder {
            config,
            clock: Arc::new(SystemClock),
            safety: Arc::new(atelier_core::AllowAll),
            backends: Vec::new(),
            with_stub: true,
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn guard(&self) -> &PrivacyGuard {
        &self.guard
    }

    /// Registers a backend; under an active guard, one that does not
    /// attest `local_only` is refused and the refusal audited.
    pub fn register_backend(&self, backend: Arc<dyn GenerativeBackend>) -> Result<(), StudioError> {
        let d = backend.descriptor().clone();
        let result = self.registry.write().unwrap_or_else(|e| e.into_inner()).register(backend);
        if let Err(RegistryError::NonLocalBackendRefused(name)) = &result {
            self.guard.note_refused_backend(name);
        }
        result?;
        let queue = BackendQueue::new(d.max_concurrency, self.config.queue_depth, Duration::from_millis(self.config.queue_timeout_ms));
        self.queues.write().unwrap_or_else(|e| e.into_inner()).insert(d.name, Arc::new(queue));
        Ok(())
    }

    pub fn backends(&self) -> Vec<BackendDescriptor> {
        read(&self.registry).descriptors().cloned().collect()
    }

    pub fn detectors(&self) -> Vec<String> {
        self.detectors.keys().cloned().collect()
    }

    pub fn queue_retry_after(&self, backend: Option<&str>) -> u64 {
        let name = backend.unwrap_or(&self.config.default_backend);
        read(&self.queues).get(name).map_or(1, |q| q.retry_after_secs())
    }

    pub fn privacy_violations(&self) -> Vec<Violation> {
        self.guard.violations()
    }

    fn lock_for(&self, id: &SessionId) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap_or_else(|e| e.into_inner()).entry(id.clone()).or_default().clone()
    }

    fn parse_id(id: &str) -> Result<SessionId, StudioError> {
        SessionId::parse(id).map_err(|_| StudioError::UnknownSession(id.into()))
    }

    /// Runs `f` on the stored session under its lock and persists the result.
    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, StudioError>) -> Result<T, StudioError> {
        let id = Self::parse_id(id)?;
        let lock = self.lock_for(&id);
        let _held = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut session = self.store.load_session(&id)?.ok_or_else(|| StudioError::UnknownSession(id.to_string()))?;
        let out = f(&mut session)?;
        self.store.save_session(&session)?;
        Ok(out)
    }

    pub fn create_session(&self, participant_alias: &str) -> Result<Session, StudioError> {
        let id = SessionId::parse(&uuid::Uuid::new_v4().simple().to_string()).expect("uuid is a valid id");
        let session = Session::new(id, participant_alias, self.config.snapshot(), self.clock.now())?;
        self.store.save_session(&session)?;
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<Session, StudioError> {
        let sid = Self::parse_id(id)?;
        self.store.load_session(&sid)?.ok_or_else(|| StudioError::UnknownSession(id.into()))
    }

    pub fn session_ids(&self) -> Result<Vec<SessionId>, StudioError> {
        Ok(self.store.session_ids()?)
    }

    pub fn advance_phase(&self, id: &str, target: &str) -> Result<Session, StudioError> {
        let target: SessionPhase = target.parse().map_err(|_| StudioError::Invalid(format!("unknown phase {target:?}")))?;
        self.with_session(id, |s| {
            s.advance_phase(target, self.clock.now())?;
            Ok(s.clone())
        })
    }

    fn lookup<'s>(s: &'s Session, id: &str) -> Result<&'s ArtifactRef, StudioError> {
        ArtifactId::parse(id).and_then(|a| s.artifact(&a)).ok_or_else(|| StudioError::UnknownArtifact(id.into()))
    }

    fn expect_role(r: &ArtifactRef, ok: impl Fn(ArtifactRole) -> bool, expected: &'static str) -> Result<(), StudioError> {
        if ok(r.role) {
            Ok(())
        } else {
            Err(StudioError::WrongRole { artifact: r.artifact_id.clone(), actual: r.role, expected })
        }
    }

    fn store_png(&self, s: &mut Session, png: Vec<u8>, role: ArtifactRole, source: Option<ArtifactId>) -> Result<ArtifactRef, StudioError> {
        self.store.put_artifact(&png, MEDIA_TYPE_PNG)?;
        let mut r = ArtifactRef::for_bytes(&png, role, MEDIA_TYPE_PNG);
        r.derived_from = source;
        Ok(s.add_artifact(r, self.clock.now()).clone())
    }

    /// Accepted in phases (i) and (ii). The stored draft is the normalized
    /// RGB image re-encoded as PNG.
    pub fn upload_draft(&self, id: &str, bytes: &[u8], media_type: Option<&str>) -> Result<ArtifactRef, StudioError> {
        self.with_session(id, |s| {
            if !matches!(s.phase(), SessionPhase::InitialConversation | SessionPhase::ArtisticWork) {
                return Err(StudioError::PhaseConflict { operation: "draft upload", phase: s.phase() });
            }
            let image = ingest_image(bytes, media_type)?;
            self.store_png(s, encode_png(&image)?, ArtifactRole::Draft, None)
        })
    }

    pub fn extract_edges(&self, id: &str, req: EdgeRequest) -> Result<ArtifactRef, StudioError> {
        let name = req.detector.unwrap_or_else(|| GRADIENT_DETECTOR.into());
        let detector = self.detectors.get(&name).ok_or_else(|| StudioError::UnknownDetector(name.clone()))?.clone();
        self.with_session(id, |s| {
            let draft = Self::lookup(s, &req.draft_id)?.clone();
            Self::expect_role(&draft, |r| r == ArtifactRole::Draft, "draft")?;
            let image = decode_raster(&self.store.read_verified(&draft)?)?;
            let mut edges = detector.detect(&image)?;
            if let Some(level) = req.threshold {
                edges = edges.threshold(level);
            }
            self.store_png(s, encode_gray_png(edges.plane())?, ArtifactRole::EdgeMap, Some(draft.artifact_id))
        })
    }

    fn backend_for(&self, name: Option<String>, capability: Capability) -> Result<ResolvedBackend, StudioError> {
        let name = name.unwrap_or_else(|| self.config.default_backend.clone());
        let backend = read(&self.registry).select(&name, capability)?;
        let queue = read(&self.queues).get(&name).cloned().expect("every registered backend has a queue");
        Ok((name, backend, queue))
    }

    /// Applies the safety policy outcome: flagged images are audited, and
    /// under `block` also quarantined.
    fn screen(
        &self,
        result: Result<Generated, PipelineError>,
        session: &Session,
        operation: &str,
        backend: &str,
    ) -> Result<Generated, StudioError> {
        let policy = self.config.safety_policy;
        match result {
            Ok(g) => {
                if g.verdict.is_flagged() {
                    let png = encode_png(&g.image)?;
                    let artifact_id = ArtifactId::for_bytes(&png);
                    self.store.append_audit(
                        AuditLog::Safety,
                        &SafetyAudit {
                            at: Utc::now(),
                            session_id: session.id().as_str(),
                            operation,
                            backend,
                            policy,
                            verdict: &g.verdict,
                            artifact_id: &artifact_id,
                            action: "logged",
                        },
                    )?;
                }
                Ok(g)
            }
            Err(PipelineError::SafetyRejection { reason, image }) => {
                let png = encode_png(&image)?;
                let artifact_id = self.store.quarantine(&png, MEDIA_TYPE_PNG)?;
                let verdict = SafetyVerdict::Flagged { reason: reason.clone() };
                self.store.append_audit(
                    AuditLog::Safety,
                    &SafetyAudit {
                        at: Utc::now(),
                        session_id: session.id().as_str(),
                        operation,
                        backend,
                        policy,
                        verdict: &verdict,
                        artifact_id: &artifact_id,
                        action: "quarantined",
                    },
                )?;
                Err(PipelineError::SafetyRejection { reason, image }.into())
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Refinement: edge map + prompt → artwork. Requires phase (ii).
    pub fn generate(&self, id: &str, req: GenerateRequest) -> Result<IterationRecord, StudioError> {
        self.with_session(id, |s| {
            s.check_kind(IterationKind::Refinement)?;
            let edge_ref = Self::lookup(s, &req.edge_id)?.clone();
            Self::expect_role(&edge_ref, |r| r == ArtifactRole::EdgeMap, "edge map")?;
            let prompt = prompt_of(req.prompt, req.negative_prompt)?;
            let params = req.params.unwrap_or_default().resolve(&self.config.default_params)?;
            let (name, backend, queue) = self.backend_for(req.backend, Capability::SketchToImage)?;
            let edges = EdgeMap::from_plane(decode_gray(&self.store.read_verified(&edge_ref)?)?);
            let gate = SafetyGate { policy: self.config.safety_policy, checker: self.safety.as_ref() };

            let permit = queue.acquire()?;
            let started = Instant::now();
            let result = generate_from_sketch(backend.as_ref(), &edges, &prompt, &params, gate);
            let wall_time_ms = started.elapsed().as_millis() as u64;
            drop(permit);

            let generated = self.screen(result, s, "generate", &name)?;
            let out = self.store_png(s, encode_png(&generated.image)?, ArtifactRole::Artwork, None)?;
            let input_artifacts = edge_ref.derived_from.iter().cloned().chain([edge_ref.artifact_id.clone()]).collect();
            let new = NewIteration {
                kind: IterationKind::Refinement,
                input_artifacts,
                prompt,
                params,
                output_artifact: out.artifact_id,
                backend_name: name,
                wall_time_ms,
            };
            Ok(s.record_iteration(new, self.clock.now())?.clone())
        })
    }

    fn artwork_of(&self, s: &Session, artwork_id: &str) -> Result<(ArtifactRef, atelier_core::RasterImage), StudioError> {
        let r = Self::lookup(s, artwork_id)?.clone();
        Self::expect_role(&r, ArtifactRole::is_artwork, "artwork or adapted artwork")?;
        let image = decode_raster(&self.store.read_verified(&r)?)?;
        Ok((r, image))
    }

    fn store_mask(&self, s: &mut Session, mask: MaskImage, artwork: ArtifactId) -> Result<ArtifactRef, StudioError> {
        self.store_png(s, encode_gray_png(mask.plane())?, ArtifactRole::Mask, Some(artwork))
    }

    /// Rasterizes brush strokes over an artwork into a binary mask.
    pub fn add_mask_strokes(&self, id: &str, req: StrokeMaskRequest) -> Result<ArtifactRef, StudioError> {
        self.with_session(id, |s| {
            let (art, image) = self.artwork_of(s, &req.artwork_id)?;
            let mask = rasterize_mask(&StrokeSet::new(req.strokes), image.width(), image.height())?;
            self.store_mask(s, mask, art.artifact_id)
        })
    }

    /// Accepts a mask image; values are binarized at 128.
    pub fn add_mask_png(&self, id: &str, artwork_id: &str, bytes: &[u8]) -> Result<ArtifactRef, StudioError> {
        self.with_session(id, |s| {
            let (art, image) = self.artwork_of(s, artwork_id)?;
            let plane = decode_gray(bytes).map_err(|e| StudioError::Invalid(format!("mask image: {e}")))?;
            if (plane.width(), plane.height()) != (image.width(), image.height()) {
                return Err(PipelineError::DimensionMismatch {
                    width: image.width(),
                    height: image.height(),
                    mask_width: plane.width(),
                    mask_height: plane.height(),
                }
                .into());
            }
            let mask = MaskImage::from_thresholded(plane);
            if mask.masked_count() == 0 {
                return Err(MaskError::EmptyMask.into());
            }
            self.store_mask(s, mask, art.artifact_id)
        })
    }

    /// Adaptation: artwork + mask + prompt → adapted artwork. Requires phase (iii).
    pub fn inpaint(&self, id: &str, req: InpaintRequest) -> Result<IterationRecord, StudioError> {
        self.with_session(id, |s| {
            s.check_kind(IterationKind::Adaptation)?;
            let (art, image) = self.artwork_of(s, &req.artwork_id)?;
            let mask_ref = Self::lookup(s, &req.mask_id)?.clone();
            Self::expect_role(&mask_ref, |r| r == ArtifactRole::Mask, "mask")?;
            let prompt = prompt_of(req.prompt, req.negative_prompt)?;
            let params = req.params.unwrap_or_default().resolve(&self.config.default_params)?;
            let (name, backend, queue) = self.backend_for(req.backend, Capability::Inpaint)?;
            let mask = MaskImage::new(decode_gray(&self.store.read_verified(&mask_ref)?)?)?;
            let gate = SafetyGate { policy: self.config.safety_policy, checker: self.safety.as_ref() };

            let permit = queue.acquire()?;
            let started = Instant::now();
            let result = inpaint(backend.as_ref(), &image, &mask, &prompt, &params, gate);
            let wall_time_ms = started.elapsed().as_millis() as u64;
            drop(permit);

            let generated = self.screen(result, s, "inpaint", &name)?;
            let out = self.store_png(s, encode_png(&generated.image)?, ArtifactRole::AdaptedArtwork, None)?;
            let new = NewIteration {
                kind: IterationKind::Adaptation,
                input_artifacts: vec![art.artifact_id, mask_ref.artifact_id],
                prompt,
                params,
                output_artifact: out.artifact_id,
                backend_name: name,
                wall_time_ms,
            };
            Ok(s.record_iteration(new, self.clock.now())?.clone())
        })
    }

    /// Stored bytes and media type of any committed artifact.
    pub fn artifact(&self, hash: &str) -> Result<(Vec<u8>, &'static str), StudioError> {
        let id = ArtifactId::parse(hash).ok_or_else(|| StudioError::UnknownArtifact(hash.into()))?;
        self.store.read_artifact(&id)?.ok_or_else(|| StudioError::UnknownArtifact(hash.into()))
    }

    pub fn export_session(&self, id: &str) -> Result<Vec<u8>, StudioError> {
        let sid = Self::parse_id(id)?;
        let lock = self.lock_for(&sid);
        let _held = lock.lock().unwrap_or_else(|e| e.into_inner());
        export_session(&self.store, &sid).map_err(|e| match e {
            ArchiveError::UnknownSession(_) => StudioError::UnknownSession(id.into()),
            other => other.into(),
        })
    }

    pub fn import_session(&self, archive: &[u8]) -> Result<Session, StudioError> {
        Ok(import_session(&self.store, archive)?)
    }
}
