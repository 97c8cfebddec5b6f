//! Therapy sessions: phase history, artifacts and iteration provenance.
//!
//! Every event on a session (phase transition or iteration) gets a
//! timestamp strictly later than the previous event, so the phase in force
//! when an iteration was recorded can always be recovered from the
//! transition log. Timestamps carry millisecond precision.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, Duration, DurationRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{ArtifactId, ArtifactRef};
use crate::phase::{SessionPhase, TransitionError};
use crate::prompt::{GenerationParams, Prompt};
use crate::safety::SafetyPolicy;

pub const MAX_ALIAS_CHARS: usize = 64;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

impl<F> Clock for F
where
    F: Fn() -> DateTime<Utc> + Send + Sync,
{
    fn now(&self) -> DateTime<Utc> {
        self()
    }
}

pub fn to_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    t.duration_trunc(Duration::milliseconds(1)).unwrap_or(t)
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("invalid participant alias: {0}")]
    InvalidAlias(&'static str),
    #[error("invalid session id {0:?}")]
    InvalidSessionId(String),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("{kind} iterations require phase {required}, session is in {phase}")]
    PhaseMismatch { kind: IterationKind, required: SessionPhase, phase: SessionPhase },
    #[error("artifact {0} is not part of this session")]
    UnknownArtifact(ArtifactId),
    #[error("iteration output {0} is also one of its inputs")]
    OutputIsInput(ArtifactId),
    #[error("recorded iteration {0} cannot be modified")]
    ImmutableRecord(String),
    #[error("inconsistent session history: {0}")]
    InconsistentHistory(String),
}

/// Pseudonymous, filesystem-safe identifier: 1–64 of `[A-Za-z0-9_-]`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SessionId(String);

impl SessionId {
    pub fn parse(s: &str) -> Result<Self, SessionError> {
        let ok = !s.is_empty() && s.len() <= 64 && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
        if ok {
            Ok(SessionId(String::from(s)))
        } else {
            Err(SessionError::InvalidSessionId(String::from(s)))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SessionId {
    type Error = SessionError;

    fn try_from(s: String) -> Result<Self, SessionError> {
        Self::parse(&s)
    }
}

impl From<SessionId> for String {
    fn from(id: SessionId) -> String {
        id.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn validate_alias(alias: &str) -> Result<(), SessionError> {
    if alias.trim().is_empty() {
        return Err(SessionError::InvalidAlias("must not be empty"));
    }
    if alias.chars().count() > MAX_ALIAS_CHARS {
        return Err(SessionError::InvalidAlias("longer than 64 characters"));
    }
    if alias.chars().any(char::is_control) {
        return Err(SessionError::InvalidAlias("contains control characters"));
    }
    Ok(())
}

/// Service configuration as resolved when the session was created.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub listen_address: String,
    pub data_dir: String,
    pub local_only: bool,
    pub safety_policy: SafetyPolicy,
    pub default_params: GenerationParams,
    pub backend_allowlist: Vec<String>,
}

impl Default for ConfigSnapshot {
    fn default() -> Self {
        ConfigSnapshot {
            listen_address: String::from("127.0.0.1:7860"),
            data_dir: String::from("atelier-data"),
            local_only: true,
            safety_policy: SafetyPolicy::Log,
            default_params: GenerationParams::default(),
            backend_allowlist: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTransition {
    pub from: SessionPhase,
    pub to: SessionPhase,
    pub at: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationKind {
    /// Draft + edge map → artwork.
    Refinement,
    /// Artwork + mask → adapted artwork.
    Adaptation,
}

impl IterationKind {
    pub const fn required_phase(self) -> SessionPhase {
        match self {
            IterationKind::Refinement => SessionPhase::ArtisticWork,
            IterationKind::Adaptation => SessionPhase::Adaptation,
        }
    }
}

impl fmt::Display for IterationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IterationKind::Refinement => "refinement",
            IterationKind::Adaptation => "adaptation",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration_id: String,
    pub kind: IterationKind,
    pub input_artifacts: Vec<ArtifactId>,
    pub prompt: Prompt,
    pub params: GenerationParams,
    pub output_artifact: ArtifactId,
    pub backend_name: String,
    pub wall_time_ms: u64,
    pub created_at: DateTime<Utc>,
}

/// Iteration fields supplied by the caller; id and timestamp are assigned.
#[derive(Clone, Debug, PartialEq)]
pub struct NewIteration {
    pub kind: IterationKind,
    pub input_artifacts: Vec<ArtifactId>,
    pub prompt: Prompt,
    pub params: GenerationParams,
    pub output_artifact: ArtifactId,
    pub backend_name: String,
    pub wall_time_ms: u64,
}

/// Plain-data form of a [`Session`], used for (de)serialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionParts {
    pub session_id: SessionId,
    pub participant_alias: String,
    pub phase: SessionPhase,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub config_snapshot: ConfigSnapshot,
    pub phases: Vec<PhaseTransition>,
    pub iterations: Vec<IterationRecord>,
    pub artifacts: Vec<ArtifactRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SessionParts", into = "SessionParts")]
pub struct Session {
    parts: SessionParts,
}

impl TryFrom<SessionParts> for Session {
    type Error = SessionError;

    fn try_from(parts: SessionParts) -> Result<Self, SessionError> {
        Session::from_parts(parts)
    }
}

impl From<Session> for SessionParts {
    fn from(s: Session) -> Self {
        s.parts
    }
}

impl Session {
    pub fn new(id: SessionId, alias: &str, config: ConfigSnapshot, now: DateTime<Utc>) -> Result<Self, SessionError> {
        validate_alias(alias)?;
        let now = to_millis(now);
        Ok(Session {
            parts: SessionParts {
                session_id: id,
                participant_alias: String::from(alias),
                phase: SessionPhase::InitialConversation,
                created_at: now,
                updated_at: now,
                config_snapshot: config,
                phases: Vec::new(),
                iterations: Vec::new(),
                artifacts: Vec::new(),
            },
        })
    }

    /// Rebuilds a session from stored data, checking every invariant.
    pub fn from_parts(parts: SessionParts) -> Result<Self, SessionError> {
        validate_alias(&parts.participant_alias)?;
        let bad = |msg: String| Err(SessionError::InconsistentHistory(msg));

        let mut phase = SessionPhase::InitialConversation;
        let mut last = parts.created_at;
        for t in &parts.phases {
            if t.from != phase {
                return bad(format!("transition starts at {} but session was in {}", t.from, phase));
            }
            t.from.check_transition(t.to)?;
            if t.at <= last {
                return bad(format!("transition at {} is not after the previous event", t.at));
            }
            last = t.at;
            phase = t.to;
        }
        if phase != parts.phase {
            return bad(format!("phase {} does not match transition log ending in {}", parts.phase, phase));
        }

        let known = |id: &ArtifactId| parts.artifacts.iter().any(|a| &a.artifact_id == id);
        let mut ids = alloc::collections::BTreeSet::new();
        let mut prev: Option<DateTime<Utc>> = None;
        for rec in &parts.iterations {
            if !ids.insert(rec.iteration_id.as_str()) {
                return bad(format!("duplicate iteration id {}", rec.iteration_id));
            }
            if prev.is_some_and(|p| rec.created_at <= p) || rec.created_at <= parts.created_at {
                return bad(format!("iteration {} is out of order", rec.iteration_id));
            }
            prev = Some(rec.created_at);
            let at_creation = phase_at(&parts.phases, rec.created_at);
            if at_creation != rec.kind.required_phase() {
                return Err(SessionError::PhaseMismatch { kind: rec.kind, required: rec.kind.required_phase(), phase: at_creation });
            }
            for id in rec.input_artifacts.iter().chain(core::iter::once(&rec.output_artifact)) {
                if !known(id) {
                    return Err(SessionError::UnknownArtifact(id.clone()));
                }
            }
            if rec.input_artifacts.contains(&rec.output_artifact) {
                return Err(SessionError::OutputIsInput(rec.output_artifact.clone()));
            }
        }
        let mut seen = alloc::collections::BTreeSet::new();
        if let Some(dup) = parts.artifacts.iter().find(|a| !seen.insert(&a.artifact_id)) {
            return bad(format!("artifact {} listed twice", dup.artifact_id));
        }
        Ok(Session { parts })
    }

    pub fn parts(&self) -> &SessionParts {
        &self.parts
    }

    pub fn id(&self) -> &SessionId {
        &self.parts.session_id
    }

    pub fn participant_alias(&self) -> &str {
        &self.parts.participant_alias
    }

    pub fn phase(&self) -> SessionPhase {
        self.parts.phase
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.parts.created_at
    }

    pub fn updated_at(&self) -> DateTime<Utc> {
        self.parts.updated_at
    }

    pub fn config_snapshot(&self) -> &ConfigSnapshot {
        &self.parts.config_snapshot
    }

    pub fn transitions(&self) -> &[PhaseTransition] {
        &self.parts.phases
    }

    pub fn iterations(&self) -> &[IterationRecord] {
        &self.parts.iterations
    }

    pub fn artifacts(&self) -> &[ArtifactRef] {
        &self.parts.artifacts
    }

    pub fn artifact(&self, id: &ArtifactId) -> Option<&ArtifactRef> {
        self.parts.artifacts.iter().find(|a| &a.artifact_id == id)
    }

    fn next_event_time(&self, now: DateTime<Utc>) -> DateTime<Utc> {
        let now = to_millis(now);
        let floor = self.parts.updated_at + Duration::milliseconds(1);
        if now < floor {
            floor
        } else {
            now
        }
    }

    /// Moves to `target` (one step forward or a self-transition). The
    /// transition is appended to the audit trail either way.
    pub fn advance_phase(&mut self, target: SessionPhase, now: DateTime<Utc>) -> Result<&PhaseTransition, SessionError> {
        let from = self.parts.phase;
        from.check_transition(target)?;
        let at = self.next_event_time(now);
        self.parts.phases.push(PhaseTransition { from, to: target, at });
        self.parts.phase = target;
        self.parts.updated_at = at;
        Ok(self.parts.phases.last().expect("just pushed"))
    }

    /// Adds an artifact reference; re-adding known bytes returns the existing entry.
    pub fn add_artifact(&mut self, artifact: ArtifactRef, now: DateTime<Utc>) -> &ArtifactRef {
        let idx = match self.parts.artifacts.iter().position(|a| a.artifact_id == artifact.artifact_id) {
            Some(i) => i,
            None => {
                self.parts.artifacts.push(artifact);
                let now = to_millis(now);
                if now > self.parts.updated_at {
                    self.parts.updated_at = now;
                }
                self.parts.artifacts.len() - 1
            }
        };
        &self.parts.artifacts[idx]
    }

    /// Checks that `kind` may be recorded now, before any work is done.
    pub fn check_kind(&self, kind: IterationKind) -> Result<(), SessionError> {
        let required = kind.required_phase();
        if self.parts.phase != required {
            return Err(SessionError::PhaseMismatch { kind, required, phase: self.parts.phase });
        }
        Ok(())
    }

    pub fn record_iteration(&mut self, new: NewIteration, now: DateTime<Utc>) -> Result<&IterationRecord, SessionError> {
        self.check_kind(new.kind)?;
        for id in new.input_artifacts.iter().chain(core::iter::once(&new.output_artifact)) {
            if self.artifact(id).is_none() {
                return Err(SessionError::UnknownArtifact(id.clone()));
            }
        }
        if new.input_artifacts.contains(&new.output_artifact) {
            return Err(SessionError::OutputIsInput(new.output_artifact));
        }
        let created_at = self.next_event_time(now);
        let record = IterationRecord {
            iteration_id: format!("it-{:04}", self.parts.iterations.len() + 1),
            kind: new.kind,
            input_artifacts: new.input_artifacts,
            prompt: new.prompt,
            params: new.params,
            output_artifact: new.output_artifact,
            backend_name: new.backend_name,
            wall_time_ms: new.wall_time_ms,
            created_at,
        };
        self.parts.iterations.push(record);
        self.parts.updated_at = created_at;
        Ok(self.parts.iterations.last().expect("just pushed"))
    }

    /// Succeeds when `self` is an append-only continuation of `previous`:
    /// same identity, and every recorded transition, iteration and artifact
    /// of `previous` unchanged.
    pub fn check_continues(&self, previous: &Session) -> Result<(), SessionError> {
        let (a, b) = (&previous.parts, &self.parts);
        if a.session_id != b.session_id || a.participant_alias != b.participant_alias || a.created_at != b.created_at {
            return Err(SessionError::InconsistentHistory(String::from("session identity changed")));
        }
        if a.config_snapshot != b.config_snapshot {
            return Err(SessionError::InconsistentHistory(String::from("configuration snapshot changed")));
        }
        for (i, old) in a.iterations.iter().enumerate() {
            if b.iterations.get(i) != Some(old) {
                return Err(SessionError::ImmutableRecord(old.iteration_id.clone()));
            }
        }
        if b.phases.get(..a.phases.len()) != Some(&a.phases[..]) {
            return Err(SessionError::InconsistentHistory(String::from("phase history rewritten")));
        }
        if b.artifacts.get(..a.artifacts.len()) != Some(&a.artifacts[..]) {
            return Err(SessionError::InconsistentHistory(String::from("artifact list rewritten")));
        }
        Ok(())
    }
}

/// Phase in force at `at`, given a well-formed transition log.
fn phase_at(transitions: &[PhaseTransition], at: DateTime<Utc>) -> SessionPhase {
    transitions.iter().take_while(|t| t.at < at).last().map_or(SessionPhase::InitialConversation, |t| t.to)
}
