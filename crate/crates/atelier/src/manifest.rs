//! The session manifest document, used both for the on-disk session store
//! and inside session archives.
//!
//! Encoding is canonical: pretty JSON with keys in declaration order and a
//! trailing newline, so identical sessions always produce identical bytes.

use atelier_core::{
    ArtifactRef, ConfigSnapshot, IterationRecord, PhaseTransition, Session, SessionError, SessionId, SessionParts, SessionPhase,
    HASH_ALGORITHM,
};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_VERSION: &str = "atelier/1";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported manifest version {0:?}")]
    Version(String),
    #[error("unsupported hash algorithm {0:?}")]
    HashAlgorithm(String),
    #[error("manifest is not in canonical form")]
    NonCanonical,
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionHeader {
    session_id: SessionId,
    participant_alias: String,
    phase: SessionPhase,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
    config_snapshot: ConfigSnapshot,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: String,
    hash_algorithm: String,
    session: SessionHeader,
    phases: Vec<PhaseTransition>,
    iterations: Vec<IterationRecord>,
    artifacts: Vec<ArtifactRef>,
}

pub fn encode_manifest(session: &Session) -> Vec<u8> {
    let p = session.parts().clone();
    let manifest = Manifest {
        version: MANIFEST_VERSION.to_string(),
        hash_algorithm: HASH_ALGORITHM.to_string(),
        session: SessionHeader {
            session_id: p.session_id,
            participant_alias: p.participant_alias,
            phase: p.phase,
            created_at: p.created_at,
            updated_at: p.updated_at,
            config_snapshot: p.config_snapshot,
        },
        phases: p.phases,
        iterations: p.iterations,
        artifacts: p.artifacts,
    };
    let mut out = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    out.push(b'\n');
    out
}

pub fn decode_manifest(bytes: &[u8]) -> Result<Session, ManifestError> {
    let m: Manifest = serde_json::from_slice(bytes)?;
    if m.version != MANIFEST_VERSION {
        return Err(ManifestError::Version(m.version));
    }
    if m.hash_algorithm != HASH_ALGORITHM {
        return Err(ManifestError::HashAlgorithm(m.hash_algorithm));
    }
    let h = m.session;
    Ok(Session::from_parts(SessionParts {
        session_id: h.session_id,
        participant_alias: h.participant_alias,
        phase: h.phase,
        created_at: h.created_at,
        updated_at: h.updated_at,
        config_snapshot: h.config_snapshot,
        phases: m.phases,
        iterations: m.iterations,
        artifacts: m.artifacts,
    })?)
}

/// Decodes and insists the bytes are exactly what [`encode_manifest`]
/// would produce for the decoded session.
pub fn decode_canonical(bytes: &[u8]) -> Result<Session, ManifestError> {
    let session = decode_manifest(bytes)?;
    if encode_manifest(&session) != bytes {
        return Err(ManifestError::NonCanonical);
    }
    Ok(session)
}
