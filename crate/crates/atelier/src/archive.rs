//! Session archives: a tar container holding `manifest.json` and
//! `artifacts/<sha256>.<ext>` for every artifact the manifest references.
//!
//! Archives are deterministic: entries are sorted, and headers carry fixed
//! mode, owner and a zero modification time, so exporting the same session
//! twice yields identical bytes.

use std::collections::BTreeMap;
use std::io::{Cursor, Read};

use atelier_core::{ArtifactId, Session, SessionId};
use serde::Serialize;
use tar::{Builder, EntryType, Header};
use thiserror::Error;

use crate::manifest::{decode_canonical, ManifestError};
use crate::store::{Store, StoreError};

pub const MANIFEST_ENTRY: &str = "manifest.json";
const MAX_ENTRY_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("malformed archive: {0}")]
    Malformed(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("artifact {0} is referenced but missing")]
    MissingArtifact(ArtifactId),
    #[error("artifact {artifact} does not match its content (hashes to {actual})")]
    HashMismatch { artifact: ArtifactId, actual: ArtifactId },
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for ArchiveError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::MissingArtifact(id) => ArchiveError::MissingArtifact(id),
            StoreError::HashMismatch { expected, actual } => ArchiveError::HashMismatch { artifact: expected, actual },
            other => ArchiveError::Store(other),
        }
    }
}

fn append(builder: &mut Builder<Vec<u8>>, path: &str, bytes: &[u8]) -> Result<(), ArchiveError> {
    let mut header = Header::new_ustar();
    header.set_entry_type(EntryType::Regular);
    header.set_size(bytes.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_uid(0);
    header.set_gid(0);
    builder.append_data(&mut header, path, bytes).map_err(|e| ArchiveError::Malformed(format!("cannot write entry {path}: {e}")))
}

fn artifact_entry(id: &ArtifactId, ext: &str) -> String {
    format!("artifacts/{id}.{ext}")
}

/// Builds an archive from the manifest bytes and artifact bytes of a session.
pub fn build_archive(
    manifest: &[u8],
    session: &Session,
    mut artifact: impl FnMut(&atelier_core::ArtifactRef) -> Result<Vec<u8>, ArchiveError>,
) -> Result<Vec<u8>, ArchiveError> {
    let mut builder = Builder::new(Vec::new());
    append(&mut builder, MANIFEST_ENTRY, manifest)?;
    let mut refs: Vec<_> = session.artifacts().iter().collect();
    refs.sort_by(|a, b| a.artifact_id.cmp(&b.artifact_id));
    for r in refs {
        let bytes = artifact(r)?;
        append(&mut builder, &artifact_entry(&r.artifact_id, r.extension()), &bytes)?;
    }
    builder.into_inner().map_err(|e| ArchiveError::Malformed(e.to_string()))
}

pub fn export_session(store: &Store, id: &SessionId) -> Result<Vec<u8>, ArchiveError> {
    let manifest = store.manifest_bytes(id)?.ok_or_else(|| ArchiveError::UnknownSession(id.clone()))?;
    let session = decode_canonical(&manifest)?;
    build_archive(&manifest, &session, |r| Ok(store.read_verified(r)?))
}

/// Entries of an archive, keyed by path.
#[derive(Debug, Default)]
pub struct ArchiveContents {
    pub manifest: Vec<u8>,
    pub entries: BTreeMap<String, Vec<u8>>,
}

pub fn read_archive(bytes: &[u8]) -> Result<ArchiveContents, ArchiveError> {
    let malformed = |e: std::io::Error| ArchiveError::Malformed(e.to_string());
    let mut archive = tar::Archive::new(Cursor::new(bytes));
    let mut manifest = None;
    let mut entries = BTreeMap::new();
    for entry in archive.entries().map_err(malformed)? {
        let mut entry = entry.map_err(malformed)?;
        if entry.header().entry_type() != EntryType::Regular {
            return Err(ArchiveError::Malformed("archive contains a non-file entry".into()));
        }
        let path = entry.path().map_err(malformed)?.to_string_lossy().into_owned();
        if entry.size() > MAX_ENTRY_BYTES {
            return Err(ArchiveError::Malformed(format!("entry {path} is too large")));
        }
        let mut data = Vec::with_capacity(entry.size() as usize);
        entry.read_to_end(&mut data).map_err(malformed)?;
        if path == MANIFEST_ENTRY {
            if manifest.replace(data).is_some() {
                return Err(ArchiveError::Malformed("duplicate manifest".into()));
            }
        } else if path.starts_with("artifacts/") && !path[10..].contains('/') {
            if entries.insert(path.clone(), data).is_some() {
                return Err(ArchiveError::Malformed(format!("duplicate entry {path}")));
            }
        } else {
            return Err(ArchiveError::Malformed(format!("unexpected entry {path}")));
        }
    }
    let manifest = manifest.ok_or_else(|| ArchiveError::Malformed(format!("no {MANIFEST_ENTRY} entry")))?;
    Ok(ArchiveContents { manifest, entries })
}

/// Imports an archive into `store`, verifying every artifact hash before
/// anything is written. The manifest is stored byte-for-byte.
pub fn import_session(store: &Store, bytes: &[u8]) -> Result<Session, ArchiveError> {
    let contents = read_archive(bytes)?;
    let session = decode_canonical(&contents.manifest)?;
    let mut verified = Vec::new();
    for r in session.artifacts() {
        let data = contents
            .entries
            .get(&artifact_entry(&r.artifact_id, r.extension()))
            .ok_or_else(|| ArchiveError::MissingArtifact(r.artifact_id.clone()))?;
        if !r.artifact_id.matches(data) || data.len() as u64 != r.byte_length {
            return Err(ArchiveError::HashMismatch { artifact: r.artifact_id.clone(), actual: ArtifactId::for_bytes(data) });
        }
        verified.push((data, r.media_type.as_str()));
    }
    for (data, media_type) in verified {
        store.put_artifact(data, media_type)?;
    }
    Ok(store.save_manifest_bytes(&contents.manifest)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum Problem {
    Malformed { message: String },
    InvalidManifest { message: String },
    MissingArtifact { artifact: String },
    HashMismatch { entry: String, expected: String, actual: String },
    LengthMismatch { entry: String, expected: u64, actual: u64 },
    UnreferencedEntry { entry: String },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub session_id: Option<String>,
    pub artifacts_checked: usize,
    pub problems: Vec<Problem>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Re-hashes every artifact in an archive and checks it against the manifest.
pub fn verify_archive(bytes: &[u8]) -> VerifyReport {
    let mut report = VerifyReport::default();
    let contents = match read_archive(bytes) {
        Ok(c) => c,
        Err(e) => {
            report.problems.push(Problem::Malformed { message: e.to_string() });
            return report;
        }
    };
    let mut remaining = contents.entries.clone();
    for (path, data) in &contents.entries {
        let Some(stem) = path.strip_prefix("artifacts/").and_then(|f| f.split('.').next()) else { continue };
        let actual = ArtifactId::for_bytes(data);
        if actual.as_str() != stem {
            report.problems.push(Problem::HashMismatch { entry: path.clone(), expected: stem.into(), actual: actual.to_string() });
        }
        report.artifacts_checked += 1;
    }
    match decode_canonical(&contents.manifest) {
        Ok(session) => {
            report.session_id = Some(session.id().to_string());
            for r in session.artifacts() {
                let entry = artifact_entry(&r.artifact_id, r.extension());
                match remaining.remove(&entry) {
                    None => report.problems.push(Problem::MissingArtifact { artifact: r.artifact_id.to_string() }),
                    Some(data) if data.len() as u64 != r.byte_length => {
                        report.problems.push(Problem::LengthMismatch { entry, expected: r.byte_length, actual: data.len() as u64 })
                    }
                    Some(_) => {}
                }
            }
            for entry in remaining.into_keys() {
                report.problems.push(Problem::UnreferencedEntry { entry });
            }
        }
        Err(e) => report.problems.push(Problem::InvalidManifest { message: e.to_string() }),
    }
    report
}
