//! On-disk session store.
//!
//! Layout under the data directory:
//!
//! ```text
//! artifacts/<sha256>.<ext>   content-addressed artifact bytes
//! sessions/<id>.json         session manifests
//! quarantine/<sha256>.<ext>  outputs withheld by the safety filter
//! audit/<log>.jsonl          append-only audit logs
//! ```
//!
//! Every file write goes to a temporary file in the target directory and is
//! renamed into place.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use atelier_core::artifact::{extension_for, media_type_for_extension};
use atelier_core::{ArtifactId, ArtifactRef, Session, SessionError, SessionId};
use serde::Serialize;
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::manifest::{decode_canonical, decode_manifest, encode_manifest, ManifestError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("stored session is unreadable: {0}")]
    Manifest(#[from] ManifestError),
    #[error("artifact {0} is missing from the store")]
    MissingArtifact(ArtifactId),
    #[error("artifact {expected} is corrupt: content hashes to {actual}")]
    HashMismatch { expected: ArtifactId, actual: ArtifactId },
    #[error("refusing to overwrite session history: {0}")]
    Immutable(SessionError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditLog {
    Safety,
    Privacy,
}

impl AuditLog {
    fn file_name(self) -> &'static str {
        match self {
            AuditLog::Safety => "safety.jsonl",
            AuditLog::Privacy => "privacy.jsonl",
        }
    }
}

const ARTIFACT_EXTENSIONS: &[&str] = &["png", "jpg"];

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    audit_lock: Mutex<()>,
}

impl Store {
    /// Opens (creating if needed) a store and checks the directory is writable.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["artifacts", "sessions", "quarantine", "audit"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let probe = root.join("sessions");
        NamedTempFile::new_in(&probe).map_err(io_err(&probe))?;
        Ok(Store { root, audit_lock: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let dir = path.parent().expect("store paths have a parent");
        let mut tmp = NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(bytes).map_err(io_err(path))?;
        tmp.as_file().sync_all().map_err(io_err(path))?;
        tmp.persist(path).map_err(|e| StoreError::Io { path: path.to_path_buf(), source: e.error })?;
        Ok(())
    }

    fn artifact_path(&self, dir: &str, id: &ArtifactId, media_type: &str) -> PathBuf {
        self.root.join(dir).join(format!("{id}.{}", extension_for(media_type)))
    }

    /// Stores bytes under their content hash. Storing the same bytes again
    /// is a no-op; a corrupted existing copy is replaced.
    pub fn put_artifact(&self, bytes: &[u8], media_type: &str) -> Result<ArtifactId, StoreError> {
        let id = ArtifactId::for_bytes(bytes);
        let path = self.artifact_path("artifacts", &id, media_type);
        match fs::read(&path) {
            Ok(existing) if id.matches(&existing) => {}
            _ => self.write_atomic(&path, bytes)?,
        }
        Ok(id)
    }

    /// Raw stored bytes and media type, without verification.
    pub fn read_artifact(&self, id: &ArtifactId) -> Result<Option<(Vec<u8>, &'static str)>, StoreError> {
        for ext in ARTIFACT_EXTENSIONS {
            let path = self.root.join("artifacts").join(format!("{id}.{ext}"));
            match fs::read(&path) {
                Ok(bytes) => return Ok(Some((bytes, media_type_for_extension(ext)))),
                Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        Ok(None)
    }

    /// Bytes of a referenced artifact, re-hashed against its id.
    pub fn read_verified(&self, artifact: &ArtifactRef) -> Result<Vec<u8>, StoreError> {
        let path = self.artifact_path("artifacts", &artifact.artifact_id, &artifact.media_type);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::MissingArtifact(artifact.artifact_id.clone())),
            Err(e) => return Err(io_err(&path)(e)),
        };
        if !artifact.artifact_id.matches(&bytes) {
            return Err(StoreError::HashMismatch { expected: artifact.artifact_id.clone(), actual: ArtifactId::for_bytes(&bytes) });
        }
        Ok(bytes)
    }

    pub fn quarantine(&self, bytes: &[u8], media_type: &str) -> Result<ArtifactId, StoreError> {
        let id = ArtifactId::for_bytes(bytes);
        self.write_atomic(&self.artifact_path("quarantine", &id, media_type), bytes)?;
        Ok(id)
    }

    pub fn is_quarantined(&self, id: &ArtifactId) -> bool {
        ARTIFACT_EXTENSIONS.iter().any(|ext| self.root.join("quarantine").join(format!("{id}.{ext}")).exists())
    }

    fn session_path(&self, id: &SessionId) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    pub fn manifest_bytes(&self, id: &SessionId) -> Result<Option<Vec<u8>>, StoreError> {
        let path = self.session_path(id);
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn load_session(&self, id: &SessionId) -> Result<Option<Session>, StoreError> {
        match self.manifest_bytes(id)? {
            Some(bytes) => Ok(Some(decode_manifest(&bytes)?)),
            None => Ok(None),
        }
    }

    /// Persists a session. An existing stored version must be a prefix of
    /// the new one: recorded iterations, transitions and artifacts can only
    /// be appended to, never altered.
    pub fn save_session(&self, session: &Session) -> Result<(), StoreError> {
        if let Some(previous) = self.load_session(session.id())? {
            session.check_continues(&previous).map_err(StoreError::Immutable)?;
        }
        self.write_atomic(&self.session_path(session.id()), &encode_manifest(session))
    }

    /// Writes manifest bytes verbatim after checking they are canonical.
    pub fn save_manifest_bytes(&self, bytes: &[u8]) -> Result<Session, StoreError> {
        let session = decode_canonical(bytes)?;
        if let Some(previous) = self.load_session(session.id())? {
            session.check_continues(&previous).map_err(StoreError::Immutable)?;
        }
        self.write_atomic(&self.session_path(session.id()), bytes)?;
        Ok(session)
    }

    pub fn session_ids(&self) -> Result<Vec<SessionId>, StoreError> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry.map_err(io_err(&dir))?.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name.strip_suffix(".json") {
                if let Ok(id) = SessionId::parse(stem) {
                    ids.push(id);
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn append_audit(&self, log: AuditLog, entry: &impl Serialize) -> Result<(), StoreError> {
        let path = self.root.join("audit").join(log.file_name());
        let mut line = serde_json::to_vec(entry).expect("audit entries serialize");
        line.push(b'\n');
        let _guard = self.audit_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        file.write_all(&line).map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))
    }

    pub fn read_audit(&self, log: AuditLog) -> Result<Vec<serde_json::Value>, StoreError> {
        let path = self.root.join("audit").join(log.file_name());
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        Ok(text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect())
    }
}
