//! Content-addressed artifact references.

use alloc::string::String;
use core::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Digest used for artifact ids; recorded in every manifest.
pub const HASH_ALGORITHM: &str = "sha256";

pub const MEDIA_TYPE_PNG: &str = "image/png";
pub const MEDIA_TYPE_JPEG: &str = "image/jpeg";

/// Lowercase hex SHA-256 of an artifact's encoded bytes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ArtifactId(String);

impl ArtifactId {
    pub fn for_bytes(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut hex = String::with_capacity(64);
        for b in digest.iter() {
            let _ = write!(hex, "{b:02x}");
        }
        ArtifactId(hex)
    }

    /// Accepts exactly 64 lowercase hex digits.
    pub fn parse(s: &str) -> Option<Self> {
        let ok = s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| ArtifactId(String::from(s)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn matches(&self, bytes: &[u8]) -> bool {
        *self == Self::for_bytes(bytes)
    }
}

impl TryFrom<String> for ArtifactId {
    type Error = &'static str;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s).ok_or("artifact id must be 64 lowercase hex digits")
    }
}

impl From<ArtifactId> for String {
    fn from(id: ArtifactId) -> String {
        id.0
    }
}

impl fmt::Display for ArtifactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactRole {
    Draft,
    EdgeMap,
    Artwork,
    Mask,
    AdaptedArtwork,
}

impl ArtifactRole {
    /// Roles that can be the target of an adaptation.
    pub fn is_artwork(self) -> bool {
        matches!(self, ArtifactRole::Artwork | ArtifactRole::AdaptedArtwork)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub artifact_id: ArtifactId,
    pub role: ArtifactRole,
    pub media_type: String,
    pub byte_length: u64,
    /// Artifact this one was computed from, when the step has a single source
    /// (an edge map records its draft).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_from: Option<ArtifactId>,
}

impl ArtifactRef {
    pub fn for_bytes(bytes: &[u8], role: ArtifactRole, media_type: &str) -> Self {
        ArtifactRef {
            artifact_id: ArtifactId::for_bytes(bytes),
            role,
            media_type: String::from(media_type),
            byte_length: bytes.len() as u64,
            derived_from: None,
        }
    }

    pub fn derived_from(mut self, source: ArtifactId) -> Self {
        self.derived_from = Some(source);
        self
    }

    /// File extension used when the artifact is written to disk.
    pub fn extension(&self) -> &'static str {
        extension_for(&self.media_type)
    }
}

pub fn extension_for(media_type: &str) -> &'static str {
    match media_type {
        MEDIA_TYPE_JPEG => "jpg",
        MEDIA_TYPE_PNG => "png",
        _ => "bin",
    }
}

pub fn media_type_for_extension(ext: &str) -> &'static str {
    match ext {
        "png" => MEDIA_TYPE_PNG,
        "jpg" | "jpeg" => MEDIA_TYPE_JPEG,
        _ => "application/octet-stream",
    }
}
