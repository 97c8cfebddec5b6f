//! Generative backend contract and registry.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edges::EdgeMap;
use crate::mask::MaskImage;
use crate::prompt::{GenerationParams, Prompt};
use crate::raster::RasterImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    SketchToImage,
    Inpaint,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::SketchToImage => "sketch_to_image",
            Capability::Inpaint => "inpaint",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub capabilities: BTreeSet<Capability>,
    /// Attests that inference never leaves this machine.
    pub local_only: bool,
    #[serde(default)]
    pub model_ids: Vec<String>,
    /// Concurrent requests the backend accepts; `None` is unbounded.
    #[serde(default)]
    pub max_concurrency: Option<u32>,
}

impl BackendDescriptor {
    pub fn supports(&self, capability: Capability) -> bool {
        self.capabilities.contains(&capability)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend {backend} lacks capability {capability}")]
    CapabilityMissing { backend: String, capability: Capability },
    #[error("inference failed: {0}")]
    InferenceFailure(String),
}

pub trait GenerativeBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Generates an image of `params.output_size` that follows `edges`.
    fn sketch_to_image(&self, edges: &EdgeMap, prompt: &Prompt, params: &GenerationParams) -> Result<RasterImage, BackendError>;

    /// Regenerates the masked region. The caller composites the result, so
    /// the backend may touch unmasked pixels.
    fn inpaint(
        &self,
        image: &RasterImage,
        mask: &MaskImage,
        prompt: &Prompt,
        params: &GenerationParams,
    ) -> Result<RasterImage, BackendError>;
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("a backend named {0} is already registered")]
    DuplicateName(String),
    #[error("no backend named {0}")]
    UnknownBackend(String),
    #[error("backend {backend} lacks capability {capability}")]
    CapabilityMissing { backend: String, capability: Capability },
    #[error("backend {0} is not attested local-only and the privacy guard is active")]
    NonLocalBackendRefused(String),
    #[error("backend {0} declares no capabilities")]
    NoCapabilities(String),
    #[error("backend {0} is not on the allowlist")]
    NotAllowed(String),
}

/// Name-keyed backends. With `require_local` set, backends without a
/// local-only attestation are refused at registration and at selection.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn GenerativeBackend>>,
    require_local: bool,
    allowlist: Option<BTreeSet<String>>,
}

impl fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendRegistry")
            .field("backends", &self.backends.keys().collect::<Vec<_>>())
            .field("require_local", &self.require_local)
            .finish()
    }
}

impl BackendRegistry {
    pub fn new(require_local: bool) -> Self {
        BackendRegistry { backends: BTreeMap::new(), require_local, allowlist: None }
    }

    /// Restricts registration to the given names. An empty list allows all.
    pub fn with_allowlist<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        self.allowlist = (!set.is_empty()).then_some(set);
        self
    }

    pub fn requires_local(&self) -> bool {
        self.require_local
    }

    pub fn register(&mut self, backend: Arc<dyn GenerativeBackend>) -> Result<(), RegistryError> {
        let d = backend.descriptor();
        if self.backends.contains_key(&d.name) {
            return Err(RegistryError::DuplicateName(d.name.clone()));
        }
        if d.capabilities.is_empty() {
            return Err(RegistryError::NoCapabilities(d.name.clone()));
        }
        if self.allowlist.as_ref().is_some_and(|a| !a.contains(&d.name)) {
            return Err(RegistryError::NotAllowed(d.name.clone()));
        }
        if self.require_local && !d.local_only {
            return Err(RegistryError::NonLocalBackendRefused(d.name.clone()));
        }
        self.backends.insert(d.name.clone(), backend);
        Ok(())
    }

    pub fn select(&self, name: &str, capability: Capability) -> Result<Arc<dyn GenerativeBackend>, RegistryError> {
        let backend = self.backends.get(name).ok_or_else(|| RegistryError::UnknownBackend(name.into()))?;
        let d = backend.descriptor();
        if self.require_local && !d.local_only {
            return Err(RegistryError::NonLocalBackendRefused(name.into()));
        }
        if !d.supports(capability) {
            return Err(RegistryError::CapabilityMissing { backend: name.into(), capability });
        }
        Ok(Arc::clone(backend))
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &BackendDescriptor> {
        self.backends.values().map(|b| b.descriptor())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}
