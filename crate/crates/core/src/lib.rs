//! Allocation-only core of the atelier pipeline.
//!
//! Everything in here is a pure function of its inputs: the therapeutic
//! session state machine, edge extraction, mask rasterization, the
//! generative backend contract with its deterministic stub, and the
//! compositing step that guarantees unmasked pixels survive inpainting.
//! File formats, storage, HTTP and the CLI live in the `atelier` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod artifact;
pub mod backend;
pub mod edges;
pub mod mask;
pub mod phase;
pub mod pipeline;
pub mod prompt;
pub mod raster;
pub mod safety;
pub mod session;
pub mod stub;

pub use artifact::{ArtifactId, ArtifactRef, ArtifactRole, HASH_ALGORITHM};
pub use backend::{BackendDescriptor, BackendError, BackendRegistry, Capability, GenerativeBackend, RegistryError};
pub use edges::{EdgeDetector, EdgeError, EdgeMap, GradientDetector};
pub use mask::{rasterize_mask, validate_mask, MaskError, MaskImage, MaskReport, MaskStatus, Stroke, StrokeMode, StrokePoint, StrokeSet};
pub use phase::{SessionPhase, TransitionError};
pub use pipeline::{composite, generate_from_sketch, inpaint, Generated, PipelineError, SafetyGate};
pub use prompt::{GenerationParams, OutputSize, ParamsError, PartialParams, Prompt, PromptError};
pub use raster::{ColorSpace, GrayPlane, RasterError, RasterImage};
pub use safety::{safety_check, AllowAll, SafetyChecker, SafetyPolicy, SafetyVerdict};
pub use session::{
    Clock, ConfigSnapshot, IterationKind, IterationRecord, NewIteration, PhaseTransition, Session, SessionError, SessionId, SessionParts,
};
pub use stub::StubBackend;
