//! Sketch-conditioned generation and mask-conditioned inpainting over any
//! [`GenerativeBackend`].
//!
//! Inpainting output is always composited against the input: wherever the
//! mask is 0 the result holds the original bytes, whatever the backend
//! returned there.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::backend::{BackendError, Capability, GenerativeBackend};
use crate::edges::EdgeMap;
use crate::mask::{validate_mask, MaskImage, MaskStatus, MASK_ON};
use crate::prompt::{GenerationParams, Prompt};
use crate::raster::RasterImage;
use crate::safety::{safety_check, SafetyChecker, SafetyPolicy, SafetyVerdict};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("backend {backend} lacks capability {capability}")]
    CapabilityMissing { backend: String, capability: Capability },
    #[error("mask has no pixels to regenerate")]
    EmptyMask,
    #[error("mask is {mask_width}x{mask_height} but the image is {width}x{height}")]
    DimensionMismatch { width: u32, height: u32, mask_width: u32, mask_height: u32 },
    #[error("inference failed: {0}")]
    InferenceFailure(String),
    #[error("generated image rejected by the safety policy: {reason}")]
    SafetyRejection {
        reason: String,
        /// The rejected output, handed back for quarantine.
        image: Box<RasterImage>,
    },
}

impl From<BackendError> for PipelineError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::CapabilityMissing { backend, capability } => PipelineError::CapabilityMissing { backend, capability },
            BackendError::InferenceFailure(msg) => PipelineError::InferenceFailure(msg),
        }
    }
}

#[derive(Clone, Copy)]
pub struct SafetyGate<'a> {
    pub policy: SafetyPolicy,
    pub checker: &'a dyn SafetyChecker,
}

impl SafetyGate<'_> {
    pub const OFF: SafetyGate<'static> = SafetyGate { policy: SafetyPolicy::Off, checker: &crate::safety::AllowAll };
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generated {
    pub image: RasterImage,
    /// `Flagged` only under [`SafetyPolicy::Log`]; callers write the audit entry.
    pub verdict: SafetyVerdict,
}

fn require(backend: &dyn GenerativeBackend, capability: Capability) -> Result<(), PipelineError> {
    let d = backend.descriptor();
    if d.supports(capability) {
        Ok(())
    } else {
        Err(PipelineError::CapabilityMissing { backend: d.name.clone(), capability })
    }
}

fn screen(image: RasterImage, gate: SafetyGate<'_>) -> Result<Generated, PipelineError> {
    let verdict = safety_check(&image, gate.policy, gate.checker);
    match (&verdict, gate.policy) {
        (SafetyVerdict::Flagged { reason }, SafetyPolicy::Block) => {
            Err(PipelineError::SafetyRejection { reason: reason.clone(), image: Box::new(image) })
        }
        _ => Ok(Generated { image, verdict }),
    }
}

pub fn generate_from_sketch(
    backend: &dyn GenerativeBackend,
    edges: &EdgeMap,
    prompt: &Prompt,
    params: &GenerationParams,
    gate: SafetyGate<'_>,
) -> Result<Generated, PipelineError> {
    require(backend, Capability::SketchToImage)?;
    let size = params.output_size;
    let conditioning = edges.resampled(size.width, size.height).map_err(|e| PipelineError::InferenceFailure(alloc::format!("{e}")))?;
    let image = backend.sketch_to_image(&conditioning, prompt, params)?;
    if (image.width(), image.height()) != (size.width, size.height) {
        return Err(PipelineError::InferenceFailure(alloc::format!(
            "backend returned {}x{}, requested {}x{}",
            image.width(),
            image.height(),
            size.width,
            size.height
        )));
    }
    let image = image.to_channels(3).map_err(|e| PipelineError::InferenceFailure(alloc::format!("{e}")))?;
    screen(image, gate)
}

pub fn inpaint(
    backend: &dyn GenerativeBackend,
    image: &RasterImage,
    mask: &MaskImage,
    prompt: &Prompt,
    params: &GenerationParams,
    gate: SafetyGate<'_>,
) -> Result<Generated, PipelineError> {
    require(backend, Capability::Inpaint)?;
    match validate_mask(mask.plane(), image).status {
        MaskStatus::Ok => {}
        MaskStatus::Empty => return Err(PipelineError::EmptyMask),
        MaskStatus::DimensionMismatch | MaskStatus::NotBinary => {
            return Err(PipelineError::DimensionMismatch {
                width: image.width(),
                height: image.height(),
                mask_width: mask.width(),
                mask_height: mask.height(),
            })
        }
    }
    let raw = backend.inpaint(image, mask, prompt, params)?;
    if (raw.width(), raw.height()) != (image.width(), image.height()) {
        return Err(PipelineError::InferenceFailure(alloc::format!(
            "backend returned {}x{} for a {}x{} input",
            raw.width(),
            raw.height(),
            image.width(),
            image.height()
        )));
    }
    let raw = raw.to_channels(image.channels()).map_err(|e| PipelineError::InferenceFailure(alloc::format!("{e}")))?;
    screen(composite(image, &raw, mask), gate)
}

/// `generated` where the mask is 255, `original` where it is 0.
///
/// # Panics
///
/// If the three inputs do not share width, height and (for the images)
/// channel count.
pub fn composite(original: &RasterImage, generated: &RasterImage, mask: &MaskImage) -> RasterImage {
    assert_eq!(original.shape_tuple(), generated.shape_tuple(), "composite inputs differ in shape");
    assert_eq!((original.width(), original.height()), (mask.width(), mask.height()), "mask size differs");
    let c = original.channels() as usize;
    let mut out: Vec<u8> = original.pixels().to_vec();
    for ((dst, src), &m) in out.chunks_exact_mut(c).zip(generated.pixels().chunks_exact(c)).zip(mask.plane().data()) {
        if m == MASK_ON {
            dst.copy_from_slice(src);
        }
    }
    RasterImage::new(original.width(), original.height(), original.channels(), out).expect("geometry unchanged")
}

impl RasterImage {
    fn shape_tuple(&self) -> (u32, u32, u8) {
        (self.width(), self.height(), self.channels())
    }
}
