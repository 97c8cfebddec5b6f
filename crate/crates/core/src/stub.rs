//! Deterministic stand-in for the neural backends.
//!
//! Outputs are defined bit-exactly so they can serve as test oracles:
//!
//! * base colour: the first three bytes of
//!   `SHA-256(prompt_text ‖ 0x00 ‖ seed as u64 little-endian)`. Prompt text
//!   cannot contain NUL, so the encoding is unambiguous.
//! * sketch to image: the edge map is resampled to the output size, then
//!   each channel is `(255·(255 − e) + c·e + 127) / 255` (integer division),
//!   the base colour `c` laid over white with opacity `e/255`.
//! * inpaint: masked pixels take the base colour (luma of it for grayscale
//!   images, alpha 255 for RGBA), unmasked pixels are copied.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::backend::{BackendDescriptor, BackendError, Capability, GenerativeBackend};
use crate::edges::EdgeMap;
use crate::mask::MaskImage;
use crate::prompt::{GenerationParams, OutputSize, Prompt};
use crate::raster::{luma, RasterImage};

pub const STUB_BACKEND_NAME: &str = "stub";

pub fn base_color(prompt_text: &str, seed: u64) -> [u8; 3] {
    let mut hasher = Sha256::new();
    hasher.update(prompt_text.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    [digest[0], digest[1], digest[2]]
}

/// Base colour over white, weighted by edge intensity.
pub fn stub_generate(edges: &EdgeMap, prompt_text: &str, seed: u64, size: OutputSize) -> Result<RasterImage, BackendError> {
    let edges = edges.resampled(size.width, size.height).map_err(|e| BackendError::InferenceFailure(alloc::format!("{e}")))?;
    let color = base_color(prompt_text, seed);
    let mut pixels = Vec::with_capacity(edges.plane().data().len() * 3);
    for &e in edges.plane().data() {
        let e = e as u32;
        for c in color {
            pixels.push(((255 * (255 - e) + c as u32 * e + 127) / 255) as u8);
        }
    }
    RasterImage::new(size.width, size.height, 3, pixels).map_err(|e| BackendError::InferenceFailure(alloc::format!("{e}")))
}

/// Fills masked pixels with the base colour.
///
/// # Panics
///
/// If the mask and image dimensions differ.
pub fn stub_inpaint(image: &RasterImage, mask: &MaskImage, prompt_text: &str, seed: u64) -> RasterImage {
    assert_eq!((image.width(), image.height()), (mask.width(), mask.height()), "mask/image size mismatch");
    let [r, g, b] = base_color(prompt_text, seed);
    let fill: Vec<u8> = match image.channels() {
        1 => vec![luma(r, g, b)],
        3 => vec![r, g, b],
        _ => vec![r, g, b, 255],
    };
    let c = fill.len();
    let mut pixels = image.pixels().to_vec();
    for (px, &m) in pixels.chunks_exact_mut(c).zip(mask.plane().data()) {
        if m == crate::mask::MASK_ON {
            px.copy_from_slice(&fill);
        }
    }
    RasterImage::new(image.width(), image.height(), image.channels(), pixels).expect("same geometry as input")
}

#[derive(Clone, Debug)]
pub struct StubBackend {
    descriptor: BackendDescriptor,
}

impl StubBackend {
    pub fn new() -> Self {
        Self::named(STUB_BACKEND_NAME)
    }

    pub fn named(name: impl Into<String>) -> Self {
        let capabilities: BTreeSet<Capability> = [Capability::SketchToImage, Capability::Inpaint].into_iter().collect();
        StubBackend {
            descriptor: BackendDescriptor {
                name: name.into(),
                capabilities,
                local_only: true,
                model_ids: vec![String::from("atelier-stub/1")],
                max_concurrency: None,
            },
        }
    }
}

impl Default for StubBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl GenerativeBackend for StubBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn sketch_to_image(&self, edges: &EdgeMap, prompt: &Prompt, params: &GenerationParams) -> Result<RasterImage, BackendError> {
        stub_generate(edges, prompt.text(), params.seed, params.output_size)
    }

    fn inpaint(
        &self,
        image: &RasterImage,
        mask: &MaskImage,
        prompt: &Prompt,
        params: &GenerationParams,
    ) -> Result<RasterImage, BackendError> {
        if (image.width(), image.height()) != (mask.width(), mask.height()) {
            return Err(BackendError::InferenceFailure(alloc::format!(
                "mask {}x{} does not match image {}x{}",
                mask.width(),
                mask.height(),
                image.width(),
                image.height()
            )));
        }
        Ok(stub_inpaint(image, mask, prompt.text(), params.seed))
    }
}
