//! Text prompts and the generation parameters that make a run reproducible.

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_PROMPT_CHARS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt text is empty")]
    Empty,
    #[error("prompt is {0} characters, limit is {MAX_PROMPT_CHARS}")]
    TooLong(usize),
    #[error("prompt contains control character U+{0:04X}")]
    ControlCharacter(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPrompt")]
pub struct Prompt {
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    negative_text: Option<String>,
}

#[derive(Deserialize)]
struct RawPrompt {
    text: String,
    #[serde(default)]
    negative_text: Option<String>,
}

impl TryFrom<RawPrompt> for Prompt {
    type Error = PromptError;

    fn try_from(raw: RawPrompt) -> Result<Self, PromptError> {
        let prompt = Prompt::new(raw.text)?;
        match raw.negative_text {
            Some(neg) => prompt.with_negative(neg),
            None => Ok(prompt),
        }
    }
}

fn check_text(text: &str) -> Result<(), PromptError> {
    let n = text.chars().count();
    if n > MAX_PROMPT_CHARS {
        return Err(PromptError::TooLong(n));
    }
    if let Some(c) = text.chars().find(|c| c.is_control()) {
        return Err(PromptError::ControlCharacter(c as u32));
    }
    Ok(())
}

impl Prompt {
    pub fn new(text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PromptError::Empty);
        }
        check_text(&text)?;
        Ok(Prompt { text, negative_text: None })
    }

    pub fn with_negative(mut self, negative: impl Into<String>) -> Result<Self, PromptError> {
        let negative = negative.into();
        check_text(&negative)?;
        self.negative_text = (!negative.is_empty()).then_some(negative);
        Ok(self)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn negative_text(&self) -> Option<&str> {
        self.negative_text.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParamsError {
    #[error("steps {0} outside [1, 200]")]
    Steps(u32),
    #[error("guidance_scale {0} outside [0, 30]")]
    GuidanceScale(f64),
    #[error("conditioning_scale {0} outside [0, 2]")]
    ConditioningScale(f64),
    #[error("output size {width}x{height}: each side must be a multiple of 64 in [256, 1536]")]
    OutputSize { width: u32, height: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutputSize {
    pub width: u32,
    pub height: u32,
}

impl OutputSize {
    pub fn validate(self) -> Result<Self, ParamsError> {
        let ok = |d: u32| d.is_multiple_of(64) && (256..=1536).contains(&d);
        if ok(self.width) && ok(self.height) {
            Ok(self)
        } else {
            Err(ParamsError::OutputSize { width: self.width, height: self.height })
        }
    }
}

/// Everything besides the prompt and the conditioning input that determines
/// a generation. Ranges are checked on construction and deserialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct GenerationParams {
    pub seed: u64,
    pub steps: u32,
    pub guidance_scale: f64,
    /// How strongly the output must follow the edge map.
    pub conditioning_scale: f64,
    pub output_size: OutputSize,
}

#[derive(Deserialize)]
struct RawParams {
    seed: u64,
    steps: u32,
    guidance_scale: f64,
    conditioning_scale: f64,
    output_size: OutputSize,
}

impl TryFrom<RawParams> for GenerationParams {
    type Error = ParamsError;

    fn try_from(r: RawParams) -> Result<Self, ParamsError> {
        GenerationParams {
            seed: r.seed,
            steps: r.steps,
            guidance_scale: r.guidance_scale,
            conditioning_scale: r.conditioning_scale,
            output_size: r.output_size,
        }
        .validate()
    }
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            seed: 0,
            steps: 30,
            guidance_scale: 7.5,
            conditioning_scale: 0.8,
            output_size: OutputSize { width: 512, height: 512 },
        }
    }
}

impl GenerationParams {
    pub fn validate(self) -> Result<Self, ParamsError> {
        if !(1..=200).contains(&self.steps) {
            return Err(ParamsError::Steps(self.steps));
        }
        if !(0.0..=30.0).contains(&self.guidance_scale) {
            return Err(ParamsError::GuidanceScale(self.guidance_scale));
        }
        if !(0.0..=2.0).contains(&self.conditioning_scale) {
            return Err(ParamsError::ConditioningScale(self.conditioning_scale));
        }
        self.output_size.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Request-side parameters: any field left out comes from the defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_size: Option<OutputSize>,
}

impl PartialParams {
    pub fn resolve(&self, defaults: &GenerationParams) -> Result<GenerationParams, ParamsError> {
        GenerationParams {
            seed: self.seed.unwrap_or(defaults.seed),
            steps: self.steps.unwrap_or(defaults.steps),
            guidance_scale: self.guidance_scale.unwrap_or(defaults.guidance_scale),
            conditioning_scale: self.conditioning_scale.unwrap_or(defaults.conditioning_scale),
            output_size: self.output_size.unwrap_or(defaults.output_size),
        }
        .validate()
    }
}
