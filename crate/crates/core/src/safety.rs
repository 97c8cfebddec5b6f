//! Content-safety hook applied to every generated image.

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::raster::RasterImage;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SafetyPolicy {
    /// The checker is not consulted.
    Off,
    /// Flagged images are returned and an audit entry is written.
    #[default]
    Log,
    /// Flagged images are quarantined and the request fails.
    Block,
}

impl fmt::Display for SafetyPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SafetyPolicy::Off => "off",
            SafetyPolicy::Log => "log",
            SafetyPolicy::Block => "block",
        })
    }
}

impl core::str::FromStr for SafetyPolicy {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "off" => Ok(SafetyPolicy::Off),
            "log" => Ok(SafetyPolicy::Log),
            "block" => Ok(SafetyPolicy::Block),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SafetyVerdict {
    Pass,
    Flagged { reason: String },
}

impl SafetyVerdict {
    pub fn is_flagged(&self) -> bool {
        matches!(self, SafetyVerdict::Flagged { .. })
    }
}

pub trait SafetyChecker: Send + Sync {
    fn check(&self, image: &RasterImage) -> SafetyVerdict;
}

/// Default checker: passes everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct AllowAll;

impl SafetyChecker for AllowAll {
    fn check(&self, _: &RasterImage) -> SafetyVerdict {
        SafetyVerdict::Pass
    }
}

impl<F> SafetyChecker for F
where
    F: Fn(&RasterImage) -> SafetyVerdict + Send + Sync,
{
    fn check(&self, image: &RasterImage) -> SafetyVerdict {
        self(image)
    }
}

pub fn safety_check(image: &RasterImage, policy: SafetyPolicy, checker: &dyn SafetyChecker) -> SafetyVerdict {
    match policy {
        SafetyPolicy::Off => SafetyVerdict::Pass,
        SafetyPolicy::Log | SafetyPolicy::Block => checker.check(image),
    }
}
