//! Service configuration: a TOML file overlaid with `ATELIER_*` environment
//! variables.
//!
//! ```toml
//! listen_address = "127.0.0.1:7860"
//! data_dir = "atelier-data"
//! local_only = true
//! safety_policy = "log"          # off | log | block
//! backend_allowlist = []         # empty allows every registered backend
//! default_backend = "stub"
//! queue_depth = 4
//! queue_timeout_ms = 30000
//!
//! [default_params]
//! steps = 30
//! guidance_scale = 7.5
//!
//! [sidecar]
//! endpoint = "unix:/run/atelier/models.sock"
//! ```

use std::fs;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use atelier_core::{ConfigSnapshot, GenerationParams, PartialParams, SafetyPolicy};
use serde::Deserialize;
use thiserror::Error;

use crate::privacy::Endpoint;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7860";
pub const DEFAULT_DATA_DIR: &str = "atelier-data";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SidecarConfig {
    pub endpoint: Endpoint,
    pub timeout_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    pub listen_address: String,
    pub data_dir: PathBuf,
    pub local_only: bool,
    pub safety_policy: SafetyPolicy,
    pub default_params: GenerationParams,
    pub backend_allowlist: Vec<String>,
    pub default_backend: String,
    pub queue_depth: usize,
    pub queue_timeout_ms: u64,
    pub sidecar: Option<SidecarConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen_address: DEFAULT_LISTEN.into(),
            data_dir: DEFAULT_DATA_DIR.into(),
            local_only: true,
            safety_policy: SafetyPolicy::Log,
            default_params: GenerationParams::default(),
            backend_allowlist: Vec::new(),
            default_backend: atelier_core::stub::STUB_BACKEND_NAME.into(),
            queue_depth: 4,
            queue_timeout_ms: 30_000,
            sidecar: None,
        }
    }
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    listen_address: Option<String>,
    data_dir: Option<PathBuf>,
    local_only: Option<bool>,
    safety_policy: Option<SafetyPolicy>,
    #[serde(default)]
    default_params: PartialParams,
    backend_allowlist: Option<Vec<String>>,
    default_backend: Option<String>,
    queue_depth: Option<usize>,
    queue_timeout_ms: Option<u64>,
    sidecar: Option<RawSidecar>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSidecar {
    endpoint: String,
    timeout_ms: Option<u64>,
}

/// Splits `host:port`, accepting `[v6]:port`.
pub fn split_host_port(addr: &str) -> Option<(&str, u16)> {
    let (host, port) = addr.rsplit_once(':')?;
    let port = port.parse().ok()?;
    let host = host.strip_prefix('[').and_then(|h| h.strip_suffix(']')).unwrap_or(host);
    (!host.is_empty()).then_some((host, port))
}

/// Loopback by literal address or the name `localhost`; other names are
/// not resolved, since resolving them would itself reach the network.
pub fn is_loopback_host(host: &str) -> bool {
    host.eq_ignore_ascii_case("localhost") || IpAddr::from_str(host).is_ok_and(|ip| ip.is_loopback())
}

fn parse_bool(name: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::Invalid(format!("{name}={v:?} is not a boolean"))),
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let d = ServiceConfig::default();
        let default_params =
            raw.default_params.resolve(&d.default_params).map_err(|e| ConfigError::Invalid(format!("default_params: {e}")))?;
        let sidecar = match raw.sidecar {
            Some(s) => Some(SidecarConfig {
                endpoint: s.endpoint.parse().map_err(|e| ConfigError::Invalid(format!("sidecar.endpoint: {e}")))?,
                timeout_ms: s.timeout_ms.unwrap_or(120_000),
            }),
            None => None,
        };
        Ok(ServiceConfig {
            listen_address: raw.listen_address.unwrap_or(d.listen_address),
            data_dir: raw.data_dir.unwrap_or(d.data_dir),
            local_only: raw.local_only.unwrap_or(d.local_only),
            safety_policy: raw.safety_policy.unwrap_or(d.safety_policy),
            default_params,
            backend_allowlist: raw.backend_allowlist.unwrap_or_default(),
            default_backend: raw.default_backend.unwrap_or(d.default_backend),
            queue_depth: raw.queue_depth.unwrap_or(d.queue_depth),
            queue_timeout_ms: raw.queue_timeout_ms.unwrap_or(d.queue_timeout_ms),
            sidecar,
        })
    }

    /// Reads the optional config file, then applies environment overrides.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
                Self::from_toml(&text)?
            }
            None => ServiceConfig::default(),
        };
        if let Some(v) = env("ATELIER_DATA_DIR") {
            config.data_dir = v.into();
        }
        if let Some(v) = env("ATELIER_LISTEN") {
            config.listen_address = v;
        }
        if let Some(v) = env("ATELIER_LOCAL_ONLY") {
            config.local_only = parse_bool("ATELIER_LOCAL_ONLY", &v)?;
        }
        if let Some(v) = env("ATELIER_SAFETY") {
            config.safety_policy =
                v.parse().map_err(|_| ConfigError::Invalid(format!("ATELIER_SAFETY={v:?}: expected off, log or block")))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, |k| std::env::var(k).ok())
    }

    /// Shape checks. The loopback requirement is enforced by the privacy
    /// guard, which reports it as a guard violation rather than a config error.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if split_host_port(&self.listen_address).is_none() {
            return Err(ConfigError::Invalid(format!("listen_address {:?} is not host:port", self.listen_address)));
        }
        if self.data_dir.as_os_str().is_empty() {
            return Err(ConfigError::Invalid("data_dir is empty".into()));
        }
        if self.default_backend.trim().is_empty() {
            return Err(ConfigError::Invalid("default_backend is empty".into()));
        }
        if self.queue_timeout_ms == 0 {
            return Err(ConfigError::Invalid("queue_timeout_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            listen_address: self.listen_address.clone(),
            data_dir: self.data_dir.display().to_string(),
            local_only: self.local_only,
            safety_policy: self.safety_policy,
            default_params: self.default_params,
            backend_allowlist: self.backend_allowlist.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults() {
        let c = ServiceConfig::load(None, env(&[])).unwrap();
        assert_eq!(c.listen_address, "127.0.0.1:7860");
        assert!(c.local_only);
        assert_eq!(c.safety_policy, SafetyPolicy::Log);
        assert_eq!(c.queue_depth, 4);
        assert_eq!(c.default_params, GenerationParams::default());
    }

    #[test]
    fn file_then_environment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atelier.toml");
        fs::write(
            &path,
            "listen_address = \"127.0.0.1:9000\"\nsafety_policy = \"block\"\n[default_params]\nsteps = 12\n[sidecar]\nendpoint = \"unix:/tmp/m.sock\"\n",
        )
        .unwrap();
        let c = ServiceConfig::load(Some(&path), env(&[("ATELIER_SAFETY", "off"), ("ATELIER_LOCAL_ONLY", "0")])).unwrap();
        assert_eq!(c.listen_address, "127.0.0.1:9000");
        assert_eq!(c.safety_policy, SafetyPolicy::Off);
        assert!(!c.local_only);
        assert_eq!(c.default_params.steps, 12);
        assert_eq!(c.default_params.guidance_scale, 7.5);
        assert_eq!(c.sidecar.unwrap().endpoint, Endpoint::Unix("/tmp/m.sock".into()));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ServiceConfig::from_toml("bogus = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(ServiceConfig::from_toml("[default_params]\nsteps = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ServiceConfig::load(None, env(&[("ATELIER_LISTEN", "nowhere")])), Err(ConfigError::Invalid(_))));
        assert!(matches!(ServiceConfig::load(None, env(&[("ATELIER_SAFETY", "loud")])), Err(ConfigError::Invalid(_))));
        assert!(matches!(ServiceConfig::load(None, env(&[("ATELIER_LOCAL_ONLY", "maybe")])), Err(ConfigError::Invalid(_))));
        assert!(matches!(ServiceConfig::load(Some(Path::new("/nonexistent/a.toml")), env(&[])), Err(ConfigError::Read { .. })));
    }

    #[test]
    fn host_parsing() {
        assert_eq!(split_host_port("[::1]:80"), Some(("::1", 80)));
        assert_eq!(split_host_port("localhost:7860"), Some(("localhost", 7860)));
        assert_eq!(split_host_port(":80"), None);
        assert!(is_loopback_host("127.0.0.2"));
        assert!(is_loopback_host("::1"));
        assert!(!is_loopback_host("0.0.0.0"));
        assert!(!is_loopback_host("example.org"));
    }
}
