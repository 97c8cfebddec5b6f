//! Local-only enforcement.
//!
//! When active, the guard refuses non-loopback listen addresses, refuses
//! backends that do not attest `local_only`, and vets every outbound
//! connection made on behalf of the pipeline. Refusals are kept in an
//! in-memory audit list and handed to an optional sink.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::config::{is_loopback_host, split_host_port};

/// Where an out-of-process component listens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Unix(PathBuf),
    Tcp { host: String, port: u16 },
}

impl FromStr for Endpoint {
    type Err = String;

    /// `unix:/path/to.sock`, `tcp:host:port` or bare `host:port`.
    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(path) = s.strip_prefix("unix:") {
            if path.is_empty() {
                return Err("empty socket path".into());
            }
            return Ok(Endpoint::Unix(path.into()));
        }
        let addr = s.strip_prefix("tcp:").unwrap_or(s);
        let (host, port) = split_host_port(addr).ok_or_else(|| format!("{s:?} is neither unix:<path> nor host:port"))?;
        Ok(Endpoint::Tcp { host: host.to_string(), port })
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Unix(p) => write!(f, "unix:{}", p.display()),
            Endpoint::Tcp { host, port } if host.contains(':') => write!(f, "tcp:[{host}]:{port}"),
            Endpoint::Tcp { host, port } => write!(f, "tcp:{host}:{port}"),
        }
    }
}

impl Endpoint {
    pub fn is_local(&self) -> bool {
        match self {
            Endpoint::Unix(_) => true,
            Endpoint::Tcp { host, .. } => is_loopback_host(host),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonLoopbackBind,
    NonLocalBackend,
    OutboundConnection,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub at: DateTime<Utc>,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("privacy guard: {detail}")]
pub struct GuardViolation {
    pub kind: ViolationKind,
    pub detail: String,
}

type Sink = Box<dyn Fn(&Violation) + Send + Sync>;

pub struct PrivacyGuard {
    active: bool,
    violations: Mutex<Vec<Violation>>,
    sink: Option<Sink>,
}

impl fmt::Debug for PrivacyGuard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivacyGuard").field("active", &self.active).field("violations", &self.violations()).finish()
    }
}

impl PrivacyGuard {
    pub fn new(active: bool) -> Self {
        PrivacyGuard { active, violations: Mutex::new(Vec::new()), sink: None }
    }

    pub fn with_sink(mut self, sink: impl Fn(&Violation) + Send + Sync + 'static) -> Self {
        self.sink = Some(Box::new(sink));
        self
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    fn record(&self, kind: ViolationKind, detail: String) -> GuardViolation {
        let v = Violation { at: Utc::now(), kind, detail: detail.clone() };
        if let Some(sink) = &self.sink {
            sink(&v);
        }
        self.violations.lock().unwrap_or_else(|e| e.into_inner()).push(v);
        GuardViolation { kind, detail }
    }

    pub fn check_bind(&self, listen_address: &str) -> Result<(), GuardViolation> {
        if !self.active {
            return Ok(());
        }
        match split_host_port(listen_address) {
            Some((host, _)) if is_loopback_host(host) => Ok(()),
            _ => Err(self.record(
                ViolationKind::NonLoopbackBind,
                format!("local_only forbids listening on {listen_address}; bind a loopback address"),
            )),
        }
    }

    /// Records that a backend without a locality attestation was turned away.
    pub fn note_refused_backend(&self, name: &str) -> GuardViolation {
        self.record(ViolationKind::NonLocalBackend, format!("backend {name:?} does not attest local_only"))
    }

    /// Must be called before opening any connection on the pipeline's behalf.
    pub fn authorize_connect(&self, endpoint: &Endpoint) -> Result<(), GuardViolation> {
        if !self.active || endpoint.is_local() {
            return Ok(());
        }
        Err(self.record(ViolationKind::OutboundConnection, format!("outbound connection to {endpoint} aborted")))
    }

    pub fn violations(&self) -> Vec<Violation> {
        self.violations.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.lock().unwrap_or_else(|e| e.into_inner()).iter().filter(|v| v.kind == kind).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn endpoint_parsing() {
        assert_eq!("unix:/tmp/s".parse(), Ok(Endpoint::Unix("/tmp/s".into())));
        assert_eq!("tcp:127.0.0.1:9".parse(), Ok(Endpoint::Tcp { host: "127.0.0.1".into(), port: 9 }));
        assert_eq!("[::1]:9".parse::<Endpoint>().unwrap().to_string(), "tcp:[::1]:9");
        assert!("unix:".parse::<Endpoint>().is_err());
        assert!("nope".parse::<Endpoint>().is_err());
    }

    #[test]
    fn active_guard_refuses_and_records() {
        let hits = Arc::new(AtomicUsize::new(0));
        let h = hits.clone();
        let guard = PrivacyGuard::new(true).with_sink(move |_| {
            h.fetch_add(1, Ordering::SeqCst);
        });
        assert!(guard.check_bind("127.0.0.1:7860").is_ok());
        assert!(guard.check_bind("localhost:80").is_ok());
        assert_eq!(guard.check_bind("0.0.0.0:7860").unwrap_err().kind, ViolationKind::NonLoopbackBind);
        assert!(guard.authorize_connect(&"unix:/run/x.sock".parse().unwrap()).is_ok());
        assert!(guard.authorize_connect(&"127.0.0.1:1".parse().unwrap()).is_ok());
        let err = guard.authorize_connect(&"203.0.113.9:443".parse().unwrap()).unwrap_err();
        assert_eq!(err.kind, ViolationKind::OutboundConnection);
        guard.note_refused_backend("cloud");
        assert_eq!(guard.violations().len(), 3);
        assert_eq!(guard.count(ViolationKind::OutboundConnection), 1);
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn inactive_guard_allows_everything() {
        let guard = PrivacyGuard::new(false);
        assert!(guard.check_bind("0.0.0.0:80").is_ok());
        assert!(guard.authorize_connect(&"api.example.org:443".parse().unwrap()).is_ok());
        assert!(guard.violations().is_empty());
    }
}
