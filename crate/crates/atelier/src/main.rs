use std::fs;
use std::os::unix::net::UnixListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use atelier::archive::{export_session, import_session, verify_archive, ArchiveError};
use atelier::codec::encode_gray_png;
use atelier::config::{ConfigError, ServiceConfig, SidecarConfig};
use atelier::corpus::{bundled_manifest_path, reproduce, CaseStatus, CorpusError, ReproduceOptions};
use atelier::ingest::ingest_image;
use atelier::privacy::{Endpoint, PrivacyGuard};
use atelier::service;
use atelier::sidecar::{serve_unix, NeuralDetector, SidecarClient, StubSidecar, NEURAL_DETECTOR};
use atelier::store::{Store, StoreError};
use atelier::{Studio, StudioError};
use atelier_core::edges::GRADIENT_DETECTOR;
use atelier_core::{rasterize_mask, EdgeDetector, GradientDetector, SessionId, Stroke, StrokeSet};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use tracing_subscriber::EnvFilter;

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_GUARD: u8 = 3;
const EXIT_INTEGRITY: u8 = 4;

/// Local-only co-creative image studio.
#[derive(Parser)]
#[command(name = "atelier", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the /v1 HTTP service.
    Serve {
        /// TOML config; ATELIER_* variables override it.
        #[arg(long, env = "ATELIER_CONFIG")]
        config: Option<PathBuf>,
    },
    /// Reproduce a corpus manifest end to end.
    Reproduce {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "stub")]
        backend: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value = GRADIENT_DETECTOR)]
        detector: String,
        /// Model sidecar endpoint (`unix:/path` or `host:port`).
        #[arg(long)]
        sidecar: Option<String>,
    },
    /// Write the edge map of an image as a single-channel PNG.
    Edges {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = GRADIENT_DETECTOR)]
        detector: String,
        #[arg(long)]
        threshold: Option<u8>,
        #[arg(long)]
        sidecar: Option<String>,
    },
    /// Rasterize `{width, height, strokes}` JSON into a binary mask PNG.
    MaskFromStrokes { strokes: PathBuf, output: PathBuf },
    /// Export or import session archives.
    Session {
        #[command(subcommand)]
        command: SessionCommand,
    },
    /// Re-hash every artifact in an archive against its manifest.
    Verify { archive: PathBuf },
    /// Serve the stub model sidecar on a unix socket.
    Sidecar {
        #[arg(long)]
        socket: PathBuf,
        #[arg(long, default_value = "stub-sidecar")]
        name: String,
        /// Advertise the backend as not local-only.
        #[arg(long, hide = true)]
        remote: bool,
    },
}

#[derive(Subcommand)]
enum SessionCommand {
    Export {
        id: String,
        #[arg(long, env = "ATELIER_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Import {
        archive: PathBuf,
        #[arg(long, env = "ATELIER_DATA_DIR")]
        data_dir: PathBuf,
    },
}

struct Fail(u8, String);

impl Fail {
    fn new(code: u8, e: impl std::fmt::Display) -> Self {
        Fail(code, e.to_string())
    }
}

impl From<StudioError> for Fail {
    fn from(e: StudioError) -> Self {
        let code = match e.code() {
            "GuardViolation" | "NonLocalBackendRefused" | "BackendNotAllowed" => EXIT_GUARD,
            "HashMismatch" | "MissingArtifact" | "StorageCorruption" | "MalformedArchive" | "InvalidManifest" => EXIT_INTEGRITY,
            _ if e.class() == atelier::ErrorClass::Invalid => EXIT_INVALID,
            _ => EXIT_FAILURE,
        };
        Fail(code, format!("{}: {e}", e.code()))
    }
}

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        Fail::new(EXIT_INVALID, e)
    }
}

impl From<ArchiveError> for Fail {
    fn from(e: ArchiveError) -> Self {
        StudioError::from(e).into()
    }
}

impl From<StoreError> for Fail {
    fn from(e: StoreError) -> Self {
        StudioError::from(e).into()
    }
}

impl From<CorpusError> for Fail {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Studio(e) => e.into(),
            CorpusError::Parse(_) | CorpusError::Invalid(_) | CorpusError::Options(_) => Fail::new(EXIT_INVALID, e),
            other => Fail::new(EXIT_FAILURE, other),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Fail> {
    fs::read(path).map_err(|e| Fail(EXIT_FAILURE, format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Fail> {
    fs::write(path, bytes).map_err(|e| Fail(EXIT_FAILURE, format!("cannot write {}: {e}", path.display())))
}

fn endpoint(s: &str) -> Result<Endpoint, Fail> {
    s.parse().map_err(|e: String| Fail(EXIT_INVALID, e))
}

fn serve(config: Option<PathBuf>) -> Result<(), Fail> {
    let config = ServiceConfig::from_env(config.as_deref())?;
    let listen = config.listen_address.clone();
    let studio = Arc::new(Studio::builder(config).build()?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Fail::new(EXIT_FAILURE, e))?;
    rt.block_on(async move {
        let listener =
            tokio::net::TcpListener::bind(&listen).await.map_err(|e| Fail(EXIT_FAILURE, format!("cannot listen on {listen}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Fail::new(EXIT_FAILURE, e))?;
        tracing::info!("listening on http://{addr}");
        println!("listening on http://{addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        service::serve(studio, listener, shutdown).await.map_err(|e| Fail::new(EXIT_FAILURE, e))
    })
}

#[allow(clippy::too_many_arguments)]
fn run_reproduce(
    manifest: Option<PathBuf>,
    backend: String,
    out: PathBuf,
    seed_override: Option<u64>,
    parallel: usize,
    detector: String,
    sidecar: Option<String>,
) -> Result<(), Fail> {
    let manifest = manifest.unwrap_or_else(bundled_manifest_path);
    let sidecar = sidecar.map(|s| endpoint(&s).map(|endpoint| SidecarConfig { endpoint, timeout_ms: 120_000 })).transpose()?;
    let opts = ReproduceOptions { backend, detector, out_dir: out.clone(), seed_override, parallel, sidecar };
    let summary = reproduce(&manifest, &opts)?;
    for c in &summary.cases {
        let timing: Vec<String> = c.wall_time_ms.iter().map(|(k, v)| format!("{k} {v} ms")).collect();
        match c.status {
            CaseStatus::Ok => println!("case {}: ok ({})", c.id, timing.join(", ")),
            CaseStatus::Failed => println!("case {}: FAILED: {}", c.id, c.error.as_deref().unwrap_or("")),
        }
    }
    println!("report written to {}", out.display());
    if summary.failed > 0 {
        return Err(Fail(EXIT_FAILURE, format!("{} of {} cases failed", summary.failed, summary.cases.len())));
    }
    Ok(())
}

fn edges(input: &Path, output: &Path, detector: &str, threshold: Option<u8>, sidecar: Option<String>) -> Result<(), Fail> {
    let image = ingest_image(&read(input)?, None).map_err(|e| Fail::new(EXIT_INVALID, e))?;
    let detector: Box<dyn EdgeDetector> = match detector {
        GRADIENT_DETECTOR => Box::new(GradientDetector),
        NEURAL_DETECTOR => {
            let client = sidecar
                .map(|s| endpoint(&s))
                .transpose()?
                .map(|e| SidecarClient::new(e, Arc::new(PrivacyGuard::new(true)), Duration::from_secs(120)));
            Box::new(NeuralDetector::new(client))
        }
        other => return Err(Fail(EXIT_INVALID, format!("unknown edge detector {other:?}"))),
    };
    let mut map = detector.detect(&image).map_err(StudioError::from)?;
    if let Some(level) = threshold {
        map = map.threshold(level);
    }
    write(output, &encode_gray_png(map.plane()).map_err(|e| Fail::new(EXIT_FAILURE, e))?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrokeFile {
    width: u32,
    height: u32,
    strokes: Vec<Stroke>,
}

fn mask_from_strokes(input: &Path, output: &Path) -> Result<(), Fail> {
    let file: StrokeFile = serde_json::from_slice(&read(input)?).map_err(|e| Fail(EXIT_INVALID, format!("{}: {e}", input.display())))?;
    let mask = rasterize_mask(&StrokeSet::new(file.strokes), file.width, file.height).map_err(StudioError::from)?;
    write(output, &encode_gray_png(mask.plane()).map_err(|e| Fail::new(EXIT_FAILURE, e))?)
}

fn session(cmd: SessionCommand) -> Result<(), Fail> {
    match cmd {
        SessionCommand::Export { id, data_dir, out } => {
            let sid = SessionId::parse(&id).map_err(|e| Fail::new(EXIT_INVALID, e))?;
            let archive = export_session(&Store::open(&data_dir)?, &sid)?;
            write(&out, &archive)?;
            println!("exported session {id} to {}", out.display());
        }
        SessionCommand::Import { archive, data_dir } => {
            let session = import_session(&Store::open(&data_dir)?, &read(&archive)?)?;
            println!("imported session {}", session.id());
        }
    }
    Ok(())
}

fn verify(archive: &Path) -> Result<(), Fail> {
    let report = verify_archive(&read(archive)?);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.is_ok() {
        Ok(())
    } else {
        Err(Fail(EXIT_INTEGRITY, format!("{} problem(s) in {}", report.problems.len(), archive.display())))
    }
}

fn sidecar(socket: &Path, name: &str, remote: bool) -> Result<(), Fail> {
    let _ = fs::remove_file(socket);
    let listener = UnixListener::bind(socket).map_err(|e| Fail(EXIT_FAILURE, format!("cannot bind {}: {e}", socket.display())))?;
    let handler = if remote { StubSidecar::remote(name) } else { StubSidecar::new(name) };
    println!("sidecar {name} listening on unix:{}", socket.display());
    serve_unix(listener, Arc::new(handler)).map_err(|e| Fail::new(EXIT_FAILURE, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let result = match cli.command {
        Command::Serve { config } => serve(config),
        Command::Reproduce { manifest, backend, out, seed_override, parallel, detector, sidecar } => {
            run_reproduce(manifest, backend, out, seed_override, parallel, detector, sidecar)
        }
        Command::Edges { input, output, detector, threshold, sidecar } => edges(&input, &output, &detector, threshold, sidecar),
        Command::MaskFromStrokes { strokes, output } => mask_from_strokes(&strokes, &output),
        Command::Session { command } => session(command),
        Command::Verify { archive } => verify(&archive),
        Command::Sidecar { socket, name, remote } => sidecar(&socket, &name, remote),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, message)) => {
            eprintln!("atelier: {message}");
            ExitCode::from(code)
        }
    }
}
