mod common;

use std::io::{Read, Write};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use atelier::config::SidecarConfig;
use atelier::privacy::{Endpoint, ViolationKind};
use atelier::sidecar::{read_frame, serve_unix, write_frame, Response, StubSidecar};
use atelier::store::AuditLog;
use atelier::studio::{EdgeRequest, GenerateRequest, InpaintRequest, StrokeMaskRequest};
use atelier::{ServiceConfig, Studio};
use atelier_core::{Stroke, StrokePoint};

use common::draft_png;

fn spawn_sidecar(dir: &Path, handler: StubSidecar) -> PathBuf {
    let path = dir.join("models.sock");
    let listener = UnixListener::bind(&path).unwrap();
    std::thread::spawn(move || serve_unix(listener, Arc::new(handler)));
    path
}

fn config(data: &Path, endpoint: Endpoint, local_only: bool) -> ServiceConfig {
    ServiceConfig {
        data_dir: data.into(),
        local_only,
        sidecar: Some(SidecarConfig { endpoint, timeout_ms: 10_000 }),
        ..ServiceConfig::default()
    }
}

/// Runs refinement and adaptation; returns (edges, artwork, adapted) hashes.
fn run(st: &Studio, detector: &str, backend: &str) -> (String, String, String) {
    let id = st.create_session("p-3").unwrap().id().to_string();
    st.advance_phase(&id, "ii").unwrap();
    let draft = st.upload_draft(&id, &draft_png(120, 90), Some("image/png")).unwrap();
    let edges = st
        .extract_edges(&id, EdgeRequest { draft_id: draft.artifact_id.to_string(), detector: Some(detector.into()), threshold: None })
        .unwrap();
    let art = st
        .generate(
            &id,
            GenerateRequest {
                edge_id: edges.artifact_id.to_string(),
                prompt: "harbour".into(),
                backend: Some(backend.into()),
                ..Default::default()
            },
        )
        .unwrap();
    st.advance_phase(&id, "iii").unwrap();
    let stroke = Stroke::add(vec![StrokePoint::new(100, 100), StrokePoint::new(300, 200)], 40);
    let mask = st.add_mask_strokes(&id, StrokeMaskRequest { artwork_id: art.output_artifact.to_string(), strokes: vec![stroke] }).unwrap();
    let adapted = st
        .inpaint(
            &id,
            InpaintRequest {
                artwork_id: art.output_artifact.to_string(),
                mask_id: mask.artifact_id.to_string(),
                prompt: "harbour at night".into(),
                backend: Some(backend.into()),
                ..Default::default()
            },
        )
        .unwrap();
    assert_eq!(adapted.backend_name, backend);
    (edges.artifact_id.to_string(), art.output_artifact.to_string(), adapted.output_artifact.to_string())
}

#[test]
fn sidecar_backend_and_detector_match_in_process_stub() {
    let dir = tempfile::tempdir().unwrap();
    let sock = spawn_sidecar(dir.path(), StubSidecar::new("sd-local"));
    let st = Studio::builder(config(&dir.path().join("data"), Endpoint::Unix(sock), true)).build().unwrap();
    let names: Vec<String> = st.backends().into_iter().map(|d| d.name).collect();
    assert_eq!(names, ["sd-local", "stub"]);

    let remote = run(&st, "neural", "sd-local");
    let local = run(&st, "gradient", "stub");
    assert_eq!(remote, local);
    assert!(st.privacy_violations().is_empty());
}

#[test]
fn non_local_sidecar_is_refused_under_the_guard() {
    let dir = tempfile::tempdir().unwrap();
    let sock = spawn_sidecar(dir.path(), StubSidecar::remote("cloud"));
    let data = dir.path().join("data");
    let err = Studio::builder(config(&data, Endpoint::Unix(sock.clone()), true)).build().err().unwrap();
    assert_eq!(err.code(), "NonLocalBackendRefused");
    let audit = atelier::store::Store::open(&data).unwrap().read_audit(AuditLog::Privacy).unwrap();
    assert_eq!(audit.len(), 1);
    assert_eq!(audit[0]["kind"], "non_local_backend");

    let st = Studio::builder(config(&dir.path().join("open"), Endpoint::Unix(sock), false)).build().unwrap();
    assert!(st.backends().iter().any(|d| d.name == "cloud" && !d.local_only));
}

#[test]
fn outbound_endpoint_is_aborted_before_connecting() {
    let dir = tempfile::tempdir().unwrap();
    let endpoint: Endpoint = "tcp:203.0.113.7:7000".parse().unwrap();
    let data = dir.path().join("data");
    let err = Studio::builder(config(&data, endpoint, true)).build().err().unwrap();
    assert_eq!(err.code(), "GuardViolation");
    let audit = atelier::store::Store::open(&data).unwrap().read_audit(AuditLog::Privacy).unwrap();
    assert_eq!(audit.len(), 1);
    assert_eq!(audit[0]["kind"], "outbound_connection");
    assert!(audit[0]["detail"].as_str().unwrap().contains("203.0.113.7"));
}

#[test]
fn unreachable_sidecar_fails_startup() {
    let dir = tempfile::tempdir().unwrap();
    let err =
        Studio::builder(config(&dir.path().join("data"), Endpoint::Unix(dir.path().join("absent.sock")), true)).build().err().unwrap();
    assert_eq!(err.code(), "SidecarUnavailable");
}

#[test]
fn guard_counts_stay_zero_for_local_traffic() {
    let dir = tempfile::tempdir().unwrap();
    let sock = spawn_sidecar(dir.path(), StubSidecar::new("sd-local"));
    let st = Studio::builder(config(&dir.path().join("data"), Endpoint::Unix(sock), true)).build().unwrap();
    run(&st, "neural", "sd-local");
    assert_eq!(st.guard().count(ViolationKind::OutboundConnection), 0);
}

#[test]
fn malformed_frames_get_error_responses() {
    let dir = tempfile::tempdir().unwrap();
    let sock = spawn_sidecar(dir.path(), StubSidecar::new("x"));
    let mut conn = UnixStream::connect(&sock).unwrap();

    write_frame(&mut conn, b"{\"op\":\"teleport\"}").unwrap();
    let reply: Response = serde_json::from_slice(&read_frame(&mut conn).unwrap().unwrap()).unwrap();
    assert!(matches!(reply, Response::Error { ref code, .. } if code == "BadRequest"), "{reply:?}");

    write_frame(&mut conn, b"{\"op\":\"describe\"}").unwrap();
    let reply: serde_json::Value = serde_json::from_slice(&read_frame(&mut conn).unwrap().unwrap()).unwrap();
    assert_eq!(reply["status"], "ok");
    assert_eq!(reply["descriptor"]["name"], "x");

    write_frame(&mut conn, b"{\"op\":\"detect_edges\",\"image\":\"%%%\"}").unwrap();
    let reply: serde_json::Value = serde_json::from_slice(&read_frame(&mut conn).unwrap().unwrap()).unwrap();
    assert_eq!(reply["status"], "error");

    conn.write_all(&u32::MAX.to_be_bytes()).unwrap();
    let mut rest = Vec::new();
    let _ = conn.read_to_end(&mut rest);
    assert!(rest.is_empty());
}
