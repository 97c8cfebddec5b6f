mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use atelier::codec::decode_raster;
use atelier::corpus::bundled_manifest_path;
use atelier::studio::{EdgeRequest, GenerateRequest};

fn atelier(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_atelier"));
    cmd.args(args).env_remove("ATELIER_CONFIG").env_remove("ATELIER_DATA_DIR").env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    atelier(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn corpus(rel: &str) -> PathBuf {
    bundled_manifest_path().parent().unwrap().join(rel)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn edges_writes_a_single_channel_map_of_the_same_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("edges.png");
    let draft = corpus("drafts/1a-head-in-pot.png");
    let o = run(&["edges", s(&draft), s(&out), "--threshold", "40"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let src = decode_raster(&std::fs::read(&draft).unwrap()).unwrap();
    let map = decode_raster(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!((map.width(), map.height(), map.channels()), (src.width(), src.height(), 1));
    assert!(map.pixels().iter().all(|&v| v == 0 || v == 255));
    assert!(map.pixels().contains(&255));

    let o = run(&["edges", s(&draft), s(&out), "--detector", "neural"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("DetectorUnavailable"));

    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not an image").unwrap();
    assert_eq!(code(&run(&["edges", s(&junk), s(&out)])), 2);
}

#[test]
fn mask_from_strokes_rasterizes_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("strokes.json");
    let out = dir.path().join("mask.png");
    std::fs::write(
        &input,
        r#"{"width": 96, "height": 64, "strokes": [{"points": [[10, 10], [80, 10]], "radius": 4}, {"points": [[40, 10]], "radius": 2, "mode": "erase"}]}"#,
    )
    .unwrap();
    let o = run(&["mask-from-strokes", s(&input), s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mask = decode_raster(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!((mask.width(), mask.height(), mask.channels()), (96, 64, 1));
    let at = |x: u32, y: u32| mask.pixels()[(y * 96 + x) as usize];
    assert_eq!(at(10, 14), 255);
    assert_eq!(at(10, 15), 0);
    assert_eq!(at(84, 10), 255);
    assert_eq!(at(40, 10), 0);
    assert_eq!(at(43, 10), 255);

    std::fs::write(&input, r#"{"width": 96, "height": 64, "strokes": [], "colour": 1}"#).unwrap();
    assert_eq!(code(&run(&["mask-from-strokes", s(&input), s(&out)])), 2);
    std::fs::write(&input, r#"{"width": 96, "height": 64, "strokes": [{"points": [], "radius": 3}]}"#).unwrap();
    assert_eq!(code(&run(&["mask-from-strokes", s(&input), s(&out)])), 2);
}

#[test]
fn session_export_import_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let id = {
        let st = common::studio(&data);
        let id = st.create_session("p-9").unwrap().id().to_string();
        st.advance_phase(&id, "ii").unwrap();
        let draft = st.upload_draft(&id, &common::draft_png(128, 96), None).unwrap();
        let edges =
            st.extract_edges(&id, EdgeRequest { draft_id: draft.artifact_id.to_string(), detector: None, threshold: None }).unwrap();
        st.generate(&id, GenerateRequest { edge_id: edges.artifact_id.to_string(), prompt: "dunes".into(), ..Default::default() }).unwrap();
        id
    };
    let archive = dir.path().join("s.tar");
    let o = run(&["session", "export", &id, "--data-dir", s(&data), "--out", s(&archive)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["verify", s(&archive)]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["session_id"], id.as_str());
    assert_eq!(report["artifacts_checked"], 3);

    let other = dir.path().join("other");
    let o = run(&["session", "import", s(&archive), "--data-dir", s(&other)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains(&id));
    assert_eq!(code(&run(&["session", "import", s(&archive), "--data-dir", s(&other)])), 0);

    let again = dir.path().join("again.tar");
    assert_eq!(code(&run(&["session", "export", &id, "--data-dir", s(&other), "--out", s(&again)])), 0);
    assert_eq!(std::fs::read(&archive).unwrap(), std::fs::read(&again).unwrap());

    common::studio(&other).advance_phase(&id, "iii").unwrap();
    let o = run(&["session", "import", s(&archive), "--data-dir", s(&other)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ImmutableRecord"));

    assert_eq!(code(&run(&["session", "export", "nope", "--data-dir", s(&data), "--out", s(&again)])), 1);
    assert_eq!(code(&run(&["session", "export", "bad id!", "--data-dir", s(&data), "--out", s(&again)])), 2);

    let mut bytes = std::fs::read(&archive).unwrap();
    let tail = bytes.len() - 1100;
    let pos = (0..tail).rev().find(|&i| bytes[i] != 0).unwrap();
    bytes[pos] ^= 0x55;
    let tampered = dir.path().join("tampered.tar");
    std::fs::write(&tampered, bytes).unwrap();
    let o = run(&["verify", s(&tampered)]);
    assert_eq!(code(&o), 4);
    let third = dir.path().join("third");
    assert_eq!(code(&run(&["session", "import", s(&tampered), "--data-dir", s(&third)])), 4);
}

#[test]
fn reproduce_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["reproduce", "--out", s(&out), "--parallel", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for id in ["1", "2", "3"] {
        assert!(stdout.contains(&format!("case {id}: ok")), "{stdout}");
    }
    assert!(out.join("summary.json").is_file() && out.join("report.html").is_file());

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"cases": []}"#).unwrap();
    assert_eq!(code(&run(&["reproduce", "--manifest", s(&empty), "--out", s(&out)])), 2);
    std::fs::write(&empty, "{").unwrap();
    assert_eq!(code(&run(&["reproduce", "--manifest", s(&empty), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["reproduce", "--manifest", s(&dir.path().join("absent.json")), "--out", s(&out)])), 1);
    assert_eq!(code(&run(&["reproduce", "--out", s(&out), "--backend", "sdxl", "--parallel", "2"])), 2);
    assert_eq!(code(&run(&["reproduce", "--out", s(&out), "--backend", "sdxl"])), 2);
    assert_eq!(code(&run(&["reproduce", "--out", s(&out), "--parallel", "0"])), 2);
}

#[test]
fn reproduce_through_the_sidecar_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let sock = dir.path().join("m.sock");
    let mut child = atelier(&["sidecar", "--socket", s(&sock), "--name", "sd-local"]).stdout(Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.contains("listening on unix:"), "{line}");

    let endpoint = format!("unix:{}", sock.display());
    let via = dir.path().join("via");
    let o = run(&["reproduce", "--out", s(&via), "--backend", "sd-local", "--detector", "neural", "--sidecar", &endpoint]);
    let direct = dir.path().join("direct");
    let o2 = run(&["reproduce", "--out", s(&direct)]);
    let edges =
        run(&["edges", s(&corpus("drafts/2a-spiral.png")), s(&dir.path().join("e.png")), "--detector", "neural", "--sidecar", &endpoint]);
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&o2), 0);
    assert_eq!(code(&edges), 0);
    for case in ["1", "2", "3"] {
        for f in ["edges.png", "artwork.png", "adapted.png"] {
            assert_eq!(std::fs::read(via.join(case).join(f)).unwrap(), std::fs::read(direct.join(case).join(f)).unwrap(), "{case}/{f}");
        }
    }

    let o = run(&[
        "edges",
        s(&corpus("drafts/2a-spiral.png")),
        s(&dir.path().join("e.png")),
        "--detector",
        "neural",
        "--sidecar",
        "tcp:198.51.100.4:80",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("DetectorUnavailable"));
}

#[test]
fn serve_refuses_public_bind_and_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = atelier(&["serve"]).env("ATELIER_DATA_DIR", dir.path()).env("ATELIER_LISTEN", "0.0.0.0:0").output().unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "listen_address = 7\n").unwrap();
    assert_eq!(code(&run(&["serve", "--config", s(&cfg)])), 2);
    let o = atelier(&["serve"]).env("ATELIER_DATA_DIR", dir.path()).env("ATELIER_SAFETY", "loud").output().unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn serve_answers_on_loopback() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = atelier(&["serve"])
        .env("ATELIER_DATA_DIR", dir.path())
        .env("ATELIER_LISTEN", "127.0.0.1:0")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap_or_else(|| panic!("{line}")).to_string();

    let deadline = Instant::now() + Duration::from_secs(10);
    let reply = loop {
        match TcpStream::connect(&addr) {
            Ok(mut conn) => {
                conn.write_all(b"GET /v1/healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
                let mut reply = String::new();
                conn.read_to_string(&mut reply).unwrap();
                break reply;
            }
            Err(e) if Instant::now() > deadline => panic!("{e}"),
            Err(_) => std::thread::sleep(Duration::from_millis(50)),
        }
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
}
