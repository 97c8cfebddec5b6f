#![allow(dead_code)]

use std::path::Path;

use atelier::codec::encode_png;
use atelier::{ServiceConfig, Studio};
use atelier_core::RasterImage;
use axum::body::{Body, Bytes};
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const BOUNDARY: &str = "atelier-test-boundary";

/// White canvas with a black square and a red bar.
pub fn draft_image(w: u32, h: u32) -> RasterImage {
    let mut px = vec![255u8; (w * h * 3) as usize];
    for y in 0..h {
        for x in 0..w {
            let i = ((y * w + x) * 3) as usize;
            if (w / 4..w / 2).contains(&x) && (h / 4..h / 2).contains(&y) {
                px[i..i + 3].fill(0);
            } else if (h * 2 / 3..h * 2 / 3 + 6).contains(&y) && x > w / 5 {
                px[i..i + 3].copy_from_slice(&[200, 20, 20]);
            }
        }
    }
    RasterImage::new(w, h, 3, px).unwrap()
}

pub fn draft_png(w: u32, h: u32) -> Vec<u8> {
    encode_png(&draft_image(w, h)).unwrap()
}

pub fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig { data_dir: dir.into(), ..ServiceConfig::default() }
}

pub fn studio(dir: &Path) -> Studio {
    Studio::builder(config(dir)).build().unwrap()
}

pub fn json_request(method: Method, uri: &str, body: &Value) -> Request<Body> {
    Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(serde_json::to_vec(body).unwrap()))
        .unwrap()
}

pub fn get(uri: &str) -> Request<Body> {
    Request::builder().uri(uri).body(Body::empty()).unwrap()
}

pub struct Part<'a> {
    pub name: &'a str,
    pub filename: Option<&'a str>,
    pub content_type: Option<&'a str>,
    pub data: &'a [u8],
}

pub fn multipart_request(uri: &str, parts: &[Part<'_>]) -> Request<Body> {
    let mut body = Vec::new();
    for p in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{}\"", p.name).as_bytes());
        if let Some(f) = p.filename {
            body.extend_from_slice(format!("; filename=\"{f}\"").as_bytes());
        }
        body.extend_from_slice(b"\r\n");
        if let Some(ct) = p.content_type {
            body.extend_from_slice(format!("Content-Type: {ct}\r\n").as_bytes());
        }
        body.extend_from_slice(b"\r\n");
        body.extend_from_slice(p.data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    Request::builder()
        .method(Method::POST)
        .uri(uri)
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

pub fn image_upload(uri: &str, png: &[u8]) -> Request<Body> {
    multipart_request(uri, &[Part { name: "image", filename: Some("draft.png"), content_type: Some("image/png"), data: png }])
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap()
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, HeaderMap, Bytes) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    (status, headers, body)
}

pub async fn send_json(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (status, _, body) = send(app, req).await;
    let value = if body.is_empty() { Value::Null } else { serde_json::from_slice(&body).unwrap_or(Value::Null) };
    (status, value)
}

/// The refinement-then-adaptation flow over HTTP; returns the session id
/// and every (step, status) pair.
pub async fn full_flow(app: &Router) -> (String, Vec<(&'static str, StatusCode)>) {
    use serde_json::json;
    let mut steps = Vec::new();
    let (s, v) = send_json(app, json_request(Method::POST, "/v1/sessions", &json!({"participant_alias": "p-01"}))).await;
    steps.push(("create session", s));
    let id = v["session_id"].as_str().unwrap_or_default().to_string();
    let base = format!("/v1/sessions/{id}");

    let (s, _) = send_json(app, json_request(Method::POST, &format!("{base}/phase"), &json!({"target": "artistic_work"}))).await;
    steps.push(("phase ii", s));
    let (s, v) = send_json(app, image_upload(&format!("{base}/drafts"), &draft_png(160, 120))).await;
    steps.push(("upload draft", s));
    let draft = v["artifact_id"].as_str().unwrap_or_default().to_string();
    let (s, v) = send_json(app, json_request(Method::POST, &format!("{base}/edges"), &json!({"draft_id": draft}))).await;
    steps.push(("edges", s));
    let edges = v["artifact_id"].as_str().unwrap_or_default().to_string();
    let (s, v) = send_json(
        app,
        json_request(
            Method::POST,
            &format!("{base}/generate"),
            &json!({"edge_id": edges, "prompt": "a lighthouse at dusk", "params": {"seed": 7, "output_size": {"width": 320, "height": 256}}}),
        ),
    )
    .await;
    steps.push(("generate", s));
    let artwork = v["output_artifact"].as_str().unwrap_or_default().to_string();
    let (s, _) = send_json(app, json_request(Method::POST, &format!("{base}/phase"), &json!({"target": "iii"}))).await;
    steps.push(("phase iii", s));
    let (s, v) = send_json(
        app,
        json_request(
            Method::POST,
            &format!("{base}/masks"),
            &json!({"artwork_id": artwork, "strokes": [{"points": [[30, 30], [90, 50]], "radius": 12}]}),
        ),
    )
    .await;
    steps.push(("mask", s));
    let mask = v["artifact_id"].as_str().unwrap_or_default().to_string();
    let (s, _) = send_json(
        app,
        json_request(
            Method::POST,
            &format!("{base}/inpaint"),
            &json!({"artwork_id": artwork, "mask_id": mask, "prompt": "the lighthouse lit up", "params": {"seed": 8}}),
        ),
    )
    .await;
    steps.push(("inpaint", s));
    let (s, _) = send_json(app, json_request(Method::POST, &format!("{base}/phase"), &json!({"target": "retrospective"}))).await;
    steps.push(("phase iv", s));
    (id, steps)
}
