//! Out-of-process backend protocol.
//!
//! A sidecar process (typically hosting neural models in another runtime)
//! listens on a Unix socket or a loopback TCP port. Each message is a
//! 4-byte big-endian length followed by that many bytes of UTF-8 JSON.
//! Images travel as base64-encoded PNG.
//!
//! Requests carry an `op` tag:
//!
//! ```json
//! {"op":"describe"}
//! {"op":"sketch_to_image","edges":"<png>","prompt":{"text":"..."},"params":{...}}
//! {"op":"inpaint","image":"<png>","mask":"<png>","prompt":{"text":"..."},"params":{...}}
//! {"op":"detect_edges","image":"<png>"}
//! ```
//!
//! Responses carry a `status` tag:
//!
//! ```json
//! {"status":"ok","descriptor":{"name":"sd15","capabilities":["inpaint"],"local_only":true}}
//! {"status":"ok","image":"<png>"}
//! {"status":"error","code":"InferenceFailure","message":"CUDA out of memory"}
//! ```
//!
//! A connection may carry any number of request/response pairs.

use std::io::{self, Read, Write};
use std::net::TcpStream;
#[cfg(unix)]
use std::os::unix::net::{UnixListener, UnixStream};
use std::sync::Arc;
use std::time::Duration;

use atelier_core::{
    BackendDescriptor, BackendError, EdgeDetector, EdgeError, EdgeMap, GenerationParams, GenerativeBackend, GradientDetector, MaskImage,
    Prompt, RasterImage, StubBackend,
};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_gray, decode_raster, encode_gray_png, encode_png};
use crate::privacy::{Endpoint, GuardViolation, PrivacyGuard};

pub const MAX_FRAME_BYTES: usize = 256 * 1024 * 1024;
pub const NEURAL_DETECTOR: &str = "neural";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Describe,
    SketchToImage { edges: String, prompt: Prompt, params: GenerationParams },
    Inpaint { image: String, mask: String, prompt: Prompt, params: GenerationParams },
    DetectEdges { image: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Response {
    Ok {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        descriptor: Option<BackendDescriptor>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image: Option<String>,
    },
    Error {
        code: String,
        message: String,
    },
}

impl Response {
    pub fn image(png: &[u8]) -> Self {
        Response::Ok { descriptor: None, image: Some(B64.encode(png)) }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Response::Error { code: code.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error(transparent)]
    Guard(#[from] GuardViolation),
    #[error("sidecar connection failed: {0}")]
    Io(#[from] io::Error),
    #[error("sidecar protocol error: {0}")]
    Protocol(String),
    #[error("sidecar reported {code}: {message}")]
    Remote { code: String, message: String },
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    if payload.len() > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

trait Stream: Read + Write + Send {}
impl<T: Read + Write + Send> Stream for T {}

/// Client side of the protocol. Every connection is vetted by the guard.
#[derive(Clone, Debug)]
pub struct SidecarClient {
    endpoint: Endpoint,
    guard: Arc<PrivacyGuard>,
    timeout: Duration,
}

impl SidecarClient {
    pub fn new(endpoint: Endpoint, guard: Arc<PrivacyGuard>, timeout: Duration) -> Self {
        SidecarClient { endpoint, guard, timeout }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    fn connect(&self) -> Result<Box<dyn Stream>, SidecarError> {
        self.guard.authorize_connect(&self.endpoint)?;
        match &self.endpoint {
            #[cfg(unix)]
            Endpoint::Unix(path) => {
                let s = UnixStream::connect(path)?;
                s.set_read_timeout(Some(self.timeout))?;
                s.set_write_timeout(Some(self.timeout))?;
                Ok(Box::new(s))
            }
            #[cfg(not(unix))]
            Endpoint::Unix(_) => Err(SidecarError::Protocol("unix sockets are not supported on this platform".into())),
            Endpoint::Tcp { host, port } => {
                let s = TcpStream::connect((host.as_str(), *port))?;
                s.set_read_timeout(Some(self.timeout))?;
                s.set_write_timeout(Some(self.timeout))?;
                Ok(Box::new(s))
            }
        }
    }

    pub fn call(&self, request: &Request) -> Result<Response, SidecarError> {
        let mut stream = self.connect()?;
        let body = serde_json::to_vec(request).expect("requests serialize");
        write_frame(&mut stream, &body)?;
        let reply = read_frame(&mut stream)?.ok_or_else(|| SidecarError::Protocol("connection closed before reply".into()))?;
        let response: Response = serde_json::from_slice(&reply).map_err(|e| SidecarError::Protocol(e.to_string()))?;
        match response {
            Response::Error { code, message } => Err(SidecarError::Remote { code, message }),
            ok => Ok(ok),
        }
    }

    pub fn describe(&self) -> Result<BackendDescriptor, SidecarError> {
        match self.call(&Request::Describe)? {
            Response::Ok { descriptor: Some(d), .. } => Ok(d),
            _ => Err(SidecarError::Protocol("describe reply has no descriptor".into())),
        }
    }

    fn image_call(&self, request: &Request) -> Result<Vec<u8>, SidecarError> {
        match self.call(request)? {
            Response::Ok { image: Some(b64), .. } => {
                B64.decode(b64.as_bytes()).map_err(|e| SidecarError::Protocol(format!("bad base64 image: {e}")))
            }
            _ => Err(SidecarError::Protocol("reply has no image".into())),
        }
    }
}

fn failure(e: impl std::fmt::Display) -> BackendError {
    BackendError::InferenceFailure(e.to_string())
}

/// A generative backend hosted by a sidecar.
#[derive(Debug)]
pub struct SidecarBackend {
    client: SidecarClient,
    descriptor: BackendDescriptor,
}

impl SidecarBackend {
    /// Asks the sidecar to describe itself.
    pub fn connect(client: SidecarClient) -> Result<Self, SidecarError> {
        let descriptor = client.describe()?;
        Ok(SidecarBackend { client, descriptor })
    }
}

impl GenerativeBackend for SidecarBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn sketch_to_image(&self, edges: &EdgeMap, prompt: &Prompt, params: &GenerationParams) -> Result<RasterImage, BackendError> {
        let png = encode_gray_png(edges.plane()).map_err(failure)?;
        let req = Request::SketchToImage { edges: B64.encode(png), prompt: prompt.clone(), params: *params };
        let out = self.client.image_call(&req).map_err(failure)?;
        decode_raster(&out).map_err(failure)
    }

    fn inpaint(
        &self,
        image: &RasterImage,
        mask: &MaskImage,
        prompt: &Prompt,
        params: &GenerationParams,
    ) -> Result<RasterImage, BackendError> {
        let req = Request::Inpaint {
            image: B64.encode(encode_png(image).map_err(failure)?),
            mask: B64.encode(encode_gray_png(mask.plane()).map_err(failure)?),
            prompt: prompt.clone(),
            params: *params,
        };
        let out = self.client.image_call(&req).map_err(failure)?;
        decode_raster(&out).map_err(failure)
    }
}

/// The neural edge detector, served by a sidecar. Without one configured
/// it reports itself unavailable.
#[derive(Debug, Default)]
pub struct NeuralDetector {
    client: Option<SidecarClient>,
}

impl NeuralDetector {
    pub fn new(client: Option<SidecarClient>) -> Self {
        NeuralDetector { client }
    }
}

impl EdgeDetector for NeuralDetector {
    fn name(&self) -> &str {
        NEURAL_DETECTOR
    }

    fn detect(&self, image: &RasterImage) -> Result<EdgeMap, EdgeError> {
        let client = self
            .client
            .as_ref()
            .ok_or_else(|| EdgeError::DetectorUnavailable("the neural detector needs a model sidecar; none is configured".into()))?;
        let png = encode_png(image).map_err(|e| EdgeError::InferenceFailure(e.to_string()))?;
        let out = match client.image_call(&Request::DetectEdges { image: B64.encode(png) }) {
            Ok(bytes) => bytes,
            Err(e @ (SidecarError::Io(_) | SidecarError::Guard(_))) => return Err(EdgeError::DetectorUnavailable(e.to_string())),
            Err(e) => return Err(EdgeError::InferenceFailure(e.to_string())),
        };
        let plane = decode_gray(&out).map_err(|e| EdgeError::InferenceFailure(e.to_string()))?;
        if (plane.width(), plane.height()) != (image.width(), image.height()) {
            return Err(EdgeError::InferenceFailure(format!(
                "edge map is {}x{}, source is {}x{}",
                plane.width(),
                plane.height(),
                image.width(),
                image.height()
            )));
        }
        Ok(EdgeMap::from_plane(plane))
    }
}

/// Server side of the protocol.
pub trait SidecarHandler: Send + Sync {
    fn handle(&self, request: Request) -> Response;
}

/// Answers requests on one connection until the peer hangs up.
pub fn serve_stream(mut stream: impl Read + Write, handler: &dyn SidecarHandler) -> io::Result<()> {
    while let Some(frame) = read_frame(&mut stream)? {
        let response = match serde_json::from_slice::<Request>(&frame) {
            Ok(req) => handler.handle(req),
            Err(e) => Response::error("BadRequest", e.to_string()),
        };
        write_frame(&mut stream, &serde_json::to_vec(&response).expect("responses serialize"))?;
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection.
#[cfg(unix)]
pub fn serve_unix(listener: UnixListener, handler: Arc<dyn SidecarHandler>) -> io::Result<()> {
    for conn in listener.incoming() {
        let conn = conn?;
        let handler = handler.clone();
        std::thread::spawn(move || {
            if let Err(e) = serve_stream(conn, handler.as_ref()) {
                tracing::warn!("sidecar connection ended: {e}");
            }
        });
    }
    Ok(())
}

/// Reference sidecar built on the stub backend and the gradient detector.
/// Useful for exercising the protocol without model weights.
pub struct StubSidecar {
    backend: StubBackend,
    descriptor: BackendDescriptor,
}

impl StubSidecar {
    pub fn new(name: &str) -> Self {
        let backend = StubBackend::named(name);
        let descriptor = backend.descriptor().clone();
        StubSidecar { backend, descriptor }
    }

    /// Same behaviour, but declares itself not local-only.
    pub fn remote(name: &str) -> Self {
        let mut s = Self::new(name);
        s.descriptor.local_only = false;
        s
    }

    fn run(&self, request: Request) -> Result<Vec<u8>, Response> {
        let bad = |e: &dyn std::fmt::Display| Response::error("BadRequest", e.to_string());
        let decode = |b64: &str| B64.decode(b64.as_bytes()).map_err(|e| bad(&e));
        let inference = |e: &dyn std::fmt::Display| Response::error("InferenceFailure", e.to_string());
        match request {
            Request::Describe => unreachable!("handled by caller"),
            Request::SketchToImage { edges, prompt, params } => {
                let edges = EdgeMap::from_plane(decode_gray(&decode(&edges)?).map_err(|e| bad(&e))?);
                let img = self.backend.sketch_to_image(&edges, &prompt, &params).map_err(|e| inference(&e))?;
                encode_png(&img).map_err(|e| inference(&e))
            }
            Request::Inpaint { image, mask, prompt, params } => {
                let image = decode_raster(&decode(&image)?).map_err(|e| bad(&e))?;
                let mask = MaskImage::new(decode_gray(&decode(&mask)?).map_err(|e| bad(&e))?).map_err(|e| bad(&e))?;
                if (mask.width(), mask.height()) != (image.width(), image.height()) {
                    return Err(bad(&"mask and image sizes differ"));
                }
                let img = self.backend.inpaint(&image, &mask, &prompt, &params).map_err(|e| inference(&e))?;
                encode_png(&img).map_err(|e| inference(&e))
            }
            Request::DetectEdges { image } => {
                let image = decode_raster(&decode(&image)?).map_err(|e| bad(&e))?;
                let edges = GradientDetector.detect(&image).map_err(|e| inference(&e))?;
                encode_gray_png(edges.plane()).map_err(|e| inference(&e))
            }
        }
    }
}

impl SidecarHandler for StubSidecar {
    fn handle(&self, request: Request) -> Response {
        if request == Request::Describe {
            return Response::Ok { descriptor: Some(self.descriptor.clone()), image: None };
        }
        match self.run(request) {
            Ok(png) => Response::image(&png),
            Err(r) => r,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{}").unwrap();
        write_frame(&mut buf, b"[1]").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 2]);
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"{}");
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"[1]");
        assert!(read_frame(&mut r).unwrap().is_none());
        let huge = (MAX_FRAME_BYTES as u32 + 1).to_be_bytes();
        assert!(read_frame(&mut &huge[..]).is_err());
    }

    #[test]
    fn wire_shapes() {
        assert_eq!(serde_json::to_string(&Request::Describe).unwrap(), r#"{"op":"describe"}"#);
        let r = Request::DetectEdges { image: "AA==".into() };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"op":"detect_edges","image":"AA=="}"#);
        let e = Response::error("InferenceFailure", "oom");
        assert_eq!(serde_json::to_string(&e).unwrap(), r#"{"status":"error","code":"InferenceFailure","message":"oom"}"#);
    }

    #[test]
    fn stub_handler_in_memory() {
        let handler = StubSidecar::new("side");
        let mut wire = Vec::new();
        write_frame(&mut wire, br#"{"op":"describe"}"#).unwrap();
        write_frame(&mut wire, b"garbage").unwrap();
        struct Duplex(io::Cursor<Vec<u8>>, Vec<u8>);
        impl Read for Duplex {
            fn read(&mut self, b: &mut [u8]) -> io::Result<usize> {
                self.0.read(b)
            }
        }
        impl Write for Duplex {
            fn write(&mut self, b: &[u8]) -> io::Result<usize> {
                self.1.write(b)
            }
            fn flush(&mut self) -> io::Result<()> {
                Ok(())
            }
        }
        let mut d = Duplex(io::Cursor::new(wire), Vec::new());
        serve_stream(&mut d, &handler).unwrap();
        let mut out = &d.1[..];
        let first: Response = serde_json::from_slice(&read_frame(&mut out).unwrap().unwrap()).unwrap();
        assert!(matches!(first, Response::Ok { descriptor: Some(ref desc), .. } if desc.name == "side"));
        let second: Response = serde_json::from_slice(&read_frame(&mut out).unwrap().unwrap()).unwrap();
        assert!(matches!(second, Response::Error { ref code, .. } if code == "BadRequest"));
    }

    #[test]
    fn neural_without_sidecar_is_unavailable() {
        let img = RasterImage::filled(64, 64, [1, 2, 3]).unwrap();
        assert!(matches!(NeuralDetector::default().detect(&img), Err(EdgeError::DetectorUnavailable(_))));
    }

    #[test]
    fn guard_blocks_remote_endpoint_before_connecting() {
        let guard = Arc::new(PrivacyGuard::new(true));
        let client = SidecarClient::new("198.51.100.7:9000".parse().unwrap(), guard.clone(), Duration::from_millis(50));
        assert!(matches!(client.describe(), Err(SidecarError::Guard(_))));
        assert_eq!(guard.violations().len(), 1);
    }
}
