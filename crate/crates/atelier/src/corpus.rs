//! Batch reproduction of the bundled example corpus.
//!
//! Each case runs a full session through [`Studio`]: draft upload, edge
//! extraction, refinement, masking and adaptation. The outputs land in
//! `<out>/<case id>/`, next to a contact sheet (`report.html`, one row per
//! case: draft, refined artwork, adapted artwork) and a machine summary
//! (`summary.json`, schema `report/1`).

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use atelier_core::edges::GRADIENT_DETECTOR;
use atelier_core::stub::STUB_BACKEND_NAME;
use atelier_core::{GenerationParams, PartialParams, Prompt, SessionPhase, Stroke};
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ServiceConfig, SidecarConfig};
use crate::studio::{EdgeRequest, GenerateRequest, InpaintRequest, StrokeMaskRequest, Studio, StudioError};

pub const REPORT_SCHEMA: &str = "report/1";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.html";

/// The manifest shipped with the crate.
pub fn bundled_manifest_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join("manifest.json")
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("malformed corpus manifest: {0}")]
    Parse(String),
    #[error("invalid corpus manifest: {0}")]
    Invalid(String),
    #[error("invalid options: {0}")]
    Options(String),
    #[error(transparent)]
    Studio(#[from] StudioError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusCase {
    pub id: String,
    /// Relative to the manifest's directory.
    pub draft_path: PathBuf,
    pub refine_prompt: String,
    pub adapt_prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strokes: Option<Vec<Stroke>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<PathBuf>,
    #[serde(default)]
    pub params: PartialParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub cases: Vec<CorpusCase>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let bytes = fs::read(path).map_err(|source| CorpusError::Read { path: path.into(), source })?;
        let mut m: CorpusManifest = serde_json::from_slice(&bytes).map_err(|e| CorpusError::Parse(e.to_string()))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.cases.is_empty() {
            return Err(CorpusError::Invalid("manifest has no cases".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.cases {
            let bad = |m: String| CorpusError::Invalid(format!("case {:?}: {m}", c.id));
            if c.id.is_empty() || !c.id.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_') {
                return Err(bad("id must be non-empty [A-Za-z0-9_-]".into()));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(bad("duplicate id".into()));
            }
            Prompt::new(c.refine_prompt.as_str()).map_err(|e| bad(format!("refine_prompt: {e}")))?;
            Prompt::new(c.adapt_prompt.as_str()).map_err(|e| bad(format!("adapt_prompt: {e}")))?;
            if !self.resolve(&c.draft_path).is_file() {
                return Err(bad(format!("draft {} not found", c.draft_path.display())));
            }
            match (&c.strokes, &c.mask_path) {
                (Some(s), None) if !s.is_empty() => {}
                (None, Some(p)) if self.resolve(p).is_file() => {}
                (None, Some(p)) => return Err(bad(format!("mask {} not found", p.display()))),
                _ => return Err(bad("exactly one of non-empty strokes or mask_path is required".into())),
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ReproduceOptions {
    pub backend: String,
    pub detector: String,
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub parallel: usize,
    pub sidecar: Option<SidecarConfig>,
}

impl ReproduceOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        ReproduceOptions {
            backend: STUB_BACKEND_NAME.into(),
            detector: GRADIENT_DETECTOR.into(),
            out_dir: out_dir.into(),
            seed_override: None,
            parallel: 1,
            sidecar: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub id: String,
    pub status: CaseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Output name (`draft`, `edges`, `artwork`, `mask`, `adapted`) → artifact hash.
    pub artifacts: BTreeMap<String, String>,
    /// `refine` / `adapt` → resolved parameters.
    pub params: BTreeMap<String, GenerationParams>,
    pub wall_time_ms: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub schema: String,
    pub backend: String,
    pub detector: String,
    pub seed_override: Option<u64>,
    pub failed: usize,
    pub cases: Vec<CaseSummary>,
}

impl ReportSummary {
    /// The summary with wall times cleared, for run-to-run comparison.
    pub fn without_timings(&self) -> ReportSummary {
        let mut s = self.clone();
        for c in &mut s.cases {
            c.wall_time_ms.clear();
        }
        s
    }
}

fn step(name: &'static str) -> impl Fn(StudioError) -> String {
    move |e| format!("{name}: {}: {e}", e.code())
}

struct CaseRun<'a> {
    studio: &'a Studio,
    manifest: &'a CorpusManifest,
    opts: &'a ReproduceOptions,
}

impl CaseRun<'_> {
    fn run(&self, case: &CorpusCase) -> CaseSummary {
        let mut summary = CaseSummary {
            id: case.id.clone(),
            status: CaseStatus::Ok,
            error: None,
            artifacts: BTreeMap::new(),
            params: BTreeMap::new(),
            wall_time_ms: BTreeMap::new(),
        };
        if let Err(e) = self.steps(case, &mut summary) {
            summary.status = CaseStatus::Failed;
            summary.error = Some(e);
        }
        summary
    }

    fn emit(&self, case: &CorpusCase, name: &str, hash: &str, summary: &mut CaseSummary) -> Result<(), String> {
        let (bytes, _) = self.studio.artifact(hash).map_err(|e| e.to_string())?;
        let dir = self.opts.out_dir.join(&case.id);
        fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let path = dir.join(format!("{name}.png"));
        fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
        summary.artifacts.insert(name.into(), hash.into());
        Ok(())
    }

    fn steps(&self, case: &CorpusCase, summary: &mut CaseSummary) -> Result<(), String> {
        let st = self.studio;
        let mut params = case.params;
        if let Some(seed) = self.opts.seed_override {
            params.seed = Some(seed);
        }

        let session = st.create_session(&format!("corpus-{}", case.id)).map_err(step("session"))?;
        let sid = session.id().as_str().to_string();
        st.advance_phase(&sid, SessionPhase::ArtisticWork.as_str()).map_err(step("phase"))?;

        let draft_path = self.manifest.resolve(&case.draft_path);
        let bytes = fs::read(&draft_path).map_err(|e| format!("draft {}: {e}", draft_path.display()))?;
        let draft = st.upload_draft(&sid, &bytes, None).map_err(step("draft"))?;
        self.emit(case, "draft", draft.artifact_id.as_str(), summary)?;

        let edge_req =
            EdgeRequest { draft_id: draft.artifact_id.as_str().into(), detector: Some(self.opts.detector.clone()), threshold: None };
        let edges = st.extract_edges(&sid, edge_req).map_err(step("edges"))?;
        self.emit(case, "edges", edges.artifact_id.as_str(), summary)?;

        let refine = st
            .generate(
                &sid,
                GenerateRequest {
                    edge_id: edges.artifact_id.as_str().into(),
                    prompt: case.refine_prompt.clone(),
                    params: Some(params),
                    backend: Some(self.opts.backend.clone()),
                    ..GenerateRequest::default()
                },
            )
            .map_err(step("refine"))?;
        summary.params.insert("refine".into(), refine.params);
        summary.wall_time_ms.insert("refine".into(), refine.wall_time_ms);
        let artwork = refine.output_artifact.as_str().to_string();
        self.emit(case, "artwork", &artwork, summary)?;

        st.advance_phase(&sid, SessionPhase::Adaptation.as_str()).map_err(step("phase"))?;
        let mask = match (&case.strokes, &case.mask_path) {
            (Some(strokes), _) => st.add_mask_strokes(&sid, StrokeMaskRequest { artwork_id: artwork.clone(), strokes: strokes.clone() }),
            (None, Some(p)) => {
                let path = self.manifest.resolve(p);
                let bytes = fs::read(&path).map_err(|e| format!("mask {}: {e}", path.display()))?;
                st.add_mask_png(&sid, &artwork, &bytes)
            }
            (None, None) => return Err("case has no mask".into()),
        }
        .map_err(step("mask"))?;
        self.emit(case, "mask", mask.artifact_id.as_str(), summary)?;

        let adapt = st
            .inpaint(
                &sid,
                InpaintRequest {
                    artwork_id: artwork,
                    mask_id: mask.artifact_id.as_str().into(),
                    prompt: case.adapt_prompt.clone(),
                    params: Some(params),
                    backend: Some(self.opts.backend.clone()),
                    ..InpaintRequest::default()
                },
            )
            .map_err(step("adapt"))?;
        summary.params.insert("adapt".into(), adapt.params);
        summary.wall_time_ms.insert("adapt".into(), adapt.wall_time_ms);
        self.emit(case, "adapted", adapt.output_artifact.as_str(), summary)?;

        st.advance_phase(&sid, SessionPhase::Retrospective.as_str()).map_err(step("phase"))?;
        Ok(())
    }
}

/// Runs every case and writes the report and summary. Per-case failures
/// are recorded in the summary; only setup problems are returned as errors.
pub fn reproduce(manifest_path: &Path, opts: &ReproduceOptions) -> Result<ReportSummary, CorpusError> {
    let manifest = CorpusManifest::load(manifest_path)?;
    if opts.parallel == 0 {
        return Err(CorpusError::Options("--parallel must be at least 1".into()));
    }
    if opts.parallel > 1 && opts.backend != STUB_BACKEND_NAME {
        return Err(CorpusError::Options(format!("--parallel is only supported with the {STUB_BACKEND_NAME} backend")));
    }

    let store_dir = tempfile::tempdir().map_err(|source| CorpusError::Write { path: std::env::temp_dir(), source })?;
    let config = ServiceConfig {
        data_dir: store_dir.path().into(),
        default_backend: opts.backend.clone(),
        sidecar: opts.sidecar.clone(),
        ..ServiceConfig::default()
    };
    let studio = Studio::builder(config).build()?;
    if !studio.backends().iter().any(|d| d.name == opts.backend) {
        return Err(CorpusError::Options(format!("backend {:?} is not registered", opts.backend)));
    }
    if !studio.detectors().contains(&opts.detector) {
        return Err(CorpusError::Options(format!("unknown edge detector {:?}", opts.detector)));
    }
    fs::create_dir_all(&opts.out_dir).map_err(|source| CorpusError::Write { path: opts.out_dir.clone(), source })?;

    let runner = CaseRun { studio: &studio, manifest: &manifest, opts };
    let slots: Vec<Mutex<Option<CaseSummary>>> = manifest.cases.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..opts.parallel.min(manifest.cases.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(case) = manifest.cases.get(i) else { break };
                let result = runner.run(case);
                if let Some(e) = &result.error {
                    tracing::warn!(case = %case.id, "case failed: {e}");
                }
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(result);
            });
        }
    });
    let cases: Vec<CaseSummary> =
        slots.into_iter().map(|s| s.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every case ran")).collect();

    let summary = ReportSummary {
        schema: REPORT_SCHEMA.into(),
        backend: opts.backend.clone(),
        detector: opts.detector.clone(),
        seed_override: opts.seed_override,
        failed: cases.iter().filter(|c| c.status == CaseStatus::Failed).count(),
        cases,
    };
    write_out(&opts.out_dir.join(SUMMARY_FILE), &summary_json(&summary))?;
    write_out(&opts.out_dir.join(REPORT_FILE), render_report(&manifest, &summary, &opts.out_dir).as_bytes())?;
    Ok(summary)
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    fs::write(path, bytes).map_err(|source| CorpusError::Write { path: path.into(), source })
}

pub fn summary_json(summary: &ReportSummary) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(summary).expect("summary serializes");
    out.push(b'\n');
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn image_cell(out_dir: &Path, case: &CaseSummary, name: &str, caption: Option<&str>) -> String {
    let mut cell = String::from("<td>");
    match fs::read(out_dir.join(&case.id).join(format!("{name}.png"))) {
        Ok(bytes) if case.artifacts.contains_key(name) => {
            let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
            let _ = write!(cell, "<img alt=\"{} {name}\" src=\"data:image/png;base64,{b64}\">", escape(&case.id));
        }
        _ => cell.push_str("<div class=\"missing\">not produced</div>"),
    }
    if let Some(c) = caption {
        let _ = write!(cell, "<p>{}</p>", escape(c));
    }
    cell.push_str("</td>");
    cell
}

/// Self-contained HTML contact sheet. Holds no timings, so it is as
/// deterministic as the images it embeds.
pub fn render_report(manifest: &CorpusManifest, summary: &ReportSummary, out_dir: &Path) -> String {
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Corpus reproduction</title>\n");
    h.push_str("<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:.5em;vertical-align:top;width:280px}img{width:256px;height:auto;display:block}p{font-size:.85em}.missing,.error{color:#a00}</style>\n</head>\n<body>\n");
    let _ = writeln!(
        h,
        "<h1>Corpus reproduction</h1>\n<p>backend <code>{}</code>, edge detector <code>{}</code>{}</p>",
        escape(&summary.backend),
        escape(&summary.detector),
        summary.seed_override.map(|s| format!(", seed override {s}")).unwrap_or_default()
    );
    h.push_str("<table>\n<tr><th>case</th><th>(a) draft</th><th>(b) refined</th><th>(c) adapted</th></tr>\n");
    for (case, result) in manifest.cases.iter().zip(&summary.cases) {
        let _ = write!(h, "<tr><th>{}", escape(&case.id));
        if let Some(e) = &result.error {
            let _ = write!(h, "<p class=\"error\">{}</p>", escape(e));
        }
        h.push_str("</th>");
        h.push_str(&image_cell(out_dir, result, "draft", None));
        h.push_str(&image_cell(out_dir, result, "artwork", Some(&case.refine_prompt)));
        h.push_str(&image_cell(out_dir, result, "adapted", Some(&case.adapt_prompt)));
        h.push_str("</tr>\n");
    }
    h.push_str("</table>\n</body>\n</html>\n");
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("manifest.json");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn rejects_empty_duplicate_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(dir.path(), r#"{"cases": []}"#);
        assert!(matches!(CorpusManifest::load(&p), Err(CorpusError::Invalid(_))));

        fs::write(dir.path().join("d.png"), b"x").unwrap();
        let case = r#"{"id":"a","draft_path":"d.png","refine_prompt":"r","adapt_prompt":"a","strokes":[{"points":[[1,1]],"radius":2}]}"#;
        let p = write_manifest(dir.path(), &format!(r#"{{"cases": [{case},{case}]}}"#));
        let e = CorpusManifest::load(&p).unwrap_err().to_string();
        assert!(e.contains("duplicate"), "{e}");

        let p = write_manifest(dir.path(), &format!(r#"{{"cases": [{}]}}"#, case.replace("d.png", "nope.png")));
        assert!(CorpusManifest::load(&p).unwrap_err().to_string().contains("not found"));

        let p =
            write_manifest(dir.path(), &format!(r#"{{"cases": [{}]}}"#, case.replace(r#""refine_prompt":"r""#, r#""refine_prompt":"""#)));
        assert!(CorpusManifest::load(&p).unwrap_err().to_string().contains("refine_prompt"));

        let p = write_manifest(dir.path(), r#"{"cases": [{"id":"a","draft_path":"d.png","refine_prompt":"r","adapt_prompt":"a"}]}"#);
        assert!(CorpusManifest::load(&p).unwrap_err().to_string().contains("exactly one"));
    }

    #[test]
    fn html_escaping() {
        assert_eq!(escape("a<b>&\"c'"), "a&lt;b&gt;&amp;&quot;c&#39;");
    }

    #[test]
    fn parallel_needs_stub() {
        let mut opts = ReproduceOptions::new("/nonexistent");
        opts.parallel = 2;
        opts.backend = "other".into();
        let e = reproduce(&bundled_manifest_path(), &opts).unwrap_err();
        assert!(matches!(e, CorpusError::Options(_)), "{e}");
    }
}
