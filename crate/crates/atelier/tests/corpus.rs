use std::collections::BTreeMap;
use std::path::Path;

use atelier::corpus::{
    bundled_manifest_path, reproduce, CaseStatus, CorpusManifest, ReproduceOptions, REPORT_FILE, REPORT_SCHEMA, SUMMARY_FILE,
};
use atelier_core::ArtifactId;

const OUTPUTS: [&str; 5] = ["draft", "edges", "artwork", "mask", "adapted"];

fn golden() -> BTreeMap<String, BTreeMap<String, String>> {
    let path = bundled_manifest_path().parent().unwrap().join("golden/stub.json");
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn bundled_manifest_matches_frozen_stub_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let summary = reproduce(&bundled_manifest_path(), &ReproduceOptions::new(dir.path())).unwrap();
    assert_eq!(summary.schema, REPORT_SCHEMA);
    assert_eq!(summary.failed, 0);

    let golden = golden();
    assert_eq!(golden.len(), summary.cases.len());
    for case in &summary.cases {
        assert_eq!(case.status, CaseStatus::Ok);
        assert_eq!(&case.artifacts, &golden[&case.id], "case {}", case.id);
        for name in OUTPUTS {
            let bytes = std::fs::read(dir.path().join(&case.id).join(format!("{name}.png"))).unwrap();
            assert_eq!(ArtifactId::for_bytes(&bytes).to_string(), case.artifacts[name], "{}/{name}", case.id);
        }
        let seed = [("1", 101), ("2", 202), ("3", 303)].into_iter().find(|(id, _)| *id == case.id).unwrap().1;
        assert_eq!((case.params["refine"].seed, case.params["adapt"].seed), (seed, seed));
    }

    let on_disk: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk["schema"], REPORT_SCHEMA);
    assert_eq!(on_disk["cases"].as_array().unwrap().len(), 3);
}

#[test]
fn report_is_a_three_column_grid_of_embedded_images() {
    let dir = tempfile::tempdir().unwrap();
    reproduce(&bundled_manifest_path(), &ReproduceOptions::new(dir.path())).unwrap();
    let html = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    let manifest = CorpusManifest::load(&bundled_manifest_path()).unwrap();

    assert_eq!(html.matches("<tr>").count(), 1 + manifest.cases.len());
    assert_eq!(html.matches("src=\"data:image/png;base64,").count(), 3 * manifest.cases.len());
    assert!(!html.contains("src=\"http") && !html.contains("src=\"/"));
    assert!(!html.contains("not produced"));
    for case in &manifest.cases {
        assert!(html.contains(&case.refine_prompt.replace('\'', "&#39;")));
        assert!(html.contains(&case.adapt_prompt.replace('\'', "&#39;")));
    }
}

#[test]
fn seed_override_moves_generated_outputs_only() {
    let dir = tempfile::tempdir().unwrap();
    let opts = ReproduceOptions { seed_override: Some(99), ..ReproduceOptions::new(dir.path()) };
    let summary = reproduce(&bundled_manifest_path(), &opts).unwrap();
    assert_eq!(summary.seed_override, Some(99));
    let golden = golden();
    for case in &summary.cases {
        let g = &golden[&case.id];
        assert_eq!(case.artifacts["draft"], g["draft"]);
        assert_eq!(case.artifacts["edges"], g["edges"]);
        assert_ne!(case.artifacts["artwork"], g["artwork"]);
        assert_eq!(case.params["refine"].seed, 99);
    }
}

fn write_manifest(dir: &Path, cases: serde_json::Value) -> std::path::PathBuf {
    let draft = bundled_manifest_path().parent().unwrap().join("drafts/2a-spiral.png");
    std::fs::copy(draft, dir.join("d.png")).unwrap();
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_vec(&serde_json::json!({ "cases": cases })).unwrap()).unwrap();
    path
}

#[test]
fn a_failing_case_is_reported_without_stopping_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let case = |id: &str, x: i64| {
        serde_json::json!({
            "id": id,
            "draft_path": "d.png",
            "refine_prompt": "a spiral of ink",
            "adapt_prompt": "the spiral <in> gold",
            "strokes": [{"points": [[x, x]], "radius": 10}],
        })
    };
    let manifest = write_manifest(dir.path(), serde_json::json!([case("good", 100), case("off-canvas", 5000)]));
    let out = dir.path().join("out");
    let summary = reproduce(&manifest, &ReproduceOptions::new(&out)).unwrap();
    assert_eq!(summary.failed, 1);
    assert_eq!(summary.cases[0].status, CaseStatus::Ok);
    let bad = &summary.cases[1];
    assert_eq!(bad.status, CaseStatus::Failed);
    assert!(bad.error.as_deref().unwrap().starts_with("mask: OutOfBounds: "), "{:?}", bad.error);
    assert!(bad.artifacts.contains_key("artwork") && !bad.artifacts.contains_key("adapted"));

    let html = std::fs::read_to_string(out.join(REPORT_FILE)).unwrap();
    assert!(html.contains("class=\"error\""));
    assert!(html.contains("the spiral &lt;in&gt; gold"));
    assert_eq!(html.matches("not produced").count(), 1);
}
