//! Demo-run regression check. Set UPDATE_GOLDEN=1 to rewrite the snapshots.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::{climpact, json};

fn golden_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden"))
}

#[test]
fn demo_run_matches_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = climpact(dir.path(), &["run", "--out", "demo"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("demo");

    let manifest = json(&root.join("manifest.json"));
    let digests: BTreeMap<String, String> = manifest["artifacts"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v["sha256"].as_str().unwrap().to_string()))
        .collect();
    let mut current = BTreeMap::new();
    current.insert("artifacts.json", serde_json::to_string_pretty(&digests).unwrap() + "\n");
    for name in ["summary.json", "impact/summary.json"] {
        current.insert(name, fs::read_to_string(root.join(name)).unwrap());
    }

    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        for (name, text) in &current {
            let path = golden_dir().join(name.replace('/', "_"));
            fs::write(path, text).unwrap();
        }
        return;
    }
    for (name, text) in &current {
        let path = golden_dir().join(name.replace('/', "_"));
        let expected = fs::read_to_string(&path)
            .unwrap_or_else(|_| panic!("missing {}; run with UPDATE_GOLDEN=1", path.display()));
        assert_eq!(text, &expected, "{name} drifted from its snapshot");
    }
}
