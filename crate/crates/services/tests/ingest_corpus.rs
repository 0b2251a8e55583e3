//! The XML corpus: valid files convert deterministically to the stored
//! canonical JSON; malformed files fail with their recorded error class.
//! `HRC_BLESS=1` rewrites the stored JSON.

use hrc_services::ingest::{self, IngestError};
use hrc_services::process::{self, ProcessDoc};
use serde_json::Value;
use std::path::{Path, PathBuf};

fn corpus(sub: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/corpus").join(sub)
}

fn xml_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "xml"))
        .collect();
    v.sort();
    v
}

#[test]
fn valid_corpus_converts_deterministically() {
    let files = xml_files(&corpus("valid"));
    assert!(files.len() >= 5, "{} valid files", files.len());
    for f in files {
        let xml = std::fs::read_to_string(&f).unwrap();
        let a = ingest::convert(&xml).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        let b = ingest::convert(&xml).unwrap();
        assert_eq!(a, b);
        assert_eq!(process::validate(&a), Ok(()));
        let json = a.to_canonical_json();
        let back: ProcessDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a, "{}", f.display());
        let stored = f.with_extension("json");
        if std::env::var_os("HRC_BLESS").is_some() {
            std::fs::write(&stored, &json).unwrap();
        } else {
            assert_eq!(std::fs::read_to_string(&stored).unwrap(), json, "{}", f.display());
        }
    }
}

#[test]
fn mold_assembly_shape() {
    let xml = std::fs::read_to_string(corpus("valid/mold-assembly.xml")).unwrap();
    let d = ingest::convert(&xml).unwrap();
    assert_eq!(d.bop.tasks.len(), 5);
    assert_eq!(ingest::agent_hints(&d), vec!["operator-1", "robot-1"]);
    let op40 = d.bop.tasks.iter().find(|t| t.id == "op40").unwrap();
    assert_eq!(op40.predecessors, vec!["op20", "op30"]);
    assert_eq!(op40.parts, vec!["insert-a", "pin-set"]);
    assert_eq!(d.bom.parts.len(), 2);
    assert_eq!(d.bom.tools.len(), 2);
}

#[test]
fn malformed_corpus_yields_error_classes() {
    let expected: Value =
        serde_json::from_str(&std::fs::read_to_string(corpus("malformed/expected.json")).unwrap()).unwrap();
    let files = xml_files(&corpus("malformed"));
    assert_eq!(files.len(), expected.as_object().unwrap().len());
    for f in files {
        let name = f.file_name().unwrap().to_str().unwrap();
        let want = &expected[name];
        let err = ingest::convert(&std::fs::read_to_string(&f).unwrap()).expect_err(name);
        let class = match err {
            IngestError::Parse { .. } => "parse",
            IngestError::Field { .. } => "field",
            IngestError::Invalid(_) => "invalid",
        };
        assert_eq!(class, want["class"], "{name}: {err}");
        assert_eq!(err.exit_code() as i64, want["exit"].as_i64().unwrap(), "{name}");
        let needle = want["contains"].as_str().unwrap();
        assert!(err.to_string().contains(needle), "{name}: '{err}' lacks '{needle}'");
    }
}
