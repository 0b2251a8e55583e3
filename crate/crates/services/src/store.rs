//! The shared workstation store: one canonical JSON document on disk.

use hrc_core::{registry, Workstation};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{path}: corrupt workstation file: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: unknown component kind '{kind}' (component '{id}')")]
    UnknownKind { path: PathBuf, kind: String, id: String },
}

pub fn load_workstation(path: &Path) -> Result<Workstation, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| StoreError::Io { path: path.into(), reason: e.to_string() })?;
    let ws: Workstation =
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { path: path.into(), reason: e.to_string() })?;
    if let Some((_, d)) = ws.all_components().find(|(_, d)| registry().lookup(&d.kind).is_none()) {
        return Err(StoreError::UnknownKind { path: path.into(), kind: d.kind.clone(), id: d.id.clone() });
    }
    Ok(ws)
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial document.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), StoreError> {
    let err = |e: std::io::Error| StoreError::Io { path: path.into(), reason: e.to_string() };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

pub fn save_workstation(path: &Path, ws: &Workstation) -> Result<(), StoreError> {
    write_atomic(path, &ws.to_canonical_json())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ws.json");
        let ws = Workstation::new("ws", "empty");
        save_workstation(&p, &ws).unwrap();
        let back = load_workstation(&p).unwrap();
        assert_eq!(back.to_canonical_json(), ws.to_canonical_json());
    }

    #[test]
    fn errors_name_path_and_kind() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        fs::write(&p, "{not json").unwrap();
        let e = load_workstation(&p).unwrap_err().to_string();
        assert!(e.contains("bad.json"), "{e}");

        let mut ws = Workstation::new("ws", "x");
        ws.feedback.insert("f".into(), hrc_core::ComponentDescriptor::new("f", "hologram-cat", Default::default()));
        save_workstation(&p, &ws).unwrap();
        let e = load_workstation(&p).unwrap_err();
        assert!(matches!(&e, StoreError::UnknownKind { kind, .. } if kind == "hologram-cat"));
        assert!(e.to_string().contains("hologram-cat"));
    }
}
