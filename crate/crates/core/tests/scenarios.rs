use std::path::PathBuf;

use mudra::{load_scenario, Error};

fn shipped() -> Vec<PathBuf> {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios"].iter().collect();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    files
}

#[test]
fn every_shipped_scenario_loads() {
    let files = shipped();
    assert_eq!(files.len(), 8);
    for path in files {
        let s = load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!s.seeds.is_empty(), "{}", path.display());
        assert!(!s.controllers.is_empty(), "{}", path.display());
    }
}

#[test]
fn unnamed_scenario_takes_the_file_stem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("my-run.toml");
    std::fs::write(&path, "nodes = 20\n").unwrap();
    assert_eq!(load_scenario(&path).unwrap().name, "my-run");
    std::fs::write(&path, "name = \"explicit\"\n").unwrap();
    assert_eq!(load_scenario(&path).unwrap().name, "explicit");
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_scenario(dir.path().join("absent.toml")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}
