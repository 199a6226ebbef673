use std::time::Duration;

use sentinel_core::vulndb::{update_snapshot, LibraryDetection, MatchedFrom, VulnDb};

/// A real upstream jsrepository-v4 file covers at least 64 libraries. The
/// sandbox cannot download one, so this only runs when
/// `SENTINEL_VULNDB_SNAPSHOT` names a local copy.
#[test]
fn real_v4_snapshot_covers_popular_libraries() {
    let Some(path) = std::env::var_os("SENTINEL_VULNDB_SNAPSHOT") else {
        eprintln!("SENTINEL_VULNDB_SNAPSHOT not set; skipping");
        return;
    };
    let db = VulnDb::load(std::path::Path::new(&path)).unwrap();
    assert!(db.library_count() >= 64, "{} libraries", db.library_count());
}

#[test]
fn update_replaces_only_on_success() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("db/jsrepository.json");
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"axios": {"vulnerabilities": [{"below": "0.21.2", "severity": "high", "identifiers": {"summary": "x"}}]}}"#).unwrap();
    let db = update_snapshot(good.to_str().unwrap(), &dest, Duration::from_secs(1)).unwrap();
    assert_eq!(db.library_count(), 1);
    let d = LibraryDetection { library: "axios".into(), version: "0.21.1".into(), matched_from: MatchedFrom::UrlFilename };
    assert_eq!(VulnDb::load(&dest).unwrap().match_detection(&d).unwrap().len(), 1);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"axios": {"vulnerabilities": [{"below": "1.2.x", "severity": "low"}]}}"#).unwrap();
    assert!(update_snapshot(bad.to_str().unwrap(), &dest, Duration::from_secs(1)).is_err());
    assert_eq!(VulnDb::load(&dest).unwrap().snapshot_hash(), db.snapshot_hash());
}

#[test]
fn bundled_snapshot_flags_old_jquery() {
    let db = VulnDb::bundled();
    let d = LibraryDetection { library: "jquery".into(), version: "1.8.3".into(), matched_from: MatchedFrom::UrlFilename };
    assert!(!db.match_detection(&d).unwrap().is_empty());
}
