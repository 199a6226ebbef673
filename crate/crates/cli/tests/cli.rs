use std::path::Path;
use std::process::{Command, Output, Stdio};

fn sentinel(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentinel"))
        .args(args)
        .env("SENTINEL_CACHE_DIR", cache)
        .env_remove("SENTINEL_LLM_API_KEY")
        .stdin(Stdio::null())
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

/// Fixture archive: one existing npm package, one missing.
fn fixture(dir: &Path) -> String {
    let archive = dir.join("fixture");
    let mut a = sentinel_core::probe::FixtureArchive::new("2025-03-01T00:00:00Z".parse().unwrap());
    a.respond_json("https://registry.npmjs.org/left-pad", 200, &serde_json::json!({"dist-tags": {"latest": "1.3.0"}, "versions": {"1.3.0": {}}}));
    a.respond("https://registry.npmjs.org/ghost-pkg-xyz", 404, "{}");
    a.save(&archive).unwrap();
    archive.to_str().unwrap().to_owned()
}

#[test]
fn scan_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let clean = write(dir.path(), "clean.md", "```bash\nnpm install left-pad\n```\n");
    let dirty = write(dir.path(), "dirty.md", "```bash\nnpm install ghost-pkg-xyz\n```\n");
    let miss = write(dir.path(), "miss.md", "```bash\nnpm install not-recorded\n```\n");

    let out = sentinel(&["scan", "--fixture", &fx, &clean], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = sentinel(&["scan", "--fixture", &fx, "--format", "md", &dirty], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ghost-pkg-xyz"));
    // A probe missing from the archive is an error, not a silent pass.
    let out = sentinel(&["scan", "--fixture", &fx, &miss], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = sentinel(&["scan", "--fixture", &fx, "/nonexistent/file.md"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let bad = write(dir.path(), "bad.toml", "concurrency = 0\n");
    let out = sentinel(&["scan", "--config", &bad, "--fixture", &fx, &clean], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scan_reads_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_sentinel"))
        .args(["scan", "--fixture", &fx, "-"])
        .env("SENTINEL_CACHE_DIR", dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(b"```bash\nnpm install ghost-pkg-xyz\n```\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn prompts_then_mock_run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "q.json", r#"[{"id": "1", "title": "How to parse CSV in Python"}]"#);
    let out = sentinel(&["prompts", "--corpus", &corpus], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(lines.len(), 21);

    let three = write(dir.path(), "three.jsonl", &(lines[..3].join("\n") + "\n"));
    let run1 = dir.path().join("run1");
    let out = sentinel(&["run", &three, "--mock", "--out", run1.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(run1.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 3);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run1.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["prompt_count"], 3);

    // Refuses to overwrite an existing store.
    let out = sentinel(&["run", &three, "--mock", "--out", run1.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let run2 = dir.path().join("run2");
    let replay = run1.join("records.jsonl");
    let out = sentinel(&["run", &three, "--replay", replay.to_str().unwrap(), "--out", run2.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(run2.join("records.jsonl")).unwrap(), records);
}

#[test]
fn live_run_without_key_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "q.json", r#"[{"id": "1", "title": "How to parse CSV in Python"}]"#);
    let prompts = String::from_utf8(sentinel(&["prompts", "--corpus", &corpus, "--sets", "Q1"], dir.path()).stdout).unwrap();
    let file = write(dir.path(), "p.jsonl", &prompts);
    let out = sentinel(&["run", &file, "--live", "gpt-4o", "--out", dir.path().join("r").to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SENTINEL_LLM_API_KEY"));
}

#[test]
fn coc_on_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let qs = write(dir.path(), "q.json", "[]");
    let out = sentinel(&["coc", &qs, "--mock"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let md = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with('|')).collect();
    assert_eq!(rows.len(), 2, "{md}");
    assert!(rows[0].contains("baseline rate"));
}

#[test]
fn coc_with_mock_world() {
    let dir = tempfile::tempdir().unwrap();
    let qs = write(dir.path(), "q.json", r#"[{"id": "1", "title": "How to send an HTTP request in Nodejs"}, {"id": "2", "title": "How to hash a password in Python"}]"#);
    let out = sentinel(&["coc", &qs, "--mock", "--format", "json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.to_string().contains("baseline"));
}

#[test]
fn vulndb_update_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "src.json", r#"{"axios": {"vulnerabilities": [{"below": "0.21.2", "severity": "high", "identifiers": {"summary": "x"}}]}}"#);
    let dest = dir.path().join("db.json");
    let cfg = write(dir.path(), "c.toml", &format!("vulndb = {:?}\n", dest.to_str().unwrap()));
    let out = sentinel(&["vulndb", "update", "--from", &src, "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dest.is_file());
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 libraries"));
    let out = sentinel(&["vulndb", "update", "--from", "/nonexistent.json", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
