#![allow(dead_code)]

use std::path::{Path, PathBuf};

use streetstage::config::{BackendKind, Config, ProviderKind};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn demo_path() -> PathBuf {
    fixtures().join("scenes/demo.json")
}

pub fn broken_path() -> PathBuf {
    fixtures().join("scenes/broken.json")
}

/// An offline config rooted in `data_dir`.
pub fn config(data_dir: &Path) -> Config {
    let mut c = Config { data_dir: data_dir.to_owned(), ..Config::default() };
    c.imagery.provider = ProviderKind::Fixture;
    c.imagery.fixture_dir = fixtures().join("imagery");
    c.backend.kind = BackendKind::Mock;
    c.backend.mock_latency_ms = 0;
    c.server.ui_dir = None;
    c
}

/// CLI arguments that point at the fixtures and `data_dir`.
pub fn args(data_dir: &Path, rest: &[&str]) -> Vec<String> {
    let mut v = vec![
        "streetstage".to_string(),
        "--data-dir".into(),
        data_dir.display().to_string(),
        "--provider".into(),
        "fixture".into(),
        "--fixture-dir".into(),
        fixtures().join("imagery").display().to_string(),
    ];
    v.extend(rest.iter().map(|s| s.to_string()));
    v
}

pub fn run_cli(data_dir: &Path, rest: &[&str]) -> (i32, String) {
    use clap::Parser;
    let cli = streetstage::Cli::try_parse_from(args(data_dir, rest)).unwrap();
    let mut out = Vec::new();
    let code = streetstage::run(cli, &mut out).unwrap();
    (code, String::from_utf8(out).unwrap())
}
