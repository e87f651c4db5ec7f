//! Helpers shared by the CLI integration targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use urbangraph_cli::PipelineConfig;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/city")
}

pub fn fixture_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture_dir().join("pipeline.toml")).unwrap();
    cfg.out = Some(out.to_path_buf());
    cfg
}

/// Relative path to SHA-256 for every file under `root`.
pub fn tree_digest(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap()).collect();
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, Sha256::digest(fs::read(&p).unwrap()).to_vec());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Runs the binary entry point in-process.
pub fn run_cli(args: &[&str]) -> i32 {
    urbangraph_cli::run(std::iter::once("urbangraph").chain(args.iter().copied()))
}

pub fn path_arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}
