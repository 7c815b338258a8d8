//! Input provenance for stage artifacts: every stage records a manifest of
//! the files it consumed (with SHA-256 digests) plus the seed, so a rerun
//! can prove it saw identical inputs and downstream stages form a hash
//! chain back to the raw data.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Accumulates the inputs one stage consumed.
pub struct InputLog {
    stage: &'static str,
    seed: u64,
    entries: Vec<(String, String)>,
}

impl InputLog {
    pub fn new(stage: &'static str, seed: u64) -> Self {
        InputLog { stage, seed, entries: Vec::new() }
    }

    /// Record one consumed file. The label should be stable across runs
    /// (a relative path, not an absolute temp path).
    pub fn file(&mut self, label: &str, path: &Path) -> Result<()> {
        self.entries.push((file_sha256(path)?, label.to_string()));
        Ok(())
    }

    /// Record a non-file input (e.g. a generation parameter) by hashing its
    /// textual form.
    pub fn value(&mut self, label: &str, value: &str) {
        let mut hasher = Sha256::new();
        hasher.update(value.as_bytes());
        self.entries.push((format!("{:x}", hasher.finalize()), label.to_string()));
    }

    /// Write `inputs.txt` under the stage directory. Entries are sorted by
    /// label so the file is insensitive to discovery order.
    pub fn write(mut self, stage_dir: &Path) -> Result<PathBuf> {
        self.entries.sort_by(|a, b| a.1.cmp(&b.1));
        let mut out = String::new();
        writeln!(out, "stage\t{}", self.stage)?;
        writeln!(out, "seed\t{}", self.seed)?;
        for (digest, label) in &self.entries {
            writeln!(out, "sha256\t{digest}\t{label}")?;
        }
        let path = stage_dir.join("inputs.txt");
        fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_sorted_and_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        fs::write(&a, b"alpha").unwrap();
        fs::write(&b, b"beta").unwrap();

        let mut log = InputLog::new("demo", 3);
        log.file("b.bin", &b).unwrap();
        log.file("a.bin", &a).unwrap();
        log.value("param", "x=1");
        let path = log.write(dir.path()).unwrap();
        let first = fs::read_to_string(&path).unwrap();

        let mut log = InputLog::new("demo", 3);
        log.value("param", "x=1");
        log.file("a.bin", &a).unwrap();
        log.file("b.bin", &b).unwrap();
        log.write(dir.path()).unwrap();
        let second = fs::read_to_string(&path).unwrap();

        assert_eq!(first, second);
        assert!(first.starts_with("stage\tdemo\nseed\t3\n"));
        let digest_a = file_sha256(&a).unwrap();
        assert!(first.contains(&digest_a));
    }
}
