//! Run manifests: every output directory gets exactly one `run_manifest.txt`
//! recording the command, the fully resolved configuration, the seed, the
//! artifact paths and a digest over the identity fields. Wall-clock duration
//! is recorded but excluded from the digest, so identical reruns carry
//! identical digests.

use std::path::Path;

pub struct RunManifest {
    command: String,
    entries: Vec<(String, String)>,
    artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            entries: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    fn identity_text(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        s.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
        for (k, v) in &self.entries {
            s.push_str(&format!("{k}={v}\n"));
        }
        for a in &self.artifacts {
            s.push_str(&format!("artifact={a}\n"));
        }
        s
    }

    pub fn digest(&self) -> String {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        for b in self.identity_text().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
        format!("{h:016x}")
    }

    /// Write `run_manifest.txt` into `dir` (atomically: temp then rename).
    pub fn write(&self, dir: &Path, duration: std::time::Duration) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut text = self.identity_text();
        text.push_str(&format!("digest={}\n", self.digest()));
        text.push_str(&format!("duration_ms={}\n", duration.as_millis()));
        let tmp = dir.join("run_manifest.txt.tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, dir.join("run_manifest.txt"))?;
        Ok(())
    }
}

/// Atomic file write: temp in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_duration_but_not_config() {
        let mut a = RunManifest::new("phantom-gen");
        a.set("seed", 7);
        let mut b = RunManifest::new("phantom-gen");
        b.set("seed", 7);
        assert_eq!(a.digest(), b.digest());
        let mut c = RunManifest::new("phantom-gen");
        c.set("seed", 8);
        assert_ne!(a.digest(), c.digest());

        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path(), std::time::Duration::from_millis(5)).unwrap();
        b.write(dir.path(), std::time::Duration::from_millis(900)).unwrap();
        let text = std::fs::read_to_string(dir.path().join("run_manifest.txt")).unwrap();
        assert!(text.contains(&format!("digest={}", a.digest())));
        assert!(text.contains("duration_ms=900"));
    }
}
