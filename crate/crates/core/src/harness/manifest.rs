//! Per-command artifact manifests.
//!
//! ```text
//! skill-critic-manifest v1
//! command <name>
//! fingerprint <hex sha256 of the run config>
//! code_version <crate version>
//! started <unix seconds>
//! finished <unix seconds>
//! file <hex sha256> <bytes> <path relative to the manifest>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use super::{HarnessError, Result};

const MAGIC: &str = "skill-critic-manifest v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub fingerprint: String,
    pub code_version: String,
    pub started: f64,
    pub finished: f64,
    pub files: Vec<ManifestEntry>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut f = fs::File::open(path).map_err(HarnessError::io(path))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(HarnessError::io(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok((hex::encode(h.finalize()), bytes))
}

impl RunManifest {
    /// Starts the clock.
    pub fn start(command: &str, fingerprint: &str) -> Self {
        Self {
            command: command.to_string(),
            fingerprint: fingerprint.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started: now(),
            finished: 0.0,
            files: Vec::new(),
        }
    }

    /// Records `dir/rel`, replacing an earlier entry for the same path.
    pub fn add(&mut self, dir: &Path, rel: impl Into<PathBuf>) -> Result<()> {
        let rel = rel.into();
        let (sha256, bytes) = sha256_file(&dir.join(&rel))?;
        self.files.retain(|e| e.path != rel);
        self.files.push(ManifestEntry { path: rel, sha256, bytes });
        Ok(())
    }

    pub fn digest_of(&self, rel: &Path) -> Option<&str> {
        self.files.iter().find(|e| e.path == rel).map(|e| e.sha256.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "command {}", self.command);
        let _ = writeln!(s, "fingerprint {}", self.fingerprint);
        let _ = writeln!(s, "code_version {}", self.code_version);
        let _ = writeln!(s, "started {}", self.started);
        let _ = writeln!(s, "finished {}", self.finished);
        for e in &self.files {
            let _ = writeln!(s, "file {} {} {}", e.sha256, e.bytes, e.path.display());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &str| HarnessError::Runtime(format!("manifest: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header"));
        }
        let mut field = |name: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .and_then(|l| l.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("expected {name}")))
        };
        let command = field("command")?;
        let fingerprint = field("fingerprint")?;
        let code_version = field("code_version")?;
        let started = field("started")?.parse().map_err(|_| bad("bad start time"))?;
        let finished = field("finished")?.parse().map_err(|_| bad("bad finish time"))?;
        let mut files = Vec::new();
        for l in lines {
            let mut it = l.splitn(4, ' ');
            let (tag, sha, bytes, path) = (it.next(), it.next(), it.next(), it.next());
            match (tag, sha, bytes.and_then(|b| b.parse().ok()), path) {
                (Some("file"), Some(sha), Some(bytes), Some(path)) => {
                    files.push(ManifestEntry { path: PathBuf::from(path), sha256: sha.to_string(), bytes })
                }
                _ => return Err(bad(&format!("bad file line {l:?}"))),
            }
        }
        Ok(Self { command, fingerprint, code_version, started, finished, files })
    }

    /// Stops the clock and writes `dir/<command>.manifest`.
    pub fn finish(&mut self, dir: &Path) -> Result<PathBuf> {
        self.finished = now();
        let path = dir.join(format!("{}.manifest", self.command));
        fs::write(&path, self.to_text()).map_err(HarnessError::io(&path))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(HarnessError::io(path))?)
    }

    /// Recomputes every digest under `dir`; the first mismatch is a
    /// verification failure.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for e in &self.files {
            let (sha, bytes) = sha256_file(&dir.join(&e.path))?;
            if sha != e.sha256 || bytes != e.bytes {
                return Err(HarnessError::Verification(format!("{} does not match its manifest digest", e.path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "alpha").unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/b c.txt"), "beta").unwrap();
        let mut m = RunManifest::start("probe", "f00d");
        m.add(dir.path(), "a.txt").unwrap();
        m.add(dir.path(), "sub/b c.txt").unwrap();
        m.add(dir.path(), "a.txt").unwrap();
        assert_eq!(m.files.len(), 2);
        let path = m.finish(dir.path()).unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back, m);
        // Digest of "alpha".
        assert_eq!(back.digest_of(Path::new("a.txt")).unwrap(), "8ed3f6ad685b959ead7022518e1af76cd816f8e8ec7ccdda1ed4018e8f2223f8");
        back.verify(dir.path()).unwrap();
        fs::write(dir.path().join("a.txt"), "alphA").unwrap();
        assert!(matches!(back.verify(dir.path()), Err(HarnessError::Verification(_))));
    }
}
