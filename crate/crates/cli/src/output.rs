//! Output directories, content digests and the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use gelshatter::seed::digest_hex;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStatus {
    pub index: usize,
    /// Digest of the point's parameters; a resumed campaign only reuses a
    /// point whose key still matches.
    pub key: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub created_unix: u64,
    pub updated_unix: u64,
    pub files: Vec<FileRecord>,
    #[serde(default)]
    pub points: Vec<PointStatus>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let now = now_unix();
        Self {
            tool: "gelshatter".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            created_unix: now,
            updated_unix: now,
            files: Vec::new(),
            points: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Some(serde_json::from_str(&text).context("parsing manifest")?))
    }

    pub fn file(&self, path: &str) -> Option<&FileRecord> {
        self.files.iter().find(|f| f.path == path)
    }
}

/// A directory that refuses to overwrite existing files unless forced, and
/// records a digest of everything written to it.
pub struct OutputDir {
    root: PathBuf,
    overwrite: bool,
    written: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>, overwrite: bool) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root,
            overwrite,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Fails if any of `rels` already exists and overwriting is off.
    pub fn ensure_free(&self, rels: &[String]) -> Result<()> {
        if self.overwrite {
            return Ok(());
        }
        for rel in rels {
            let p = self.root.join(rel);
            if p.exists() {
                bail!("refusing to overwrite {} (use --force)", p.display());
            }
        }
        Ok(())
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let contents = contents.as_ref();
        let path = self.root.join(rel);
        if !self.overwrite && path.exists() {
            bail!("refusing to overwrite {} (use --force)", path.display());
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.record(rel, contents);
        Ok(())
    }

    /// Registers a file that already exists on disk (e.g. reused by a resume).
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.root.join(rel)).with_context(|| format!("reading {rel}"))?;
        self.record(rel, &bytes);
        Ok(())
    }

    fn record(&mut self, rel: &str, contents: &[u8]) {
        self.written.retain(|f| f.path != rel);
        self.written.push(FileRecord {
            path: rel.to_string(),
            sha256: digest_hex(contents),
            bytes: contents.len() as u64,
        });
    }

    pub fn records(&self) -> &[FileRecord] {
        &self.written
    }

    /// Writes `manifest.json` listing every recorded file. Timestamps live
    /// only here.
    pub fn write_manifest(&self, mut manifest: Manifest) -> Result<()> {
        let mut files = self.written.clone();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.files = files;
        manifest.updated_unix = now_unix();
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.root.join(MANIFEST), text)?;
        Ok(())
    }
}

/// Digest of a file on disk, if it exists.
pub fn file_digest(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| digest_hex(&b))
}
