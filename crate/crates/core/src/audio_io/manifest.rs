//! JSON corpus manifests: `{"root": ..., "entries": [{"path", "label", "collection"}]}`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest root unless absolute.
    pub path: String,
    pub label: Label,
    pub collection: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub root: String,
    pub entries: Vec<ManifestEntry>,
    /// Directory the manifest was loaded from; a relative `root` resolves against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn new(root: impl Into<String>, entries: Vec<ManifestEntry>) -> Self {
        Self {
            root: root.into(),
            entries,
            base_dir: PathBuf::new(),
        }
    }

    /// Parses and validates a manifest; every entry must exist on disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: CorpusManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn root_dir(&self) -> PathBuf {
        let root = Path::new(&self.root);
        if root.is_absolute() {
            root.to_path_buf()
        } else {
            self.base_dir.join(root)
        }
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root_dir().join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if e.collection.trim().is_empty() {
                return Err(Error::Manifest(format!(
                    "entry '{}' has an empty collection tag",
                    e.path
                )));
            }
            let p = self.resolve(e);
            if !p.is_file() {
                return Err(Error::Manifest(format!(
                    "entry path {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// Collection names in first-appearance order.
    pub fn collections(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for e in &self.entries {
            if !seen.contains(&e.collection) {
                seen.push(e.collection.clone());
            }
        }
        seen
    }

    pub fn collections_with_label(&self, label: Label) -> Vec<String> {
        self.collections()
            .into_iter()
            .filter(|c| {
                self.entries
                    .iter()
                    .any(|e| &e.collection == c && e.label == label)
            })
            .collect()
    }

    pub fn entries_in<'a>(
        &'a self,
        collection: &'a str,
    ) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.collection == collection)
    }

    /// A filesystem-safe identifier for an entry, unique within the manifest:
    /// the relative path without extension, separators replaced by `__`.
    pub fn clip_id(entry: &ManifestEntry) -> String {
        let p = Path::new(&entry.path).with_extension("");
        p.components()
            .filter_map(|c| match c {
                std::path::Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
                _ => None,
            })
            .collect::<Vec<_>>()
            .join("__")
    }
}
