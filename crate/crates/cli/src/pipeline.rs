//! Manifest-driven loading shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use vocodet::audio_io::{load_wav, AudioClip, CorpusManifest, ManifestEntry};
use vocodet::dsp::{read_feature_cache, CepstralFeatures, FeatureExtractor, FeatureFingerprint};
use vocodet::eval::{Corpus, CorpusItem};

use crate::settings::Settings;

pub const PROVENANCE_FILE: &str = "provenance.json";
pub const CACHE_EXT: &str = "wfc";

type FeatureSource<'a> = Box<dyn Fn(&ManifestEntry) -> Result<CepstralFeatures> + Sync + 'a>;

pub fn provenance(command: &str, settings: &Settings, inputs: Value) -> Value {
    json!({
        "tool": "vocodet",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "settings": settings,
        "inputs": inputs,
    })
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, bytes: Vec<u8>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Keeps `[A-Za-z0-9._-]`, replacing everything else with `_`.
pub fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    CorpusManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

pub fn load_clip(
    manifest: &CorpusManifest,
    entry: &ManifestEntry,
    settings: &Settings,
) -> Result<AudioClip> {
    let path = manifest.resolve(entry);
    let clip = load_wav(&path)?;
    Ok(settings.preprocess.apply(&clip)?)
}

pub fn extractor(settings: &Settings) -> Result<FeatureExtractor> {
    Ok(FeatureExtractor::new(
        settings.kind,
        settings.features,
        settings.preprocess.sample_rate,
    )?)
}

pub fn cache_path(dir: &Path, entry: &ManifestEntry) -> PathBuf {
    dir.join(format!("{}.{CACHE_EXT}", CorpusManifest::clip_id(entry)))
}

/// Fingerprint recorded by `extract` in a cache directory.
pub fn cache_fingerprint(dir: &Path) -> Result<FeatureFingerprint> {
    let path = dir.join(PROVENANCE_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text)?;
    let fp = v
        .get("fingerprint")
        .ok_or_else(|| anyhow!("{} has no feature fingerprint", path.display()))?;
    Ok(serde_json::from_value(fp.clone())?)
}

/// Features for every manifest entry, read from `cache_dir` when given and
/// extracted from audio otherwise. The first failing clip aborts the load.
pub fn load_corpus(
    manifest: &CorpusManifest,
    settings: &Settings,
    cache_dir: Option<&Path>,
) -> Result<(Corpus, FeatureFingerprint)> {
    let (fingerprint, source): (FeatureFingerprint, FeatureSource) = match cache_dir {
        Some(dir) => {
            let fp = cache_fingerprint(dir)?;
            let dir = dir.to_path_buf();
            let read = move |e: &ManifestEntry| -> Result<CepstralFeatures> {
                let path = cache_path(&dir, e);
                let mut f = read_feature_cache(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                f.fingerprint = Some(fp);
                Ok(f)
            };
            (fp, Box::new(read))
        }
        None => {
            let ex = extractor(settings)?;
            let fp = ex.fingerprint();
            let extract = move |e: &ManifestEntry| -> Result<CepstralFeatures> {
                let clip = load_clip(manifest, e, settings)?;
                Ok(ex.extract(&clip)?)
            };
            (fp, Box::new(extract))
        }
    };
    let items: Vec<CorpusItem> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let features = source(e).with_context(|| format!("clip {}", e.path))?;
            Ok(CorpusItem {
                id: CorpusManifest::clip_id(e),
                collection: e.collection.clone(),
                label: e.label,
                features,
            })
        })
        .collect::<Result<_>>()?;
    Ok((Corpus { items }, fingerprint))
}
