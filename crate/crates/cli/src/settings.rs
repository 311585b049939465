//! Resolved run configuration: built-in defaults, then the `--config` JSON
//! file, then command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use vocodet::analysis::PitchConfig;
use vocodet::attribution::BlurIgConfig;
use vocodet::audio_io::Preprocess;
use vocodet::dsp::{FeatureConfig, FeatureKind, FrameConfig};
use vocodet::eval::PhoneChannelConfig;
use vocodet::gmm::TrainConfig;

use crate::synth::SynthSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Drives training, the train/hold-out split and corpus synthesis.
    pub seed: u64,
    pub kind: FeatureKind,
    pub features: FeatureConfig,
    pub preprocess: Preprocess,
    pub train: TrainConfig,
    pub holdout_fraction: f64,
    pub phone: PhoneChannelConfig,
    pub pitch: PitchConfig,
    /// Frames for spectral centroid and energy histograms.
    pub analysis_frame: FrameConfig,
    pub reference: Option<String>,
    pub attribution: BlurIgConfig,
    pub synth: SynthSpec,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            kind: FeatureKind::Lfcc,
            features: FeatureConfig::default(),
            preprocess: Preprocess::default(),
            train: TrainConfig::default(),
            holdout_fraction: 0.2,
            phone: PhoneChannelConfig::default(),
            pitch: PitchConfig::default(),
            analysis_frame: FrameConfig::default(),
            reference: None,
            attribution: BlurIgConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Settings plus the raw file overrides, kept so callers can tell whether
/// a value was set explicitly.
pub struct Resolved {
    pub settings: Settings,
    pub file: Value,
}

impl Resolved {
    pub fn load(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => json!({}),
        };
        if !file.is_object() {
            anyhow::bail!("config file must hold a JSON object");
        }
        let mut merged = serde_json::to_value(Settings::default())?;
        merge(&mut merged, file.clone());
        let settings: Settings = serde_json::from_value(merged).context("invalid config file")?;
        Ok(Self { settings, file })
    }

    pub fn file_sets(&self, section: &str, key: &str) -> bool {
        self.file.get(section).and_then(|s| s.get(key)).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_overrides_nested_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"train": {"components": 8}, "features": {"coeffs": 12}, "kind": "mfcc"}"#,
        )
        .unwrap();
        let r = Resolved::load(Some(&path)).unwrap();
        assert_eq!(r.settings.train.components, 8);
        assert_eq!(r.settings.train.epochs, 10);
        assert_eq!(r.settings.features.coeffs, 12);
        assert_eq!(r.settings.features.filters, 40);
        assert_eq!(r.settings.kind, FeatureKind::Mfcc);
        assert!(r.file_sets("train", "components"));
        assert!(!r.file_sets("train", "epochs"));
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"trian": {}}"#).unwrap();
        assert!(Resolved::load(Some(&path)).is_err());
    }
}
