use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{average_eer, compute_eer, ScoreSet};
use crate::audio_io::Label;
use crate::dsp::CepstralFeatures;
use crate::error::{Error, Result};
use crate::gmm::{train_gd, DetectorPair, GmmModel, TrainConfig};

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    pub collection: String,
    pub label: Label,
    pub features: CepstralFeatures,
}

/// Extracted features for every clip of a manifest.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub items: Vec<CorpusItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub split_seed: u64,
    pub holdout_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            split_seed: 0,
            holdout_fraction: 0.2,
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Marks the hold-out members of one collection. Depends only on the set of
/// ids, the collection name and the seed, never on manifest order.
pub fn holdout_mask(ids: &[&str], collection: &str, seed: u64, fraction: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(ids[b]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(collection));
    order.shuffle(&mut rng);
    let n_test = ((ids.len() as f64 * fraction).round() as usize).min(ids.len());
    let mut mask = vec![false; ids.len()];
    for &i in &order[..n_test] {
        mask[i] = true;
    }
    mask
}

/// Training and hold-out members of one collection and label.
#[derive(Debug, Clone)]
pub struct Partition<'a> {
    pub train: Vec<&'a CorpusItem>,
    pub holdout: Vec<&'a CorpusItem>,
}

impl<'a> Partition<'a> {
    fn train_features(&self) -> Vec<&'a CepstralFeatures> {
        self.train.iter().map(|it| &it.features).collect()
    }

    fn holdout_features(&self) -> Vec<&'a CepstralFeatures> {
        self.holdout.iter().map(|it| &it.features).collect()
    }
}

impl Corpus {
    pub fn collections(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for it in &self.items {
            if !seen.contains(&it.collection) {
                seen.push(it.collection.clone());
            }
        }
        seen
    }

    pub fn collections_with_label(&self, label: Label) -> Vec<String> {
        self.collections()
            .into_iter()
            .filter(|c| {
                self.items
                    .iter()
                    .any(|it| &it.collection == c && it.label == label)
            })
            .collect()
    }

    /// Seeded split of one collection's clips of `label`, members kept in corpus order.
    pub fn partition(
        &self,
        collection: &str,
        label: Label,
        split_seed: u64,
        fraction: f64,
    ) -> Result<Partition<'_>> {
        let members: Vec<&CorpusItem> = self
            .items
            .iter()
            .filter(|it| it.collection == collection && it.label == label)
            .collect();
        if members.is_empty() {
            return Err(Error::Manifest(format!(
                "no {label} clips in collection '{collection}'"
            )));
        }
        let ids: Vec<&str> = members.iter().map(|it| it.id.as_str()).collect();
        let mask = holdout_mask(&ids, collection, split_seed, fraction);
        let mut part = Partition {
            train: Vec::new(),
            holdout: Vec::new(),
        };
        for (it, test) in members.into_iter().zip(mask) {
            if test {
                part.holdout.push(it);
            } else {
                part.train.push(it);
            }
        }
        if part.train.is_empty() || part.holdout.is_empty() {
            return Err(Error::Manifest(format!(
                "collection '{collection}' is too small for a train/hold-out split"
            )));
        }
        Ok(part)
    }

    fn split(
        &self,
        collection: &str,
        label: Label,
        cfg: &ExperimentConfig,
    ) -> Result<Partition<'_>> {
        self.partition(collection, label, cfg.split_seed, cfg.holdout_fraction)
    }
}

fn stack(feats: &[&CepstralFeatures]) -> Result<Array2<f64>> {
    let blocks: Vec<Array2<f64>> = feats.iter().map(|f| f.stacked()).collect();
    let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
    concatenate(Axis(0), &views)
        .map_err(|e| Error::Shape(format!("feature dimensions differ: {e}")))
}

fn scores(pair: &DetectorPair, feats: &[&CepstralFeatures]) -> Result<Vec<f64>> {
    feats.iter().map(|f| crate::gmm::score(pair, f)).collect()
}

/// Rows are training sets, columns test sets; `aeer[i]` is the mean of row `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub eer: Vec<Vec<f64>>,
    pub aeer: Vec<f64>,
    pub provenance: serde_json::Value,
}

impl EvalReport {
    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| x == column)?;
        Some(self.eer[r][c])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "train,{},aEER", self.columns.join(","))?;
        for (i, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = self.eer[i].iter().map(|v| v.to_string()).collect();
            writeln!(w, "{row},{},{}", cells.join(","), self.aeer[i])?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

struct RealSide<'a> {
    model: GmmModel,
    test: Vec<&'a CepstralFeatures>,
    counts: BTreeMap<String, (usize, usize)>,
}

fn train_real<'a>(corpus: &'a Corpus, cfg: &ExperimentConfig) -> Result<RealSide<'a>> {
    let real_collections = corpus.collections_with_label(Label::Real);
    if real_collections.is_empty() {
        return Err(Error::Manifest("corpus has no real clips".into()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut counts = BTreeMap::new();
    for c in &real_collections {
        let s = corpus.split(c, Label::Real, cfg)?;
        counts.insert(format!("{c}/real"), (s.train.len(), s.holdout.len()));
        train.extend(s.train_features());
        test.extend(s.holdout_features());
    }
    let model = train_gd(stack(&train)?.view(), &cfg.train)?;
    Ok(RealSide {
        model,
        test,
        counts,
    })
}

/// Fits the real model on every real collection's training split and the
/// fake model on the training splits of `fake_collections`. Returns the pair
/// and the per-collection `(train, holdout)` counts.
pub fn train_detector(
    corpus: &Corpus,
    fake_collections: &[String],
    cfg: &ExperimentConfig,
) -> Result<(DetectorPair, BTreeMap<String, (usize, usize)>)> {
    if fake_collections.is_empty() {
        return Err(Error::Manifest(
            "no generated collections to train on".into(),
        ));
    }
    check_known(corpus, fake_collections)?;
    let real = train_real(corpus, cfg)?;
    let mut counts = real.counts;
    let mut pool = Vec::new();
    for c in fake_collections {
        let s = corpus.split(c, Label::Fake, cfg)?;
        counts.insert(format!("{c}/fake"), (s.train.len(), s.holdout.len()));
        pool.extend(s.train_features());
    }
    let fake = train_gd(stack(&pool)?.view(), &cfg.train)?;
    let fingerprint = corpus.items.first().and_then(|it| it.features.fingerprint);
    Ok((DetectorPair::new(real.model, fake, fingerprint)?, counts))
}

fn check_known(corpus: &Corpus, names: &[String]) -> Result<()> {
    let fakes = corpus.collections_with_label(Label::Fake);
    for n in names {
        if !fakes.contains(n) {
            return Err(Error::Manifest(format!(
                "unknown generated collection '{n}'"
            )));
        }
    }
    Ok(())
}

fn fill_rows<'a>(
    corpus: &'a Corpus,
    real: &RealSide<'a>,
    row_pools: Vec<(String, Vec<&'a CepstralFeatures>)>,
    test_collections: &[String],
    cfg: &ExperimentConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut tests = Vec::new();
    for c in test_collections {
        tests.push(corpus.split(c, Label::Fake, cfg)?.holdout_features());
    }
    row_pools
        .into_par_iter()
        .map(|(_, pool)| {
            let fake = train_gd(stack(&pool)?.view(), &cfg.train)?;
            let pair = DetectorPair::new(real.model.clone(), fake, None)?;
            let real_scores = scores(&pair, &real.test)?;
            tests
                .iter()
                .map(|t| {
                    compute_eer(&ScoreSet {
                        real: real_scores.clone(),
                        fake: scores(&pair, t)?,
                    })
                    .map(|r| r.eer)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

fn provenance(
    kind: &str,
    cfg: &ExperimentConfig,
    counts: BTreeMap<String, (usize, usize)>,
) -> serde_json::Value {
    let counts: BTreeMap<String, serde_json::Value> = counts
        .into_iter()
        .map(|(k, (train, test))| (k, json!({"train": train, "holdout": test})))
        .collect();
    json!({
        "protocol": kind,
        "experiment": cfg,
        "file_counts": counts,
    })
}

/// One detector per training collection: the shared real model against a
/// fake model fit on that collection's training split, scored on every test
/// collection's hold-out against the real hold-out.
pub fn run_experiment(
    corpus: &Corpus,
    train_collections: &[String],
    test_collections: &[String],
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    if train_collections.is_empty() || test_collections.is_empty() {
        return Err(Error::Manifest(
            "experiment needs training and test collections".into(),
        ));
    }
    check_known(corpus, train_collections)?;
    check_known(corpus, test_collections)?;
    let real = train_real(corpus, cfg)?;
    let mut counts = real.counts.clone();
    let mut pools = Vec::new();
    for c in train_collections.iter().chain(test_collections) {
        let s = corpus.split(c, Label::Fake, cfg)?;
        counts.insert(format!("{c}/fake"), (s.train.len(), s.holdout.len()));
    }
    for c in train_collections {
        pools.push((
            c.clone(),
            corpus.split(c, Label::Fake, cfg)?.train_features(),
        ));
    }
    let eer = fill_rows(corpus, &real, pools, test_collections, cfg)?;
    let aeer = eer.iter().map(|r| average_eer(r)).collect::<Result<_>>()?;
    Ok(EvalReport {
        rows: train_collections.to_vec(),
        columns: test_collections.to_vec(),
        eer,
        aeer,
        provenance: provenance("single_training_set", cfg, counts),
    })
}

/// Row `h` trains the fake model on the training splits of every collection
/// except `h`; columns cover all listed collections.
pub fn run_leave_one_out(
    corpus: &Corpus,
    collections: &[String],
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    if collections.len() < 2 {
        return Err(Error::Manifest(
            "leave-one-out needs at least two generated collections".into(),
        ));
    }
    check_known(corpus, collections)?;
    let real = train_real(corpus, cfg)?;
    let mut counts = real.counts.clone();
    let mut splits = Vec::new();
    for c in collections {
        let s = corpus.split(c, Label::Fake, cfg)?;
        counts.insert(format!("{c}/fake"), (s.train.len(), s.holdout.len()));
        splits.push(s.train_features());
    }
    let pools = collections
        .iter()
        .enumerate()
        .map(|(h, name)| {
            let pool: Vec<&CepstralFeatures> = splits
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != h)
                .flat_map(|(_, s)| s.iter().copied())
                .collect();
            (name.clone(), pool)
        })
        .collect();
    let eer = fill_rows(corpus, &real, pools, collections, cfg)?;
    let aeer = eer.iter().map(|r| average_eer(r)).collect::<Result<_>>()?;
    Ok(EvalReport {
        rows: collections.to_vec(),
        columns: collections.to_vec(),
        eer,
        aeer,
        provenance: provenance("leave_one_out", cfg, counts),
    })
}
