use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::CommandFactory;
use rayon::prelude::*;
use serde_json::{json, Value};

use vocodet::analysis::{
    corpus_stats, energy_histogram, histogram_difference, write_histogram_csv, write_stats_csv,
};
use vocodet::attribution::blur_ig;
use vocodet::audio_io::{load_wav, write_wav, AudioClip, CorpusManifest, Label, ManifestEntry};
use vocodet::dsp::write_feature_cache;
use vocodet::eval::{
    compute_eer, run_experiment, run_leave_one_out, simulate_phone, train_detector, Companding,
    Corpus, ExperimentConfig, ScoreSet,
};
use vocodet::gmm::{score, DetectorPair};

use crate::pipeline::{
    cache_fingerprint, cache_path, extractor, load_clip, load_corpus, load_manifest, provenance,
    safe_name, write_json, write_text, PROVENANCE_FILE,
};
use crate::settings::{Resolved, Settings};
use crate::synth::{synth_clip, SynthClip};
use crate::{Cli, Command, FeatureArgs, GlobalArgs, SplitArg, TrainArgs};

const LEAVE_ONE_OUT_COMPONENTS: usize = 256;

fn usage_error(msg: &str) -> ! {
    Cli::command()
        .error(ErrorKind::MissingRequiredArgument, msg)
        .exit()
}

fn require_manifest(g: &GlobalArgs) -> &Path {
    g.manifest
        .as_deref()
        .unwrap_or_else(|| usage_error("this subcommand needs --manifest <PATH>"))
}

fn require_out(g: &GlobalArgs) -> Result<PathBuf> {
    let out = g
        .out
        .clone()
        .unwrap_or_else(|| usage_error("this subcommand needs --out <DIR>"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

impl FeatureArgs {
    fn apply(&self, s: &mut Settings) {
        if let Some(k) = self.kind {
            s.kind = k;
        }
        if let Some(v) = self.filters {
            s.features.filters = v;
        }
        if let Some(v) = self.coeffs {
            s.features.coeffs = v;
        }
        if let Some(v) = self.delta_window {
            s.features.delta_window = v;
        }
    }
}

impl TrainArgs {
    fn apply(&self, s: &mut Settings) {
        if let Some(v) = self.components {
            s.train.components = v;
        }
        if let Some(v) = self.epochs {
            s.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            s.train.batch_size = v;
        }
        if let Some(v) = self.lr {
            s.train.learning_rate = v;
        }
    }
}

fn experiment(s: &Settings) -> ExperimentConfig {
    ExperimentConfig {
        train: s.train,
        split_seed: s.seed,
        holdout_fraction: s.holdout_fraction,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let resolved = Resolved::load(cli.global.config.as_deref())?;
    let mut s = resolved.settings.clone();
    if let Some(seed) = cli.global.seed {
        s.seed = seed;
    }
    s.train.seed = s.seed;
    let g = &cli.global;
    match cli.command {
        Command::Extract { features, force } => {
            features.apply(&mut s);
            extract(g, &s, force)
        }
        Command::Analyze { reference, compare } => analyze(g, &s, reference, compare),
        Command::Train {
            features,
            train,
            cache,
            fake,
        } => {
            features.apply(&mut s);
            train.apply(&mut s);
            cmd_train(g, &s, cache.as_deref(), fake)
        }
        Command::Score {
            features,
            model,
            cache,
            split,
        } => {
            features.apply(&mut s);
            cmd_score(g, &s, &model, cache.as_deref(), split)
        }
        Command::Eval {
            features,
            train,
            cache,
            train_sets,
            test_sets,
        } => {
            features.apply(&mut s);
            train.apply(&mut s);
            cmd_eval(g, &s, cache.as_deref(), train_sets, test_sets)
        }
        Command::Loo {
            features,
            train,
            cache,
            collections,
        } => {
            features.apply(&mut s);
            if train.components.is_none() && !resolved.file_sets("train", "components") {
                s.train.components = LEAVE_ONE_OUT_COMPONENTS;
            }
            train.apply(&mut s);
            cmd_loo(g, &s, cache.as_deref(), collections)
        }
        Command::SimulatePhone { mu_law } => {
            if mu_law {
                s.phone.companding = Companding::MuLaw;
            }
            simulate(g, &s)
        }
        Command::SynthCorpus {
            n_real,
            n_fake,
            fake_collections,
            duration,
        } => {
            if let Some(v) = n_real {
                s.synth.n_real = v;
            }
            if let Some(v) = n_fake {
                s.synth.n_fake = v;
            }
            if let Some(v) = fake_collections {
                s.synth.fake_collections = v;
            }
            if let Some(v) = duration {
                s.synth.duration_s = v;
            }
            synth_corpus(g, &s)
        }
        Command::Attribute {
            features,
            model,
            input,
            sigma_max,
            steps,
        } => {
            features.apply(&mut s);
            if let Some(v) = sigma_max {
                s.attribution.sigma_max = v;
            }
            if let Some(v) = steps {
                s.attribution.steps = v;
            }
            attribute(g, &s, &model, &input)
        }
    }
}

enum Outcome {
    Extracted,
    Skipped,
    Failed(String),
}

fn up_to_date(cache: &Path, source: &Path) -> bool {
    let modified = |p: &Path| fs::metadata(p).and_then(|m| m.modified()).ok();
    match (modified(cache), modified(source)) {
        (Some(c), Some(s)) => c >= s,
        _ => false,
    }
}

fn extract(g: &GlobalArgs, s: &Settings, force: bool) -> Result<()> {
    let manifest_path = require_manifest(g);
    let out = require_out(g)?;
    let manifest = load_manifest(manifest_path)?;
    let ex = extractor(s)?;
    let fp = ex.fingerprint();
    let same_config = cache_fingerprint(&out)
        .map(|prev| prev == fp)
        .unwrap_or(false);

    let outcomes: Vec<Outcome> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let cache = cache_path(&out, e);
            if !force && same_config && up_to_date(&cache, &manifest.resolve(e)) {
                return Outcome::Skipped;
            }
            let result = load_clip(&manifest, e, s)
                .and_then(|clip| Ok(ex.extract(&clip)?))
                .and_then(|f| Ok(write_feature_cache(&f, &cache)?));
            match result {
                Ok(()) => Outcome::Extracted,
                Err(err) => Outcome::Failed(format!("{err:#}")),
            }
        })
        .collect();

    let mut clips = Vec::new();
    let mut failed = Vec::new();
    let (mut n_new, mut n_skip) = (0, 0);
    for (e, o) in manifest.entries.iter().zip(&outcomes) {
        let id = CorpusManifest::clip_id(e);
        match o {
            Outcome::Extracted => n_new += 1,
            Outcome::Skipped => n_skip += 1,
            Outcome::Failed(msg) => {
                eprintln!("error: {}: {msg}", e.path);
                failed.push(json!({"clip": id, "error": msg}));
                continue;
            }
        }
        clips.push(id);
    }
    let prov = provenance("extract", s, json!({"manifest": path_str(manifest_path)}));
    write_json(
        &out.join(PROVENANCE_FILE),
        &json!({
            "fingerprint": fp,
            "clips": clips,
            "failed": failed,
            "provenance": prov,
        }),
    )?;
    println!(
        "extracted {n_new}, skipped {n_skip}, failed {}",
        failed.len()
    );
    if !failed.is_empty() {
        bail!(
            "{} of {} clips failed",
            failed.len(),
            manifest.entries.len()
        );
    }
    Ok(())
}

fn load_collections(
    manifest: &CorpusManifest,
    s: &Settings,
) -> Result<Vec<(String, Vec<AudioClip>)>> {
    let clips: Vec<AudioClip> = manifest
        .entries
        .par_iter()
        .map(|e| load_clip(manifest, e, s).with_context(|| format!("clip {}", e.path)))
        .collect::<Result<_>>()?;
    Ok(manifest
        .collections()
        .into_iter()
        .map(|c| {
            let members = manifest
                .entries
                .iter()
                .zip(&clips)
                .filter(|(e, _)| e.collection == c)
                .map(|(_, clip)| clip.clone())
                .collect();
            (c, members)
        })
        .collect())
}

fn analyze(
    g: &GlobalArgs,
    s: &Settings,
    reference: Option<String>,
    compare: Vec<String>,
) -> Result<()> {
    let manifest_path = require_manifest(g);
    let out = require_out(g)?;
    let manifest = load_manifest(manifest_path)?;
    let names = manifest.collections();
    let reference = match reference.or_else(|| s.reference.clone()) {
        Some(r) => r,
        None => manifest
            .collections_with_label(Label::Real)
            .into_iter()
            .next()
            .ok_or_else(|| {
                vocodet::Error::Config(
                    "no real collection to use as reference; pass --reference".into(),
                )
            })?,
    };
    if !names.contains(&reference) {
        return Err(vocodet::Error::Config(format!(
            "reference collection '{reference}' is not in the manifest"
        ))
        .into());
    }
    let compare: Vec<String> = if compare.is_empty() {
        names.iter().filter(|c| **c != reference).cloned().collect()
    } else {
        compare
    };
    for c in &compare {
        if !names.contains(c) {
            return Err(
                vocodet::Error::Config(format!("collection '{c}' is not in the manifest")).into(),
            );
        }
    }

    let groups = load_collections(&manifest, s)?;
    let results: Vec<_> = groups
        .par_iter()
        .map(|(name, clips)| -> Result<_> {
            let stats = corpus_stats(clips, &s.pitch, &s.analysis_frame)
                .with_context(|| format!("collection {name}"))?;
            let hist = energy_histogram(clips, &s.analysis_frame)?;
            Ok((name.clone(), stats, hist))
        })
        .collect::<Result<_>>()?;

    let rows: Vec<_> = results.iter().map(|(n, st, _)| (n.clone(), *st)).collect();
    let mut buf = Vec::new();
    write_stats_csv(&rows, &mut buf)?;
    write_text(&out.join("stats.csv"), buf)?;
    let hist_of = |name: &str| {
        &results
            .iter()
            .find(|(n, _, _)| n == name)
            .expect("loaded")
            .2
    };
    for (name, _, hist) in &results {
        let mut buf = Vec::new();
        write_histogram_csv(hist, None, &mut buf)?;
        write_text(&out.join(format!("histogram_{}.csv", safe_name(name))), buf)?;
    }
    for name in &compare {
        let diff = histogram_difference(hist_of(name), hist_of(&reference))?;
        let mut buf = Vec::new();
        write_histogram_csv(hist_of(name), Some(&diff), &mut buf)?;
        write_text(
            &out.join(format!("difference_{}.csv", safe_name(name))),
            buf,
        )?;
    }
    let prov = provenance(
        "analyze",
        s,
        json!({"manifest": path_str(manifest_path), "reference": reference, "compare": compare}),
    );
    write_json(&out.join(PROVENANCE_FILE), &prov)?;
    println!(
        "analyzed {} collections against '{reference}'",
        results.len()
    );
    Ok(())
}

fn fake_collections(corpus: &Corpus, requested: Vec<String>) -> Vec<String> {
    if requested.is_empty() {
        corpus.collections_with_label(Label::Fake)
    } else {
        requested
    }
}

fn cmd_train(g: &GlobalArgs, s: &Settings, cache: Option<&Path>, fake: Vec<String>) -> Result<()> {
    let manifest_path = require_manifest(g);
    let out = require_out(g)?;
    let manifest = load_manifest(manifest_path)?;
    let (corpus, fp) = load_corpus(&manifest, s, cache)?;
    let fakes = fake_collections(&corpus, fake);
    let cfg = experiment(s);
    let (pair, counts) = train_detector(&corpus, &fakes, &cfg)?;
    let counts: serde_json::Map<String, Value> = counts
        .into_iter()
        .map(|(k, (train, holdout))| (k, json!({"train": train, "holdout": holdout})))
        .collect();
    let prov = provenance(
        "train",
        s,
        json!({
            "manifest": path_str(manifest_path),
            "features": cache.map(path_str),
            "fake_collections": fakes,
            "split": {"seed": cfg.split_seed, "holdout_fraction": cfg.holdout_fraction},
            "file_counts": counts,
            "fingerprint": fp,
        }),
    );
    pair.save(out.join("detector.json"), prov)?;
    println!(
        "trained {} + {} components on {} dims",
        pair.real.n_components(),
        pair.fake.n_components(),
        pair.dim()
    );
    Ok(())
}

fn model_split(prov: &Value, s: &Settings) -> (u64, f64) {
    let split = prov.get("inputs").and_then(|i| i.get("split"));
    let seed = split
        .and_then(|v| v.get("seed"))
        .and_then(Value::as_u64)
        .unwrap_or(s.seed);
    let frac = split
        .and_then(|v| v.get("holdout_fraction"))
        .and_then(Value::as_f64)
        .unwrap_or(s.holdout_fraction);
    (seed, frac)
}

fn cmd_score(
    g: &GlobalArgs,
    s: &Settings,
    model: &Path,
    cache: Option<&Path>,
    split: SplitArg,
) -> Result<()> {
    let manifest_path = require_manifest(g);
    let out = require_out(g)?;
    let (pair, model_prov) =
        DetectorPair::load(model).with_context(|| format!("loading {}", model.display()))?;
    let manifest = load_manifest(manifest_path)?;
    let (corpus, _) = load_corpus(&manifest, s, cache)?;
    if let Some(first) = corpus.items.first() {
        pair.check_compatible(&first.features)?;
    }
    let (split_seed, fraction) = model_split(&model_prov, s);
    let selected: BTreeSet<(String, String)> = match split {
        SplitArg::All => corpus
            .items
            .iter()
            .map(|it| (it.collection.clone(), it.id.clone()))
            .collect(),
        SplitArg::Holdout => {
            let mut keep = BTreeSet::new();
            for label in [Label::Real, Label::Fake] {
                for c in corpus.collections_with_label(label) {
                    for it in corpus.partition(&c, label, split_seed, fraction)?.holdout {
                        keep.insert((it.collection.clone(), it.id.clone()));
                    }
                }
            }
            keep
        }
    };
    let chosen: Vec<_> = corpus
        .items
        .iter()
        .filter(|it| selected.contains(&(it.collection.clone(), it.id.clone())))
        .collect();
    let scores: Vec<f64> = chosen
        .par_iter()
        .map(|it| score(&pair, &it.features))
        .collect::<vocodet::Result<_>>()?;

    let mut csv = Vec::new();
    writeln!(csv, "id,collection,label,score")?;
    for (it, sc) in chosen.iter().zip(&scores) {
        writeln!(csv, "{},{},{},{}", it.id, it.collection, it.label, sc)?;
    }
    write_text(&out.join("scores.csv"), csv)?;

    let real: Vec<f64> = chosen
        .iter()
        .zip(&scores)
        .filter(|(it, _)| it.label == Label::Real)
        .map(|(_, s)| *s)
        .collect();
    let mut eer_csv = Vec::new();
    writeln!(eer_csv, "collection,eer,threshold")?;
    for c in corpus.collections_with_label(Label::Fake) {
        let fake: Vec<f64> = chosen
            .iter()
            .zip(&scores)
            .filter(|(it, _)| it.label == Label::Fake && it.collection == c)
            .map(|(_, s)| *s)
            .collect();
        if real.is_empty() || fake.is_empty() {
            continue;
        }
        let r = compute_eer(&ScoreSet {
            real: real.clone(),
            fake,
        })?;
        writeln!(eer_csv, "{c},{},{}", r.eer, r.threshold)?;
        println!("{c}: EER {:.4}", r.eer);
    }
    write_text(&out.join("eer.csv"), eer_csv)?;
    let prov = provenance(
        "score",
        s,
        json!({
            "manifest": path_str(manifest_path),
            "model": path_str(model),
            "features": cache.map(path_str),
            "split": match split { SplitArg::All => "all", SplitArg::Holdout => "holdout" },
            "split_seed": split_seed,
            "holdout_fraction": fraction,
            "scored": chosen.len(),
        }),
    );
    write_json(&out.join(PROVENANCE_FILE), &prov)?;
    Ok(())
}

fn write_report(out: &Path, mut report: vocodet::eval::EvalReport, prov: Value) -> Result<()> {
    report.provenance = json!({"run": prov, "experiment": report.provenance});
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_text(&out.join("report.csv"), csv)?;
    write_text(&out.join("report.json"), report.to_json()?.into_bytes())?;
    for (row, a) in report.rows.iter().zip(&report.aeer) {
        println!("{row}: aEER {a:.4}");
    }
    Ok(())
}

fn cmd_eval(
    g: &GlobalArgs,
    s: &Settings,
    cache: Option<&Path>,
    train_sets: Vec<String>,
    test_sets: Vec<String>,
) -> Result<()> {
    let manifest_path = require_manifest(g);
    let out = require_out(g)?;
    let manifest = load_manifest(manifest_path)?;
    let (corpus, fp) = load_corpus(&manifest, s, cache)?;
    let rows = fake_collections(&corpus, train_sets);
    let cols = fake_collections(&corpus, test_sets);
    let report = run_experiment(&corpus, &rows, &cols, &experiment(s))?;
    let prov = provenance(
        "eval",
        s,
        json!({"manifest": path_str(manifest_path), "features": cache.map(path_str), "fingerprint": fp}),
    );
    write_report(&out, report, prov)
}

fn cmd_loo(
    g: &GlobalArgs,
    s: &Settings,
    cache: Option<&Path>,
    collections: Vec<String>,
) -> Result<()> {
    let manifest_path = require_manifest(g);
    let out = require_out(g)?;
    let manifest = load_manifest(manifest_path)?;
    let (corpus, fp) = load_corpus(&manifest, s, cache)?;
    let names = fake_collections(&corpus, collections);
    let report = run_leave_one_out(&corpus, &names, &experiment(s))?;
    let prov = provenance(
        "loo",
        s,
        json!({"manifest": path_str(manifest_path), "features": cache.map(path_str), "fingerprint": fp}),
    );
    write_report(&out, report, prov)
}

/// Output location of an entry below `out`, mirroring its manifest path.
fn mirrored(entry: &ManifestEntry) -> PathBuf {
    let p = Path::new(&entry.path);
    if p.is_absolute() {
        PathBuf::from(format!("{}.wav", CorpusManifest::clip_id(entry)))
    } else {
        p.components()
            .filter(|c| matches!(c, std::path::Component::Normal(_)))
            .collect()
    }
}

fn simulate(g: &GlobalArgs, s: &Settings) -> Result<()> {
    let manifest_path = require_manifest(g);
    let out = require_out(g)?;
    let manifest = load_manifest(manifest_path)?;
    let results: Vec<Result<PathBuf>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let rel = mirrored(e);
            let target = out.join(&rel);
            let clip = load_wav(manifest.resolve(e))?;
            let phone = simulate_phone(&clip, &s.phone)?;
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            write_wav(&phone, &target)?;
            Ok(rel)
        })
        .collect();
    let mut entries = Vec::new();
    let mut failed = 0;
    for (e, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(rel) => entries.push(ManifestEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                label: e.label,
                collection: e.collection.clone(),
            }),
            Err(err) => {
                eprintln!("error: {}: {err:#}", e.path);
                failed += 1;
            }
        }
    }
    CorpusManifest::new(".", entries).save(out.join("manifest.json"))?;
    let prov = provenance(
        "simulate-phone",
        s,
        json!({"manifest": path_str(manifest_path)}),
    );
    write_json(&out.join(PROVENANCE_FILE), &prov)?;
    println!(
        "converted {} clips, failed {failed}",
        manifest.entries.len() - failed
    );
    if failed > 0 {
        bail!("{failed} of {} clips failed", manifest.entries.len());
    }
    Ok(())
}

fn synth_corpus(g: &GlobalArgs, s: &Settings) -> Result<()> {
    let out = require_out(g)?;
    let spec = s.synth;
    if spec.n_real < 2 || spec.n_fake < 2 * spec.fake_collections.max(1) {
        bail!("need at least two clips per collection");
    }
    let jobs: Vec<(Label, usize)> = (0..spec.n_real)
        .map(|i| (Label::Real, i))
        .chain((0..spec.n_fake).map(|i| (Label::Fake, i)))
        .collect();
    let clips: Vec<SynthClip> = jobs
        .par_iter()
        .map(|&(label, i)| {
            let c = synth_clip(&spec, s.seed, label, i)?;
            let target = out.join(&c.path);
            fs::create_dir_all(target.parent().expect("nested path"))?;
            write_wav(&c.clip, &target)?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let entries = clips
        .iter()
        .map(|c| ManifestEntry {
            path: c.path.clone(),
            label: c.label,
            collection: c.collection.clone(),
        })
        .collect();
    CorpusManifest::new(".", entries).save(out.join("manifest.json"))?;
    write_json(
        &out.join(PROVENANCE_FILE),
        &provenance("synth-corpus", s, json!({})),
    )?;
    println!("wrote {} real and {} fake clips", spec.n_real, spec.n_fake);
    Ok(())
}

fn attribute(g: &GlobalArgs, s: &Settings, model: &Path, input: &Path) -> Result<()> {
    let out = require_out(g)?;
    let (pair, _) =
        DetectorPair::load(model).with_context(|| format!("loading {}", model.display()))?;
    let clip = s.preprocess.apply(&load_wav(input)?)?;
    let feats = extractor(s)?.extract(&clip)?;
    let map = blur_ig(&pair, &feats, &s.attribution)?;
    let mut csv = Vec::new();
    map.write_csv(&mut csv)?;
    write_text(&out.join("attribution.csv"), csv)?;
    let mut pgm = Vec::new();
    map.write_pgm(&mut pgm)?;
    write_text(&out.join("heatmap.pgm"), pgm)?;
    let prov = provenance(
        "attribute",
        s,
        json!({"model": path_str(model), "input": path_str(input)}),
    );
    write_json(
        &out.join("attribution.json"),
        &json!({
            "score": map.score,
            "baseline_score": map.baseline_score,
            "total": map.total(),
            "completeness_residual": map.completeness_residual(),
            "frames": feats.n_frames(),
            "coeffs": feats.n_coeffs(),
            "provenance": prov,
        }),
    )?;
    println!(
        "score {:.4}, baseline {:.4}, attribution sum {:.4}",
        map.score,
        map.baseline_score,
        map.total()
    );
    Ok(())
}
