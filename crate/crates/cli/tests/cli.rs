use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vocodet::audio_io::{
    load_wav, synth_signal, write_wav, CorpusManifest, Label, ManifestEntry, SignalKind,
};

fn vocodet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vocodet"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = vocodet(dir, args);
    assert!(
        out.status.success(),
        "vocodet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn small_corpus(dir: &Path) {
    ok(
        dir,
        &[
            "synth-corpus",
            "--n-real",
            "10",
            "--n-fake",
            "10",
            "--duration",
            "0.5",
            "--out",
            "corpus",
        ],
    );
}

#[test]
fn help_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert!(vocodet(dir.path(), &["--help"]).status.success());
    assert!(vocodet(dir.path(), &["train", "--help"]).status.success());
    let bad = vocodet(dir.path(), &["extract", "--no-such-flag"]);
    assert_eq!(bad.status.code(), Some(2));
    let missing = vocodet(dir.path(), &["extract", "--out", "x"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--manifest"));
    let zero_jobs = vocodet(dir.path(), &["--jobs", "0", "synth-corpus", "--out", "x"]);
    assert!(!zero_jobs.status.success());
}

#[test]
fn synth_corpus_is_reproducible_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "--seed",
            "4",
            "synth-corpus",
            "--n-real",
            "6",
            "--n-fake",
            "6",
            "--out",
            "a",
        ],
    );
    ok(
        dir.path(),
        &[
            "--seed",
            "4",
            "synth-corpus",
            "--n-real",
            "6",
            "--n-fake",
            "6",
            "--out",
            "b",
        ],
    );
    let m = CorpusManifest::load(dir.path().join("a/manifest.json")).unwrap();
    assert_eq!(m.entries.len(), 12);
    m.validate().unwrap();
    for e in &m.entries {
        let a = fs::read(dir.path().join("a").join(&e.path)).unwrap();
        let b = fs::read(dir.path().join("b").join(&e.path)).unwrap();
        assert_eq!(a, b, "{}", e.path);
    }
}

#[test]
fn extract_skips_up_to_date_caches() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let first = ok(
        dir.path(),
        &[
            "extract",
            "--manifest",
            "corpus/manifest.json",
            "--out",
            "feats",
        ],
    );
    assert!(first.contains("extracted 20, skipped 0"), "{first}");
    let second = ok(
        dir.path(),
        &[
            "extract",
            "--manifest",
            "corpus/manifest.json",
            "--out",
            "feats",
        ],
    );
    assert!(second.contains("extracted 0, skipped 20"), "{second}");
    let changed = ok(
        dir.path(),
        &[
            "extract",
            "--manifest",
            "corpus/manifest.json",
            "--coeffs",
            "12",
            "--out",
            "feats",
        ],
    );
    assert!(changed.contains("extracted 20"), "{changed}");
    let forced = ok(
        dir.path(),
        &[
            "extract",
            "--manifest",
            "corpus/manifest.json",
            "--coeffs",
            "12",
            "--force",
            "--out",
            "feats",
        ],
    );
    assert!(forced.contains("extracted 20"), "{forced}");
}

#[test]
fn corrupt_wav_is_reported_and_others_still_extracted() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let path = dir.path().join("corpus/real/tone_0003.wav");
    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(30);
    fs::write(&path, bytes).unwrap();
    let out = vocodet(
        dir.path(),
        &[
            "extract",
            "--manifest",
            "corpus/manifest.json",
            "--out",
            "feats",
        ],
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("tone_0003.wav"), "{stderr}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("extracted 19, skipped 0, failed 1"));
    let caches = fs::read_dir(dir.path().join("feats")).unwrap().count();
    assert_eq!(caches, 20, "19 caches plus provenance.json");

    let train = vocodet(
        dir.path(),
        &[
            "train",
            "--manifest",
            "corpus/manifest.json",
            "--components",
            "2",
            "--out",
            "m",
        ],
    );
    assert!(!train.status.success());
    assert!(String::from_utf8_lossy(&train.stderr).contains("tone_0003.wav"));
}

#[test]
fn scoring_with_other_feature_flags_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    ok(
        dir.path(),
        &[
            "train",
            "--manifest",
            "corpus/manifest.json",
            "--components",
            "2",
            "--out",
            "m",
        ],
    );
    let same_dim = vocodet(
        dir.path(),
        &[
            "score",
            "--manifest",
            "corpus/manifest.json",
            "--model",
            "m/detector.json",
            "--kind",
            "mfcc",
            "--out",
            "s",
        ],
    );
    assert!(!same_dim.status.success());
    assert!(String::from_utf8_lossy(&same_dim.stderr).contains("feature configuration mismatch"));
    let other_dim = vocodet(
        dir.path(),
        &[
            "score",
            "--manifest",
            "corpus/manifest.json",
            "--model",
            "m/detector.json",
            "--coeffs",
            "10",
            "--out",
            "s",
        ],
    );
    assert!(!other_dim.status.success());

    let scored = ok(
        dir.path(),
        &[
            "score",
            "--manifest",
            "corpus/manifest.json",
            "--model",
            "m/detector.json",
            "--out",
            "s",
        ],
    );
    assert!(scored.contains("EER"));
    let scores = fs::read_to_string(dir.path().join("s/scores.csv")).unwrap();
    assert_eq!(scores.lines().next(), Some("id,collection,label,score"));
    // two of ten clips per collection are held out
    assert_eq!(scores.lines().count(), 1 + 4);
}

#[test]
fn analyze_writes_stats_and_differences() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    ok(
        dir.path(),
        &[
            "analyze",
            "--manifest",
            "corpus/manifest.json",
            "--out",
            "a",
        ],
    );
    let stats = fs::read_to_string(dir.path().join("a/stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 3);
    let diffs: Vec<_> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("difference_"))
        .collect();
    assert_eq!(diffs, vec!["difference_shaped_noise.csv".to_string()]);

    let missing = vocodet(
        dir.path(),
        &[
            "analyze",
            "--manifest",
            "corpus/manifest.json",
            "--reference",
            "nope",
            "--out",
            "a",
        ],
    );
    assert!(!missing.status.success());
}

#[test]
fn simulate_phone_mirrors_the_tree() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("in");
    fs::create_dir_all(root.join("sub")).unwrap();
    let tone = synth_signal(SignalKind::Sine { freq: 1000.0 }, 0.5, 22050).unwrap();
    write_wav(&tone, root.join("sub/tone.wav")).unwrap();
    let noise = synth_signal(SignalKind::WhiteNoise { seed: 1 }, 0.5, 16000).unwrap();
    write_wav(&noise.scaled(0.3), root.join("noise.wav")).unwrap();
    let entries = vec![
        ManifestEntry {
            path: "sub/tone.wav".into(),
            label: Label::Real,
            collection: "a".into(),
        },
        ManifestEntry {
            path: "noise.wav".into(),
            label: Label::Fake,
            collection: "b".into(),
        },
    ];
    CorpusManifest::new(".", entries)
        .save(root.join("manifest.json"))
        .unwrap();
    ok(
        dir.path(),
        &[
            "simulate-phone",
            "--manifest",
            "in/manifest.json",
            "--out",
            "out",
        ],
    );
    let m = CorpusManifest::load(dir.path().join("out/manifest.json")).unwrap();
    assert_eq!(m.entries.len(), 2);
    let out = load_wav(dir.path().join("out/sub/tone.wav")).unwrap();
    assert_eq!(out.sample_rate, 16000);
    let ratio_db = 20.0 * (out.rms() / tone.rms()).log10();
    assert!(ratio_db.abs() < 3.0, "{ratio_db} dB");
    assert!(dir.path().join("out/noise.wav").is_file());
}

#[test]
fn attribute_writes_map_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    ok(
        dir.path(),
        &[
            "train",
            "--manifest",
            "corpus/manifest.json",
            "--components",
            "2",
            "--out",
            "m",
        ],
    );
    ok(
        dir.path(),
        &[
            "attribute",
            "--model",
            "m/detector.json",
            "--input",
            "corpus/real/tone_0000.wav",
            "--steps",
            "30",
            "--out",
            "at",
        ],
    );
    let pgm = fs::read_to_string(dir.path().join("at/heatmap.pgm")).unwrap();
    assert!(pgm.starts_with("P2"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("at/attribution.json")).unwrap())
            .unwrap();
    let residual = summary["completeness_residual"].as_f64().unwrap();
    assert!(residual.is_finite());
    let csv = fs::read_to_string(dir.path().join("at/attribution.csv")).unwrap();
    let frames = summary["frames"].as_u64().unwrap() as usize;
    let coeffs = summary["coeffs"].as_u64().unwrap() as usize;
    assert_eq!(csv.lines().count(), 1 + 3 * frames * coeffs);
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"synth": {"n_real": 4, "n_fake": 6}}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "--config",
            "c.json",
            "synth-corpus",
            "--n-fake",
            "8",
            "--out",
            "c",
        ],
    );
    let m = CorpusManifest::load(dir.path().join("c/manifest.json")).unwrap();
    assert_eq!(
        m.entries.iter().filter(|e| e.label == Label::Real).count(),
        4
    );
    assert_eq!(
        m.entries.iter().filter(|e| e.label == Label::Fake).count(),
        8
    );

    fs::write(dir.path().join("bad.json"), r#"{"trian": {}}"#).unwrap();
    assert!(!vocodet(
        dir.path(),
        &["--config", "bad.json", "synth-corpus", "--out", "d"]
    )
    .status
    .success());
}

#[test]
fn eval_and_loo_reports() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth-corpus",
            "--n-real",
            "10",
            "--n-fake",
            "20",
            "--fake-collections",
            "2",
            "--duration",
            "0.5",
            "--out",
            "corpus",
        ],
    );
    ok(
        dir.path(),
        &[
            "eval",
            "--manifest",
            "corpus/manifest.json",
            "--components",
            "2",
            "--out",
            "e",
        ],
    );
    let report = fs::read_to_string(dir.path().join("e/report.csv")).unwrap();
    assert_eq!(
        report.lines().next(),
        Some("train,shaped_noise_1,shaped_noise_2,aEER")
    );
    assert_eq!(report.lines().count(), 3);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("e/report.json")).unwrap())
            .unwrap();
    assert!(json["provenance"]["run"]["settings"]["seed"].is_u64());
    ok(
        dir.path(),
        &[
            "loo",
            "--manifest",
            "corpus/manifest.json",
            "--components",
            "2",
            "--out",
            "l",
        ],
    );
    assert!(dir.path().join("l/report.csv").is_file());
    let unknown = vocodet(
        dir.path(),
        &[
            "eval",
            "--manifest",
            "corpus/manifest.json",
            "--components",
            "2",
            "--train-sets",
            "nope",
            "--out",
            "e",
        ],
    );
    assert!(!unknown.status.success());
}
