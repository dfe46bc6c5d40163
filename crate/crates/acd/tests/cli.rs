use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use acd::config::RunConfig;
use acd::error::CliError;
use acd::io::{load_corpus, load_word_vectors, read_meetings, write_corpus, write_word_vectors};
use acd_core::corpus::default_blocklist;
use acd_core::synthetic::{generate, SyntheticConfig};
use acd_core::Error;

fn acd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acd")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn synth(dir: &Path) {
    let out = acd(&["synth", "--out", &s(dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(code(&acd(&["--help"])), 0);
    assert_eq!(code(&acd(&["no-such-command"])), 2);
    assert_eq!(code(&acd(&["gradcheck", "--eps", "abc"])), 2);
}

#[test]
fn invalid_config_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[fcm]\nfuzziness = 0.5\n").unwrap();
    let out = acd(&["ingest-check", "--config", &s(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fuzziness"));

    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_ne!(code(&acd(&["ingest-check", "--config", &s(&cfg)])), 0);
}

#[test]
fn missing_corpus_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "corpus = \"nowhere\"\n").unwrap();
    let out = acd(&["ingest-check", "--config", &s(&cfg)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn schema_errors_name_meeting_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    fs::write(
        &path,
        r#"{"meeting_id": "ES2002a", "partition": "train",
            "utterances": [{"index": 0, "role": "PM", "dialogue_act": "inf",
                            "tokens": "not a list", "summary_worthy": true}],
            "communities": []}"#,
    )
    .unwrap();
    match read_meetings(&path, &default_blocklist()) {
        Err(CliError::Domain(Error::Schema { meeting, path, .. })) => {
            assert_eq!(meeting, "ES2002a");
            assert_eq!(path, "utterances[0].tokens");
        }
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn corpus_round_trips_and_rejects_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let syn = generate(&SyntheticConfig {
        meetings: 4,
        validation_meetings: 1,
        test_meetings: 1,
        ..SyntheticConfig::default()
    })
    .unwrap();
    write_corpus(dir.path(), &syn.meetings).unwrap();
    let back = load_corpus(dir.path(), &default_blocklist()).unwrap();
    assert_eq!(back, syn.meetings);

    fs::copy(dir.path().join("SYN000.json"), dir.path().join("zz-copy.json")).unwrap();
    assert!(matches!(
        load_corpus(dir.path(), &default_blocklist()),
        Err(CliError::Domain(Error::Schema { .. }))
    ));
}

#[test]
fn word_vectors_with_and_without_header() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("plain.txt");
    fs::write(&plain, "alpha 1 2 3\nbeta 4 5 6\n").unwrap();
    let v = load_word_vectors(&plain, None).unwrap();
    assert_eq!((v.len(), v.dim()), (2, 3));
    assert_eq!(v.get("beta").unwrap(), &[4.0, 5.0, 6.0]);

    let headed = dir.path().join("headed.txt");
    write_word_vectors(&headed, &v).unwrap();
    assert!(fs::read_to_string(&headed).unwrap().starts_with("2 3\n"));
    let back = load_word_vectors(&headed, None).unwrap();
    assert_eq!(back.get("alpha"), v.get("alpha"));

    let keep: BTreeSet<String> = ["alpha".to_string()].into();
    assert_eq!(load_word_vectors(&plain, Some(&keep)).unwrap().len(), 1);

    let ragged = dir.path().join("ragged.txt");
    fs::write(&ragged, "alpha 1 2 3\nbeta 4 5\n").unwrap();
    let err = load_word_vectors(&ragged, None).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn synth_config_loads_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    cfg.validate().unwrap();
    cfg.validate_paths(true).unwrap();
    assert_eq!(cfg.corpus.unwrap(), dir.path().join("corpus"));
    assert_eq!(RunConfig::from_toml(&fs::read_to_string(dir.path().join("config.toml")).unwrap()).unwrap().seed, 0);
}

#[test]
fn ingest_and_sample_stats_on_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = s(&dir.path().join("config.toml"));
    let out_dir = dir.path().join("out");
    assert_eq!(code(&acd(&["ingest-check", "--config", &cfg, "--out", &s(&out_dir)])), 0);
    assert!(out_dir.join("ingest.json").exists());

    let out = acd(&["sample-stats", "--config", &cfg, "--meta", "siamese", "--out", &s(&out_dir)]);
    assert_eq!(code(&out), 0);
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("sample_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["epoch_examples"]["genuine"], 15594);
    assert_eq!(stats["epoch_examples"]["impostor"], 15594);
    assert_eq!(stats["epochs_differ"], true);
    assert_eq!(stats["rerun_identical"], true);
}

#[test]
fn gradcheck_passes_on_a_small_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(
        &cfg,
        "[encoder]\nfeature_dim = 6\ntoken_dim = 6\nembedding_dim = 4\ncontext_pre = 2\ncontext_post = 2\nmax_tokens = 5\n",
    )
    .unwrap();
    let out = acd(&["gradcheck", "--config", &s(&cfg)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn baseline_and_checkpoint_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = dir.path().join("small.toml");
    fs::write(
        &cfg,
        "corpus = \"corpus\"\nembeddings = \"vectors.txt\"\n[encoder]\ncontext_pre = 1\ncontext_post = 1\n\
         [train]\nepochs = 1\nexamples_per_epoch = 32\nvalidation_examples = 16\nruns = 1\n[fcm]\nrestarts = 2\n",
    )
    .unwrap();
    let (c, o) = (s(&cfg), |p: &str| s(&dir.path().join(p)));
    assert_eq!(code(&acd(&["baseline", "--config", &c, "--kind", "w2v", "--out", &o("bl")])), 0);
    assert!(dir.path().join("bl/metrics.json").exists());

    assert_eq!(code(&acd(&["train", "--config", &c, "--out", &o("tr")])), 0);
    let ckpt = o("tr/run-00/best.ckpt");
    assert_eq!(code(&acd(&["evaluate", "--config", &c, "--checkpoint", &ckpt, "--out", &o("ev")])), 0);
    // A different context size changes the encoder hash.
    let out = acd(&["evaluate", "--config", &c, "--checkpoint", &ckpt, "--pre", "2", "--out", &o("ev2")]);
    assert_eq!(code(&out), 1);
}
