//! Replays the fuzz targets' invariants over the checked-in seed corpora so
//! they hold on stable toolchains too.

use std::path::{Path, PathBuf};

use agrimuse::corpus::{parse_descriptions, split_sentences, tag_sentence, Corpus, TopicVocabulary};
use agrimuse::embedstore::{decode, encode};
use agrimuse::evaluation::ExperimentSpec;
use agrimuse::training::TrainConfig;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn decode_embeddings_seeds() {
    let mut accepted = 0;
    for (path, bytes) in seeds("decode_embeddings") {
        if let Ok(set) = decode(&bytes, "fuzz") {
            assert_eq!(decode(&encode(&set).unwrap(), "fuzz").unwrap(), set, "{}", path.display());
            accepted += 1;
        }
        // no truncation may panic
        for cut in 0..bytes.len() {
            let _ = decode(&bytes[..cut], "fuzz");
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn corpus_json_seeds() {
    for (path, bytes) in seeds("corpus_json") {
        if let Ok(c) = Corpus::from_json(&bytes) {
            assert_eq!(Corpus::from_json(c.to_json().as_bytes()).unwrap(), c, "{}", path.display());
        }
    }
}

#[test]
fn descriptions_and_sentences_seeds() {
    for (_, bytes) in seeds("descriptions_jsonl") {
        let parsed = parse_descriptions(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert!(!parsed.is_empty());
    }
    let vocabulary = TopicVocabulary::builtin();
    for (path, bytes) in seeds("sentences") {
        let sentences = split_sentences(std::str::from_utf8(&bytes).unwrap());
        for s in &sentences {
            assert!(!s.is_empty() && s.trim() == s);
            let _ = tag_sentence(s, &vocabulary);
        }
        assert_eq!(split_sentences(&sentences.join(" ")), sentences, "{}", path.display());
    }
}

#[test]
fn run_config_seeds() {
    for (path, bytes) in seeds("run_config") {
        let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let as_train = serde_json::from_slice::<TrainConfig>(&bytes).map(|c| c.validate());
        let as_spec = ExperimentSpec::parse(&value);
        assert!(as_train.is_ok() || as_spec.is_ok(), "{}", path.display());
    }
}
