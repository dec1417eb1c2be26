//! Every decoder returns an error rather than panicking on malformed input.

use geppo::approximator::{Checkpoint, GaussianPolicy};
use geppo::config::TrainerConfig;
use geppo::envs::TrajectoryBatch;
use geppo::harness::RunRecord;
use geppo::tabular::TabularMdp;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn valid_checkpoint_bytes() -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    GaussianPolicy::init(2, &[3], &[1.0], 1.0, &mut rng)
        .unwrap()
        .to_checkpoint()
        .to_bytes()
}

fn decode_all_text(s: &str) {
    let _ = TabularMdp::from_json(s);
    let _ = TrainerConfig::from_json(s);
    let _ = Checkpoint::from_json(s);
    let _ = RunRecord::parse_metrics(s);
    let _ = TrajectoryBatch::from_jsonl(s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_text(s in "\\PC{0,200}") {
        decode_all_text(&s);
    }

    #[test]
    fn json_shaped_text(s in r#"[\{\}\[\]",:0-9a-z_ .eE+-]{0,160}"#) {
        decode_all_text(&s);
    }

    #[test]
    fn arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = Checkpoint::from_bytes(&bytes);
    }

    #[test]
    fn mutated_checkpoint(flips in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6), cut in any::<prop::sample::Index>()) {
        let mut bytes = valid_checkpoint_bytes();
        for (i, b) in flips {
            let at = i.index(bytes.len());
            bytes[at] = b;
        }
        let keep = cut.index(bytes.len() + 1);
        let _ = Checkpoint::from_bytes(&bytes);
        let _ = Checkpoint::from_bytes(&bytes[..keep]);
    }
}

#[test]
fn valid_checkpoint_round_trips() {
    let bytes = valid_checkpoint_bytes();
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ckpt.to_bytes(), bytes);
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

fn corpus_seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut seeds: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("seed-")
        })
        .collect();
    seeds.sort();
    assert!(!seeds.is_empty(), "no seeds in {}", dir.display());
    seeds.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn fuzz_corpus_seeds_decode() {
    let text = |b: &[u8]| String::from_utf8(b.to_vec()).unwrap();
    for s in corpus_seeds("tabular_mdp_json") {
        TabularMdp::from_json(&text(&s)).unwrap();
    }
    for s in corpus_seeds("trainer_config_json") {
        TrainerConfig::from_json(&text(&s))
            .unwrap()
            .resolve()
            .unwrap();
    }
    for s in corpus_seeds("checkpoint_json") {
        Checkpoint::from_json(&text(&s)).unwrap();
    }
    for s in corpus_seeds("checkpoint_binary") {
        assert_eq!(Checkpoint::from_bytes(&s).unwrap().to_bytes(), s);
    }
    for s in corpus_seeds("metrics_jsonl") {
        assert!(!RunRecord::parse_metrics(&text(&s)).unwrap().is_empty());
    }
    for s in corpus_seeds("trajectory_jsonl") {
        assert!(!TrajectoryBatch::from_jsonl(&text(&s))
            .unwrap()
            .transitions
            .is_empty());
    }
}
