//! Tokenizer round trips, injectivity and efficiency on synthetic conn lines.

use std::collections::HashMap;
use std::io::Cursor;

use clem_core::synth::{generate, NetProfile};
use clem_core::tokenizer::{pretokenize, train_wordpiece, Vocab, PAD, SEP, UNK};
use clem_core::zeek::{read_conn_log, Exclusions};
use proptest::prelude::*;

fn corpus(n: usize, seed: u64) -> Vec<String> {
    let out = generate(&NetProfile::four_role(seed, n), n).unwrap();
    read_conn_log(Cursor::new(out.log), None, &Exclusions::default())
        .unwrap()
        .iter()
        .map(|r| r.to_training_line())
        .collect()
}

#[test]
fn decode_inverts_encode_on_corpus() {
    let lines = corpus(400, 3);
    let vocab = train_wordpiece(&lines, 2048, 2).unwrap();
    for line in &lines {
        let ids = vocab.encode(line, 256);
        assert!(!ids.contains(&UNK));
        assert_eq!(vocab.decode(&ids).unwrap(), pretokenize(line).join(" "));
    }
}

#[test]
fn encoding_is_injective_on_corpus() {
    let lines = corpus(400, 4);
    let vocab = train_wordpiece(&lines, 2048, 2).unwrap();
    let mut seen: HashMap<Vec<u32>, &str> = HashMap::new();
    for line in &lines {
        if let Some(prev) = seen.insert(vocab.encode(line, 256), line) {
            assert_eq!(prev, line.as_str(), "two lines share one encoding");
        }
    }
}

#[test]
fn trained_vocab_beats_character_baseline() {
    let lines = corpus(400, 5);
    let trained = train_wordpiece(&lines, 2048, 2).unwrap();
    let chars = Vocab::char_level(&lines).unwrap();
    let mean = |v: &Vocab| {
        lines.iter().map(|l| v.tokenize(l).len()).sum::<usize>() as f64 / lines.len() as f64
    };
    assert!(
        mean(&trained) < mean(&chars),
        "{} vs {}",
        mean(&trained),
        mean(&chars)
    );
}

#[test]
fn budget_respected_and_reached_or_exhausted() {
    let lines = corpus(400, 6);
    for budget in [64, 300, 2048] {
        let v = train_wordpiece(&lines, budget, 2).unwrap();
        let floor = Vocab::char_level(&lines).unwrap().len();
        assert!(v.len() <= budget.max(floor));
        if v.len() < budget {
            let again = train_wordpiece(&lines, budget + 100, 2).unwrap();
            assert_eq!(
                again.len(),
                v.len(),
                "merges remained below budget {budget}"
            );
        }
    }
}

#[test]
fn vocab_file_round_trip_and_determinism() {
    let lines = corpus(300, 7);
    let a = train_wordpiece(&lines, 500, 2).unwrap();
    let b = train_wordpiece(&lines, 500, 2).unwrap();
    assert_eq!(a.to_file_string(), b.to_file_string());
    let back = Vocab::from_reader(Cursor::new(a.to_file_string())).unwrap();
    assert_eq!(back, a);
}

proptest! {
    #[test]
    fn encode_shape(words in prop::collection::vec("[a-z0-9.:]{1,6}", 0..20), max_len in 2usize..40) {
        let corpus = ["proto: tcp id.orig_h: 10.0.0.1", "abcdefghijklmnopqrstuvwxyz 0123456789"];
        let vocab = train_wordpiece(corpus, 80, 1).unwrap();
        let ids = vocab.encode(&words.join(" "), max_len);
        prop_assert_eq!(ids.len(), max_len);
        let sep = ids.iter().position(|&i| i == SEP).unwrap();
        prop_assert!(ids[..sep].iter().all(|&i| i != PAD));
        prop_assert!(ids[sep + 1..].iter().all(|&i| i == PAD));
    }

    #[test]
    fn decode_round_trips_known_alphabet(words in prop::collection::vec("[a-z0-9.:_]{1,8}", 0..12)) {
        let corpus = ["proto: tcp id.orig_h: 10.0.0.1", "abcdefghijklmnopqrstuvwxyz_ 0123456789"];
        let vocab = train_wordpiece(corpus, 120, 1).unwrap();
        let line = words.join(" ");
        let ids = vocab.encode(&line, 512);
        prop_assert_eq!(vocab.decode(&ids).unwrap(), pretokenize(&line).join(" "));
    }
}
