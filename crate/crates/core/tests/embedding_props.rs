//! Embedding extraction and analogy queries.

use clem_core::embedding::{
    analogy, cosine, embed_addresses, embed_five_tuples, embed_ports, embed_text, embed_texts,
    AnalogyQuery, EmbedOptions, EmbeddingTable, EntityKind, Pooling,
};
use clem_core::model::{EncoderModel, ModelConfig};
use clem_core::rng::rng_from;
use clem_core::tokenizer::{train_wordpiece, Vocab};
use clem_core::zeek::{FiveTuple, Proto};
use clem_core::Error;
use ndarray::Array2;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

const CORPUS: [&str; 3] = [
    "id.orig_h: 10.0.10.100 id.orig_p: 50000 id.resp_h: 10.0.1.25 id.resp_p: 25 proto: tcp",
    "id.orig_h: 10.0.1.25 id.orig_p: 8888 id.resp_h: 203.0.113.66 id.resp_p: 443 proto: tcp",
    "id.orig_h: 10.0.10.101 id.orig_p: 61234 id.resp_h: 10.0.3.53 id.resp_p: 53 proto: udp",
];

fn setup() -> (EncoderModel<f32>, Vocab) {
    let vocab = train_wordpiece(CORPUS, 200, 1).unwrap();
    let mut cfg = ModelConfig::desk(vocab.len());
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.n_layers = 1;
    (EncoderModel::init(cfg).unwrap(), vocab)
}

fn tuple(orig_h: &str, orig_p: u16, resp_h: &str, resp_p: u16) -> FiveTuple {
    FiveTuple {
        orig_h: orig_h.into(),
        orig_p,
        resp_h: resp_h.into(),
        resp_p,
        proto: Proto::Tcp,
    }
}

#[test]
fn padding_does_not_change_vectors() {
    let (model, vocab) = setup();
    let opts = EmbedOptions::default();
    let alone = embed_text(&model, &vocab, "25", &opts).unwrap();
    let batched = embed_texts(&model, &vocab, &["25", CORPUS[1]], &opts).unwrap();
    for (a, b) in alone.iter().zip(batched.row(0).iter()) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn distinct_tuples_get_distinct_vectors() {
    let (model, vocab) = setup();
    let t = [
        tuple("10.0.10.100", 50000, "10.0.1.25", 25),
        tuple("10.0.1.25", 8888, "203.0.113.66", 443),
    ];
    let table = embed_five_tuples(&model, &vocab, &t, Some(0), &EmbedOptions::default()).unwrap();
    let c = cosine(table.vectors().row(0), table.vectors().row(1));
    assert!(c < 1.0 - 1e-9, "cosine {c}");
}

#[test]
fn duplicates_collapse_to_first_occurrence() {
    let (model, vocab) = setup();
    let a = tuple("10.0.10.100", 50000, "10.0.1.25", 25);
    let b = tuple("10.0.10.101", 61234, "10.0.3.53", 53);
    let table = embed_five_tuples(
        &model,
        &vocab,
        &[a.clone(), b.clone(), a.clone()],
        None,
        &EmbedOptions::default(),
    )
    .unwrap();
    assert_eq!(table.keys(), [a.to_line(), b.to_line()]);
    assert_eq!(table.kind(), EntityKind::Connection);
    assert_eq!(table.dim(), 16);
    let addrs = embed_addresses(
        &model,
        &vocab,
        &["10.0.1.25", "10.0.1.25"],
        None,
        &EmbedOptions::default(),
    )
    .unwrap();
    assert_eq!(addrs.len(), 1);
    let ports = embed_ports(
        &model,
        &vocab,
        &[25, 8888, 25],
        None,
        &EmbedOptions::default(),
    )
    .unwrap();
    assert_eq!(ports.keys(), ["25", "8888"]);
}

#[test]
fn pooling_modes_differ_and_round_trip() {
    let (model, vocab) = setup();
    let mean = embed_text(&model, &vocab, CORPUS[0], &EmbedOptions::default()).unwrap();
    let cls = embed_text(
        &model,
        &vocab,
        CORPUS[0],
        &EmbedOptions {
            pooling: Pooling::Cls,
            ..EmbedOptions::default()
        },
    )
    .unwrap();
    assert_ne!(mean, cls);
    let table = embed_ports(
        &model,
        &vocab,
        &[25, 443, 8888],
        Some(2),
        &EmbedOptions::default(),
    )
    .unwrap();
    let back = EmbeddingTable::from_file_str(&table.to_file_string()).unwrap();
    assert_eq!(back, table);
}

#[test]
fn empty_text_is_rejected() {
    let (model, vocab) = setup();
    assert!(matches!(
        embed_text(&model, &vocab, "", &EmbedOptions::default()),
        Err(Error::Value { .. })
    ));
}

/// Orthogonal matrix from Gram-Schmidt on Gaussian columns.
fn rotation(seed: u64, d: usize) -> Array2<f64> {
    let mut rng = rng_from(seed, &[]);
    let mut q: Array2<f64> = Array2::from_shape_fn((d, d), |_| StandardNormal.sample(&mut rng));
    for j in 0..d {
        for k in 0..j {
            let proj = q.column(j).dot(&q.column(k));
            let qk = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-proj, &qk);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analogy_is_rotation_invariant(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = rng_from(seed, &[1]);
        let n = 12;
        let keys: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
        let v: Array2<f64> = Array2::from_shape_fn((n, 6), |_| StandardNormal.sample(&mut rng));
        let table = EmbeddingTable::new(EntityKind::Connection, None, keys.clone(), v.clone()).unwrap();
        let rotated = EmbeddingTable::new(EntityKind::Connection, None, keys, v.dot(&rotation(seed, 6))).unwrap();
        let q = AnalogyQuery { base: "e0".into(), subtract: "e1".into(), add: "e2".into(), k };
        let a = analogy(&[&table], &table, &q).unwrap();
        let b = analogy(&[&rotated], &rotated, &q).unwrap();
        prop_assert_eq!(a.len(), k);
        for ((ka, sa), (kb, sb)) in a.iter().zip(&b) {
            prop_assert!((sa - sb).abs() < 1e-9);
            if ka != kb {
                // Only a near tie may reorder.
                let other = b.iter().find(|(key, _)| key == ka).map(|x| x.1);
                prop_assert!(other.is_some_and(|s| (s - sa).abs() < 1e-9));
            }
        }
        prop_assert!(a.iter().all(|(key, _)| key != "e0"));
    }
}
