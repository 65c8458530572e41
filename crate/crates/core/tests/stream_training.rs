//! Sliding-window training on small streams.

use std::collections::BTreeMap;

use clem_core::model::{load_checkpoint, EncoderModel, ModelConfig};
use clem_core::tokenizer::{train_wordpiece, Vocab};
use clem_core::trainer::{
    checkpoint_name, encode_lines, reports_to_jsonl, train_stream, train_window, StreamState,
    TrainConfig, WindowSpec,
};
use clem_core::Error;

/// Every field identifies its line, so any masked token is recoverable.
fn lines() -> Vec<String> {
    (0..16)
        .map(|i| {
            format!(
                "id.orig_h: 10.0.10.{} id.orig_p: {} id.resp_h: 10.0.1.{} id.resp_p: {} proto: tcp",
                100 + i,
                50_000 + 7 * i,
                20 + i,
                25 + i
            )
        })
        .collect()
}

fn setup(lines: &[String]) -> (Vocab, StreamState) {
    let vocab = train_wordpiece(lines, 400, 1).unwrap();
    let mut cfg = ModelConfig::desk(vocab.len());
    cfg.d_model = 32;
    cfg.n_heads = 2;
    cfg.d_ff = 64;
    cfg.max_len = 32;
    (
        vocab.clone(),
        StreamState::new(EncoderModel::init(cfg).unwrap()),
    )
}

fn spec(window: usize) -> WindowSpec {
    WindowSpec {
        window_size: window,
        stride: window,
        loss_threshold: 0.02,
        max_epochs_per_window: 400,
    }
}

fn cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn memorized_window_repeats_in_one_epoch() {
    let lines = lines();
    let (vocab, mut state) = setup(&lines);
    let seqs = encode_lines(&vocab, &lines, state.model.config.max_len);
    let deep = WindowSpec {
        loss_threshold: 0.002,
        max_epochs_per_window: 1500,
        ..spec(16)
    };
    let first = train_window(&mut state, &seqs, 0, &deep, &cfg()).unwrap();
    assert!(first.converged, "{first:?}");
    assert!(first.epochs_used > 1);
    let again = train_window(&mut state, &seqs, 1, &spec(16), &cfg()).unwrap();
    assert_eq!(again.epochs_used, 1, "{again:?}");
    assert!(again.converged);
}

#[test]
fn stream_is_deterministic_and_checkpointed() {
    let stream = lines();
    let dir = tempfile::tempdir().unwrap();
    let short = WindowSpec {
        max_epochs_per_window: 3,
        ..spec(8)
    };
    let run = |ckpt: Option<&std::path::Path>| {
        let (vocab, state) = setup(&stream);
        train_stream(
            &stream,
            &vocab,
            state,
            &short,
            &cfg(),
            ckpt,
            &BTreeMap::new(),
        )
        .unwrap()
    };
    let a = run(Some(dir.path()));
    let b = run(None);
    let strip = |o: &clem_core::trainer::StreamOutcome| {
        o.reports
            .iter()
            .map(|r| clem_core::trainer::WindowReport {
                checkpoint: None,
                ..r.timeless()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.state.model.params, b.state.model.params);
    assert_eq!(a.reports.len(), 2);
    for r in &a.reports {
        assert_eq!(r.epochs_used, 3);
        assert!(!r.converged);
        let name = r.checkpoint.clone().unwrap();
        assert_eq!(name, checkpoint_name(r.window_index));
        let bytes = std::fs::read(dir.path().join(&name)).unwrap();
        let (model, meta) = load_checkpoint::<f32>(&bytes, None).unwrap();
        assert_eq!(meta["window_index"], r.window_index.to_string());
        if r.window_index == 1 {
            assert_eq!(model.params, a.state.model.params);
        }
    }
    assert_eq!(reports_to_jsonl(&a.reports).lines().count(), 2);
}

#[test]
fn bad_config_is_rejected_before_training() {
    let stream = lines();
    let (vocab, state) = setup(&stream);
    let bad = TrainConfig {
        learning_rate: 0.0,
        ..cfg()
    };
    let err = train_stream(
        &stream,
        &vocab,
        state,
        &spec(8),
        &bad,
        None,
        &BTreeMap::new(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Window { window: 0, .. }), "{err}");
}
