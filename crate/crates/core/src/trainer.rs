//! Sliding-window MLM training over a serialized conn stream.
//!
//! The model and optimizer state carry over from one window to the next, so
//! later windows start from whatever the earlier ones memorized.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::model::{
    forward, mask_batch, save_checkpoint, train_step, Adam, Corruption, EncoderModel,
    DEFAULT_MASK_RATE,
};
use crate::rng::{derive_seed, rng_from};
use crate::tokenizer::Vocab;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub window_size: usize,
    pub stride: usize,
    pub loss_threshold: f64,
    pub max_epochs_per_window: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_size: 10_000,
            stride: 5_000,
            loss_threshold: 0.02,
            max_epochs_per_window: 200,
        }
    }
}

impl WindowSpec {
    /// 500-line windows advancing by 250 lines.
    pub fn desk() -> Self {
        Self {
            window_size: 500,
            stride: 250,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.window_size {
            return Err(Error::Config(format!(
                "stride {} must be in 1..={}",
                self.stride, self.window_size
            )));
        }
        if self.loss_threshold.is_nan() || self.loss_threshold <= 0.0 {
            return Err(Error::Config(format!(
                "loss_threshold {} must be positive",
                self.loss_threshold
            )));
        }
        if self.max_epochs_per_window == 0 {
            return Err(Error::Config(
                "max_epochs_per_window must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Optimization settings shared by every window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_rate: f64,
    pub corruption: Corruption,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 3e-4,
            mask_rate: DEFAULT_MASK_RATE,
            corruption: Corruption::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// Settings that memorize a 500-line window inside the epoch cap on one core.
    pub fn desk() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 2e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.mask_rate > 0.0 && self.mask_rate <= 1.0) {
            return Err(Error::Config(format!(
                "mask_rate {} outside (0, 1]",
                self.mask_rate
            )));
        }
        self.corruption.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_index: usize,
    pub start: usize,
    pub end: usize,
    pub epochs_used: usize,
    pub final_loss: f64,
    pub converged: bool,
    /// Seconds spent training the window.
    pub wall_time: f64,
    pub checkpoint: Option<String>,
}

impl WindowReport {
    /// The report with `wall_time` zeroed, for run-to-run comparison.
    pub fn timeless(&self) -> Self {
        Self {
            wall_time: 0.0,
            ..self.clone()
        }
    }
}

/// `[k·stride, min(k·stride + window_size, len))` for every start below
/// `stream_length`.
pub fn make_windows(stream_length: usize, spec: &WindowSpec) -> Result<Vec<Range<usize>>> {
    spec.validate()?;
    Ok((0..stream_length)
        .step_by(spec.stride)
        .map(|start| start..(start + spec.window_size).min(stream_length))
        .collect())
}

/// Encodes every line to `max_len` ids.
pub fn encode_lines<S: AsRef<str>>(vocab: &Vocab, lines: &[S], max_len: usize) -> Vec<Vec<u32>> {
    lines
        .iter()
        .map(|l| vocab.encode(l.as_ref(), max_len))
        .collect()
}

/// Model plus optimizer state carried across windows.
#[derive(Debug, Clone)]
pub struct StreamState {
    pub model: EncoderModel<f32>,
    pub optimizer: Adam<f32>,
}

impl StreamState {
    pub fn new(model: EncoderModel<f32>) -> Self {
        let optimizer = Adam::new(&model);
        Self { model, optimizer }
    }
}

/// Trains on `seqs` until an epoch's mean batch loss drops below the
/// threshold or the epoch cap is reached.
pub fn train_window(
    state: &mut StreamState,
    seqs: &[Vec<u32>],
    window_index: usize,
    spec: &WindowSpec,
    cfg: &TrainConfig,
) -> Result<WindowReport> {
    spec.validate()?;
    cfg.validate()?;
    if seqs.is_empty() {
        return Err(Error::Training("empty window".into()));
    }
    let started = Instant::now();
    let vocab_size = state.model.config.vocab_size;
    let w = window_index as u64;
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut epochs_used = 0;
    let mut final_loss = f64::INFINITY;
    for epoch in 0..spec.max_epochs_per_window {
        let e = epoch as u64;
        order.shuffle(&mut rng_from(cfg.seed, &[w, e, 0]));
        let mut sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_seqs: Vec<Vec<u32>> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let mask_seed = derive_seed(cfg.seed, &[w, e, 1, b as u64]);
            let batch = mask_batch(
                &batch_seqs,
                vocab_size,
                cfg.mask_rate,
                cfg.corruption,
                mask_seed,
            )?
            .trim_padding();
            if batch.masked_count() == 0 {
                continue;
            }
            let dropout_seed = derive_seed(cfg.seed, &[w, e, 2, b as u64]);
            let loss = train_step(
                &mut state.model,
                &batch,
                &mut state.optimizer,
                cfg.learning_rate,
                dropout_seed,
            )?;
            sum += f64::from(loss);
            batches += 1;
        }
        epochs_used = epoch + 1;
        if batches == 0 {
            return Err(Error::Training("no maskable positions in window".into()));
        }
        final_loss = sum / batches as f64;
        log::debug!("window {window_index} epoch {epochs_used}: loss {final_loss:.5}");
        if final_loss < spec.loss_threshold {
            break;
        }
    }
    let converged = final_loss < spec.loss_threshold;
    if !converged {
        log::warn!(
            "window {window_index} not converged after {epochs_used} epochs (loss {final_loss:.4})"
        );
    }
    Ok(WindowReport {
        window_index,
        start: 0,
        end: seqs.len(),
        epochs_used,
        final_loss,
        converged,
        wall_time: started.elapsed().as_secs_f64(),
        checkpoint: None,
    })
}

/// Fraction of masked positions whose argmax prediction equals the original
/// token, under one masking draw per batch seeded from `seed`.
pub fn masked_token_accuracy(
    model: &EncoderModel<f32>,
    seqs: &[Vec<u32>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (b, chunk) in seqs.chunks(cfg.batch_size.max(1)).enumerate() {
        let batch = mask_batch(
            chunk,
            model.config.vocab_size,
            cfg.mask_rate,
            cfg.corruption,
            derive_seed(seed, &[b as u64]),
        )?
        .trim_padding();
        let out = forward(model, &batch)?;
        for ((i, t), &selected) in batch.loss_mask.indexed_iter() {
            if !selected {
                continue;
            }
            let row = out.logits.slice(ndarray::s![i, t, ..]);
            let best = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k as u32)
                .expect("non-empty vocab");
            hit += usize::from(best == batch.target_ids[[i, t]]);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedLoss);
    }
    Ok(hit as f64 / total as f64)
}

/// Output of [`train_stream`].
#[derive(Debug, Clone)]
pub struct StreamOutcome {
    pub state: StreamState,
    pub reports: Vec<WindowReport>,
}

/// File name of a window checkpoint.
pub fn checkpoint_name(window_index: usize) -> String {
    format!("window_{window_index:05}.ckpt")
}

/// Trains every window of `lines` in order. When `checkpoint_dir` is given,
/// each window's model is written there as `window_NNNNN.ckpt`.
pub fn train_stream<S: AsRef<str>>(
    lines: &[S],
    vocab: &Vocab,
    state: StreamState,
    spec: &WindowSpec,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    meta: &BTreeMap<String, String>,
) -> Result<StreamOutcome> {
    let windows = make_windows(lines.len(), spec)?;
    let max_len = state.model.config.max_len;
    let seqs = encode_lines(vocab, lines, max_len);
    let mut state = state;
    let mut reports = Vec::with_capacity(windows.len());
    for (index, range) in windows.into_iter().enumerate() {
        let wrap = |e: Error| Error::Window {
            window: index,
            source: Box::new(e),
        };
        let mut report =
            train_window(&mut state, &seqs[range.clone()], index, spec, cfg).map_err(wrap)?;
        report.start = range.start;
        report.end = range.end;
        log::info!(
            "window {index} [{}, {}): {} epochs, loss {:.5}",
            range.start,
            range.end,
            report.epochs_used,
            report.final_loss
        );
        if let Some(dir) = checkpoint_dir {
            let name = checkpoint_name(index);
            let path: PathBuf = dir.join(&name);
            let mut m = meta.clone();
            m.insert("window_index".into(), index.to_string());
            m.insert(
                "line_range".into(),
                format!("{}..{}", range.start, range.end),
            );
            std::fs::write(&path, save_checkpoint(&state.model, &m)).map_err(|e| wrap(e.into()))?;
            report.checkpoint = Some(name);
        }
        reports.push(report);
    }
    Ok(StreamOutcome { state, reports })
}

/// One JSON object per line.
pub fn reports_to_jsonl(reports: &[WindowReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(window: usize, stride: usize) -> WindowSpec {
        WindowSpec {
            window_size: window,
            stride,
            ..WindowSpec::default()
        }
    }

    #[test]
    fn windows_for_default_stream() {
        // The tail window starting at 15,000 is kept: its start is inside the stream.
        assert_eq!(
            make_windows(20_000, &WindowSpec::default()).unwrap(),
            vec![0..10_000, 5_000..15_000, 10_000..20_000, 15_000..20_000]
        );
    }

    #[test]
    fn short_stream_single_window() {
        assert_eq!(
            make_windows(3_000, &WindowSpec::default()).unwrap(),
            vec![0..3_000]
        );
    }

    #[test]
    fn truncated_tail_windows() {
        assert_eq!(
            make_windows(12_345, &WindowSpec::default()).unwrap(),
            vec![0..10_000, 5_000..12_345, 10_000..12_345]
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(make_windows(10, &spec(10, 0)).is_err());
        assert!(make_windows(10, &spec(10, 11)).is_err());
        let mut s = spec(10, 5);
        s.loss_threshold = 0.0;
        assert!(s.validate().is_err());
        s.loss_threshold = 0.02;
        s.max_epochs_per_window = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn empty_stream_has_no_windows() {
        assert!(make_windows(0, &WindowSpec::default()).unwrap().is_empty());
    }
}
