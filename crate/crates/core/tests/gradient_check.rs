//! Central finite differences against the hand-derived backward pass.

use clem_core::model::{gradients, mask_batch, Corruption, EncoderModel, MaskedBatch, ModelConfig};
use clem_core::tokenizer::{CLS, PAD, SEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
/// Gradient norm below which a group counts as zero. Key biases have an
/// exactly zero gradient (softmax ignores a per-query shift), and their
/// finite differences are pure roundoff near 1e-11.
const FLOOR: f64 = 1e-6;

fn tiny_config(seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: 17,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 16,
        max_len: 8,
        dropout_rate: 0.0,
        seed,
    }
}

fn batch(seed: u64) -> MaskedBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs: Vec<Vec<u32>> = [6usize, 3, 4]
        .iter()
        .map(|&len| {
            let mut s = vec![CLS];
            s.extend((0..len).map(|_| rng.random_range(5..17)));
            s.push(SEP);
            s.resize(8, PAD);
            s
        })
        .collect();
    mask_batch(&seqs, 17, 0.5, Corruption::default(), seed).unwrap()
}

fn loss(model: &EncoderModel<f64>, batch: &MaskedBatch) -> f64 {
    gradients(model, batch, 0).unwrap().0
}

/// Per-group relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, FLOOR)`.
fn check(seed: u64) -> Vec<(String, f64)> {
    let mut model = EncoderModel::<f64>::init(tiny_config(seed)).unwrap();
    // Break the zero-bias / unit-scale symmetry so every group has signal.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for s in model.params.slices_mut() {
        for v in s.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let batch = batch(seed);
    let (_, analytic) = gradients(&model, &batch, 0).unwrap();
    let names: Vec<String> = analytic.named_tensors().into_iter().map(|t| t.0).collect();
    let analytic_flat: Vec<Vec<f64>> = analytic
        .named_tensors()
        .into_iter()
        .map(|(_, _, d)| d.to_vec())
        .collect();

    let mut report = Vec::new();
    for (g, name) in names.iter().enumerate() {
        let n = analytic_flat[g].len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = model.params.slices_mut()[g][i];
            model.params.slices_mut()[g][i] = orig + STEP;
            let plus = loss(&model, &batch);
            model.params.slices_mut()[g][i] = orig - STEP;
            let minus = loss(&model, &batch);
            model.params.slices_mut()[g][i] = orig;
            *slot = (plus - minus) / (2.0 * STEP);
        }
        let diff: f64 = analytic_flat[g]
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let na = analytic_flat[g].iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / na.max(nn).max(FLOOR);
        report.push((name.clone(), rel));
    }
    report
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..5 {
        let report = check(seed);
        let (worst_name, worst) = report
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .clone();
        println!("seed {seed}: worst group {worst_name} rel err {worst:.3e}");
        for (name, rel) in &report {
            assert!(
                *rel < TOLERANCE,
                "seed {seed}: {name} relative error {rel:.3e}"
            );
        }
    }
}
