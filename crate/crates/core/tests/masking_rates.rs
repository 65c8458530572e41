//! Empirical selection and corruption rates of the MLM masking step.

use clem_core::model::{mask_batch, Corruption};
use clem_core::tokenizer::{CLS, MASK, NUM_SPECIAL, PAD, SEP};

const VOCAB: usize = 500;

fn seqs() -> Vec<Vec<u32>> {
    (0..64)
        .map(|i| {
            let mut s = vec![CLS];
            s.extend((0..100).map(|j| NUM_SPECIAL + ((i * 7 + j * 13) % 400) as u32));
            s.push(SEP);
            s.extend([PAD; 10]);
            s
        })
        .collect()
}

#[test]
fn selection_and_corruption_rates() {
    let seqs = seqs();
    let (mut content, mut selected, mut masked, mut random, mut kept) =
        (0usize, 0usize, 0usize, 0usize, 0usize);
    for seed in 0..40 {
        let b = mask_batch(&seqs, VOCAB, 0.15, Corruption::default(), seed).unwrap();
        for ((&input, &target), &sel) in b
            .input_ids
            .iter()
            .zip(b.target_ids.iter())
            .zip(b.loss_mask.iter())
        {
            if matches!(target, PAD | CLS | SEP) {
                assert!(!sel, "special position selected");
                assert_eq!(input, target);
                continue;
            }
            content += 1;
            if !sel {
                assert_eq!(input, target);
                continue;
            }
            selected += 1;
            if input == MASK {
                masked += 1;
            } else if input == target {
                kept += 1;
            } else {
                assert!(input >= NUM_SPECIAL && (input as usize) < VOCAB);
                random += 1;
            }
        }
    }
    // 256,000 content positions: binomial standard errors are far below
    // the tolerances used here.
    let rate = selected as f64 / content as f64;
    assert!((rate - 0.15).abs() < 0.005, "selection rate {rate}");
    let s = selected as f64;
    // A random draw can hit the original token with probability 1/495.
    let random_total = random as f64 * 495.0 / 494.0;
    assert!((masked as f64 / s - 0.8).abs() < 0.01);
    assert!((random_total / s - 0.1).abs() < 0.01);
    assert!((kept as f64 / s - (0.1 + 0.1 / 495.0)).abs() < 0.01);
}

#[test]
fn masking_is_seed_deterministic() {
    let seqs = seqs();
    let a = mask_batch(&seqs, VOCAB, 0.15, Corruption::default(), 9).unwrap();
    let b = mask_batch(&seqs, VOCAB, 0.15, Corruption::default(), 9).unwrap();
    let c = mask_batch(&seqs, VOCAB, 0.15, Corruption::default(), 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
