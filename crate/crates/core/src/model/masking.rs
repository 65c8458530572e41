use ndarray::Array2;
use rand::Rng;

use crate::rng::rng_from;
use crate::tokenizer::{CLS, MASK, NUM_SPECIAL, PAD, SEP};
use crate::{Error, Result};

pub const DEFAULT_MASK_RATE: f64 = 0.15;

/// What happens to a position selected for the loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Corruption {
    /// Replaced by `[MASK]`.
    pub mask: f64,
    /// Replaced by a uniformly drawn non-special token.
    pub random: f64,
    /// Left as is.
    pub keep: f64,
}

impl Default for Corruption {
    fn default() -> Self {
        Self {
            mask: 0.8,
            random: 0.1,
            keep: 0.1,
        }
    }
}

impl Corruption {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.mask, self.random, self.keep];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "corruption fractions {parts:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

/// A batch of equal-length token sequences prepared for the MLM objective.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    /// Model input after corruption.
    pub input_ids: Array2<u32>,
    /// Original ids.
    pub target_ids: Array2<u32>,
    /// Positions that contribute to the loss.
    pub loss_mask: Array2<bool>,
    /// False at PAD positions.
    pub attention_mask: Array2<bool>,
}

fn stack(seqs: &[Vec<u32>]) -> Result<Array2<u32>> {
    let len = seqs.first().map_or(0, Vec::len);
    if let Some(bad) = seqs.iter().find(|s| s.len() != len) {
        return Err(Error::Shape(format!(
            "sequences must share one length: {len} vs {}",
            bad.len()
        )));
    }
    let flat: Vec<u32> = seqs.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((seqs.len(), len), flat).expect("length checked"))
}

fn eligible(id: u32) -> bool {
    !matches!(id, PAD | CLS | SEP | MASK)
}

impl MaskedBatch {
    /// The batch as-is, with no position selected for the loss.
    pub fn unmasked(seqs: &[Vec<u32>]) -> Result<Self> {
        let ids = stack(seqs)?;
        Ok(Self {
            attention_mask: ids.mapv(|id| id != PAD),
            loss_mask: Array2::from_elem(ids.raw_dim(), false),
            target_ids: ids.clone(),
            input_ids: ids,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.input_ids.nrows()
    }

    pub fn seq_len(&self) -> usize {
        self.input_ids.ncols()
    }

    pub fn masked_count(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }

    /// Drops trailing columns that are PAD in every sequence. Outputs at the
    /// remaining positions are unchanged because PAD keys are never attended.
    pub fn trim_padding(&self) -> Self {
        let keep = (0..self.seq_len())
            .rev()
            .find(|&t| self.attention_mask.column(t).iter().any(|&a| a))
            .map_or(0, |t| t + 1);
        let cut = |a: &Array2<u32>| a.slice(ndarray::s![.., ..keep]).to_owned();
        Self {
            input_ids: cut(&self.input_ids),
            target_ids: cut(&self.target_ids),
            loss_mask: self.loss_mask.slice(ndarray::s![.., ..keep]).to_owned(),
            attention_mask: self
                .attention_mask
                .slice(ndarray::s![.., ..keep])
                .to_owned(),
        }
    }
}

/// Selects each non-special position for the loss with probability
/// `mask_rate`, then corrupts the selection per `corruption`.
pub fn mask_batch(
    seqs: &[Vec<u32>],
    vocab_size: usize,
    mask_rate: f64,
    corruption: Corruption,
    seed: u64,
) -> Result<MaskedBatch> {
    if !(0.0..=1.0).contains(&mask_rate) {
        return Err(Error::Config(format!(
            "mask_rate {mask_rate} outside [0, 1]"
        )));
    }
    corruption.validate()?;
    let mut batch = MaskedBatch::unmasked(seqs)?;
    let mut rng = rng_from(seed, &[0x3a5c]);
    let can_randomize = vocab_size as u32 > NUM_SPECIAL;
    for ((input, target), selected) in batch
        .input_ids
        .iter_mut()
        .zip(batch.target_ids.iter())
        .zip(batch.loss_mask.iter_mut())
    {
        if !eligible(*target) || rng.random::<f64>() >= mask_rate {
            continue;
        }
        *selected = true;
        let roll: f64 = rng.random();
        if roll < corruption.mask {
            *input = MASK;
        } else if roll < corruption.mask + corruption.random && can_randomize {
            *input = rng.random_range(NUM_SPECIAL..vocab_size as u32);
        }
    }
    Ok(batch)
}
