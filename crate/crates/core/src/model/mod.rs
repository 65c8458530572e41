//! Transformer encoder with a masked-language-model head.
//!
//! The encoder is a post-layer-norm BERT-style stack: token plus learned
//! positional embeddings, then `n_layers` blocks of multi-head self-attention
//! and a GELU feed-forward network, each followed by a residual connection
//! and layer normalization. Gradients are derived by hand; the model is
//! generic over `f32` (training) and `f64` (gradient checking).

mod checkpoint;
mod config;
mod forward;
mod masking;
mod optim;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use forward::{
    forward, forward_with_attention, gradients, hidden_states, layer_norm_rows, mlm_loss,
    ForwardOutput, LAYER_NORM_EPS,
};
pub use masking::{mask_batch, Corruption, MaskedBatch, DEFAULT_MASK_RATE};
pub use optim::{train_step, Adam};
pub use params::{EncoderModel, LayerParams, Parameters};

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of model tensors.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Tag stored in checkpoints.
    const DTYPE: u8;
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Scalar")
    }
}

impl Scalar for f32 {
    const DTYPE: u8 = 4;
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: u8 = 8;
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}
