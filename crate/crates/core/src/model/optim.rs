use super::{gradients, EncoderModel, MaskedBatch, Parameters, Scalar};
use crate::{Error, Result};

/// Adam moments and step count.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Parameters<T>,
    v: Parameters<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &EncoderModel<T>) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Parameters::zeros(&model.config),
            v: Parameters::zeros(&model.config),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update.
    pub fn update(&mut self, params: &mut Parameters<T>, grad: &Parameters<T>, lr: f64) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.step as i32));
        let (lr, eps) = (T::of(lr), T::of(self.eps));
        let one = T::one();
        let grads = grad.named_tensors();
        for (((p, (_, _, g)), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// One optimization step on `batch`; returns the pre-update loss.
pub fn train_step<T: Scalar>(
    model: &mut EncoderModel<T>,
    batch: &MaskedBatch,
    optimizer: &mut Adam<T>,
    lr: f64,
    dropout_seed: u64,
) -> Result<T> {
    let (loss, grad) = gradients(model, batch, dropout_seed)?;
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite loss {loss}")));
    }
    if let Some((name, _, _)) = grad
        .named_tensors()
        .into_iter()
        .find(|(_, _, d)| d.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Training(format!(
            "non-finite gradient in `{name}` at step {}",
            optimizer.steps() + 1
        )));
    }
    optimizer.update(&mut model.params, &grad, lr);
    Ok(loss)
}
