use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{EncoderModel, LayerParams, MaskedBatch, Parameters, Scalar};
use crate::rng::rng_from;
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-12;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// `0.5·(1 + tanh(u))` written as the logistic function of `2u`.
fn gelu_gate<T: Scalar>(x: T) -> (T, T) {
    let du = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    (T::one() / (T::one() + (-(u + u)).exp()), du)
}

fn gelu<T: Scalar>(x: T) -> T {
    x * gelu_gate(x).0
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let (s, du) = gelu_gate(x);
    s + x * T::of(2.0) * s * (T::one() - s) * du
}

struct NormCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

/// Per-row standardization without the affine part.
fn normalize<T: Scalar>(x: &Array2<T>) -> NormCache<T> {
    let d = T::from_usize(x.ncols()).expect("width fits");
    let eps = T::of(LAYER_NORM_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.outer_iter_mut().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *inv = T::one() / (var + eps).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    NormCache { xhat, inv_std }
}

/// Row-wise layer normalization before the learned scale and offset.
pub fn layer_norm_rows<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    normalize(x).xhat
}

fn layer_norm<T: Scalar>(x: &Array2<T>, g: &Array1<T>, b: &Array1<T>) -> (Array2<T>, NormCache<T>) {
    let cache = normalize(x);
    let y = &cache.xhat * g + b;
    (y, cache)
}

fn layer_norm_backward<T: Scalar>(
    dy: &Array2<T>,
    cache: &NormCache<T>,
    g: &Array1<T>,
    dg: &mut Array1<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let d = T::from_usize(dy.ncols()).expect("width fits");
    let mut dx = dy * g;
    for ((mut row, xhat), &inv) in dx
        .outer_iter_mut()
        .zip(cache.xhat.outer_iter())
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(&a, &b)| a * b).sum::<T>() / d;
        Zip::from(&mut row)
            .and(&xhat)
            .for_each(|v, &xh| *v = inv * (*v - mean_d - xh * mean_dx));
    }
    dx
}

/// Inverted-dropout scale mask, or `None` when dropout is off.
fn dropout_mask<T: Scalar>(
    shape: (usize, usize),
    rate: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Option<Array2<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let scale = T::of(1.0 / (1.0 - rate));
    Some(Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            T::zero()
        } else {
            scale
        }
    }))
}

struct LayerCache<T> {
    x: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Attention probabilities, one `T × T` matrix per (sequence, head).
    probs: Vec<Array2<T>>,
    ctx: Array2<T>,
    attn_drop: Option<Array2<T>>,
    ln1: NormCache<T>,
    h1: Array2<T>,
    ff_pre: Array2<T>,
    ff_act: Array2<T>,
    ff_drop: Option<Array2<T>>,
    ln2: NormCache<T>,
}

struct Trace<T> {
    batch: usize,
    seq: usize,
    emb_drop: Option<Array2<T>>,
    layers: Vec<LayerCache<T>>,
    /// Final hidden states, `(batch · seq) × d_model`.
    hidden: Array2<T>,
}

fn check_batch<T: Scalar>(
    model: &EncoderModel<T>,
    ids: &Array2<u32>,
    mask: &Array2<bool>,
) -> Result<()> {
    let cfg = &model.config;
    if ids.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "input ids {:?} vs attention mask {:?}",
            ids.shape(),
            mask.shape()
        )));
    }
    if ids.ncols() > cfg.max_len {
        return Err(Error::Shape(format!(
            "sequence length {} exceeds max_len {}",
            ids.ncols(),
            cfg.max_len
        )));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Shape(format!(
            "token id {bad} outside vocab of {}",
            cfg.vocab_size
        )));
    }
    Ok(())
}

fn attention<T: Scalar>(
    q: &Array2<T>,
    k: &Array2<T>,
    v: &Array2<T>,
    mask: &Array2<bool>,
    n_heads: usize,
) -> (Array2<T>, Vec<Array2<T>>) {
    let (batch, seq) = mask.dim();
    let d = q.ncols();
    let dh = d / n_heads;
    let scale = T::one() / T::from_usize(dh).expect("width fits").sqrt();
    let mut ctx = Array2::zeros(q.raw_dim());
    let mut all_probs = Vec::with_capacity(batch * n_heads);
    for b in 0..batch {
        let rows = b * seq..(b + 1) * seq;
        let keys = mask.row(b);
        for h in 0..n_heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(s![rows.clone(), cols.clone()]);
            let kh = k.slice(s![rows.clone(), cols.clone()]);
            let vh = v.slice(s![rows.clone(), cols.clone()]);
            let mut p = qh.dot(&kh.t());
            for mut row in p.outer_iter_mut() {
                let mut max = T::neg_infinity();
                for (x, &keep) in row.iter_mut().zip(keys.iter()) {
                    if keep {
                        *x *= scale;
                        max = max.max(*x);
                    }
                }
                let mut sum = T::zero();
                for (x, &keep) in row.iter_mut().zip(keys.iter()) {
                    *x = if keep { (*x - max).exp() } else { T::zero() };
                    sum += *x;
                }
                if sum > T::zero() {
                    row.mapv_inplace(|x| x / sum);
                }
            }
            ctx.slice_mut(s![rows.clone(), cols]).assign(&p.dot(&vh));
            all_probs.push(p);
        }
    }
    (ctx, all_probs)
}

fn layer_forward<T: Scalar>(
    layer: &LayerParams<T>,
    x: Array2<T>,
    mask: &Array2<bool>,
    n_heads: usize,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<T>, LayerCache<T>) {
    let q = x.dot(&layer.wq) + &layer.bq;
    let k = x.dot(&layer.wk) + &layer.bk;
    let v = x.dot(&layer.wv) + &layer.bv;
    let (ctx, probs) = attention(&q, &k, &v, mask, n_heads);
    let mut attn = ctx.dot(&layer.wo) + &layer.bo;
    let attn_drop = dropout_mask(attn.dim(), dropout, rng.as_deref_mut());
    if let Some(m) = &attn_drop {
        attn *= m;
    }
    let (h1, ln1) = layer_norm(&(&x + &attn), &layer.ln1_g, &layer.ln1_b);
    let ff_pre = h1.dot(&layer.w1) + &layer.b1;
    let ff_act = ff_pre.mapv(gelu);
    let mut ff = ff_act.dot(&layer.w2) + &layer.b2;
    let ff_drop = dropout_mask(ff.dim(), dropout, rng);
    if let Some(m) = &ff_drop {
        ff *= m;
    }
    let (out, ln2) = layer_norm(&(&h1 + &ff), &layer.ln2_g, &layer.ln2_b);
    let cache = LayerCache {
        x,
        q,
        k,
        v,
        probs,
        ctx,
        attn_drop,
        ln1,
        h1,
        ff_pre,
        ff_act,
        ff_drop,
        ln2,
    };
    (out, cache)
}

fn encode<T: Scalar>(
    model: &EncoderModel<T>,
    ids: &Array2<u32>,
    mask: &Array2<bool>,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Trace<T>> {
    check_batch(model, ids, mask)?;
    let cfg = &model.config;
    let p = &model.params;
    let (batch, seq) = ids.dim();
    let mut x = Array2::zeros((batch * seq, cfg.d_model));
    for ((n, mut row), &id) in x.outer_iter_mut().enumerate().zip(ids.iter()) {
        row.assign(&p.tok_emb.row(id as usize));
        row += &p.pos_emb.row(n % seq);
    }
    let emb_drop = dropout_mask(x.dim(), cfg.dropout_rate, rng.as_deref_mut());
    if let Some(m) = &emb_drop {
        x *= m;
    }
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for layer in &p.layers {
        let (out, cache) = layer_forward(
            layer,
            x,
            mask,
            cfg.n_heads,
            cfg.dropout_rate,
            rng.as_deref_mut(),
        );
        layers.push(cache);
        x = out;
    }
    Ok(Trace {
        batch,
        seq,
        emb_drop,
        layers,
        hidden: x,
    })
}

fn head_logits<T: Scalar>(p: &Parameters<T>, hidden: ArrayView2<'_, T>) -> Array2<T> {
    hidden.dot(&p.out_w) + &p.out_b
}

/// Eval-mode outputs of [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `batch × seq × d_model` final-layer states.
    pub hidden: Array3<T>,
    /// `batch × seq × vocab_size` MLM logits.
    pub logits: Array3<T>,
}

/// Runs the encoder and MLM head in eval mode (no dropout).
pub fn forward<T: Scalar>(
    model: &EncoderModel<T>,
    batch: &MaskedBatch,
) -> Result<ForwardOutput<T>> {
    forward_with_attention(model, batch).map(|(out, _)| out)
}

/// [`forward`] plus the attention probabilities of every layer, shaped
/// `batch × heads × query × key`.
pub fn forward_with_attention<T: Scalar>(
    model: &EncoderModel<T>,
    batch: &MaskedBatch,
) -> Result<(ForwardOutput<T>, Vec<Array4<T>>)> {
    let trace = encode(model, &batch.input_ids, &batch.attention_mask, None)?;
    let (b, t, d, v) = (
        trace.batch,
        trace.seq,
        model.config.d_model,
        model.config.vocab_size,
    );
    let logits = head_logits(&model.params, trace.hidden.view());
    let heads = model.config.n_heads;
    let attn = trace
        .layers
        .iter()
        .map(|l| {
            let flat: Vec<T> = l.probs.iter().flat_map(|p| p.iter().copied()).collect();
            Array4::from_shape_vec((b, heads, t, t), flat).expect("attention shape")
        })
        .collect();
    let out = ForwardOutput {
        hidden: trace
            .hidden
            .into_shape_with_order((b, t, d))
            .expect("hidden shape"),
        logits: logits
            .into_shape_with_order((b, t, v))
            .expect("logit shape"),
    };
    Ok((out, attn))
}

/// Final-layer states only, skipping the vocabulary projection.
pub fn hidden_states<T: Scalar>(
    model: &EncoderModel<T>,
    input_ids: &Array2<u32>,
    attention_mask: &Array2<bool>,
) -> Result<Array3<T>> {
    let trace = encode(model, input_ids, attention_mask, None)?;
    let shape = (trace.batch, trace.seq, model.config.d_model);
    Ok(trace
        .hidden
        .into_shape_with_order(shape)
        .expect("hidden shape"))
}

/// Summed cross entropy of `logits` rows against `targets`, accumulated in
/// f64, plus `softmax - onehot` when `want_grad`.
fn cross_entropy<T: Scalar>(
    logits: ArrayView2<'_, T>,
    targets: &[u32],
    want_grad: bool,
) -> (f64, Option<Array2<T>>) {
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Array2::zeros(logits.raw_dim()));
    for (i, (row, &target)) in logits.outer_iter().zip(targets).enumerate() {
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let sum_exp: T = row.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total += (lse - row[target as usize]).to_f64().expect("finite");
        if let Some(g) = grad.as_mut() {
            let mut grow = g.row_mut(i);
            Zip::from(&mut grow)
                .and(&row)
                .for_each(|gv, &x| *gv = (x - lse).exp());
            grow[target as usize] -= T::one();
        }
    }
    (total, grad)
}

/// Mean negative log-likelihood of the target ids over loss-masked
/// positions.
pub fn mlm_loss<T: Scalar>(logits: &Array3<T>, batch: &MaskedBatch) -> Result<T> {
    let (b, t, v) = logits.dim();
    if (b, t) != batch.target_ids.dim() {
        return Err(Error::Shape(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            batch.target_ids.shape()
        )));
    }
    let flat = logits
        .view()
        .into_shape_with_order((b * t, v))
        .expect("contiguous logits");
    let (rows, targets) = selected_rows(batch);
    if rows.is_empty() {
        return Err(Error::UndefinedLoss);
    }
    let picked = flat.select(Axis(0), &rows);
    let (total, _) = cross_entropy(picked.view(), &targets, false);
    Ok(T::of(total / rows.len() as f64))
}

fn selected_rows(batch: &MaskedBatch) -> (Vec<usize>, Vec<u32>) {
    batch
        .loss_mask
        .iter()
        .zip(batch.target_ids.iter())
        .enumerate()
        .filter(|(_, (&m, _))| m)
        .map(|(i, (_, &t))| (i, t))
        .unzip()
}

fn sum_rows<T: Scalar>(a: &Array2<T>) -> Array1<T> {
    a.sum_axis(Axis(0))
}

fn attention_backward<T: Scalar>(
    cache: &LayerCache<T>,
    dctx: &Array2<T>,
    batch: usize,
    seq: usize,
    n_heads: usize,
) -> (Array2<T>, Array2<T>, Array2<T>) {
    let d = dctx.ncols();
    let dh = d / n_heads;
    let scale = T::one() / T::from_usize(dh).expect("width fits").sqrt();
    let mut dq = Array2::zeros(dctx.raw_dim());
    let mut dk = Array2::zeros(dctx.raw_dim());
    let mut dv = Array2::zeros(dctx.raw_dim());
    for b in 0..batch {
        let rows = b * seq..(b + 1) * seq;
        for h in 0..n_heads {
            let cols = h * dh..(h + 1) * dh;
            let p = &cache.probs[b * n_heads + h];
            let d_out = dctx.slice(s![rows.clone(), cols.clone()]);
            let qh = cache.q.slice(s![rows.clone(), cols.clone()]);
            let kh = cache.k.slice(s![rows.clone(), cols.clone()]);
            let vh = cache.v.slice(s![rows.clone(), cols.clone()]);
            let mut ds = d_out.dot(&vh.t());
            for (mut drow, prow) in ds.outer_iter_mut().zip(p.outer_iter()) {
                let inner: T = drow.iter().zip(prow.iter()).map(|(&a, &b)| a * b).sum();
                Zip::from(&mut drow)
                    .and(&prow)
                    .for_each(|x, &pv| *x = pv * (*x - inner) * scale);
            }
            dv.slice_mut(s![rows.clone(), cols.clone()])
                .assign(&p.t().dot(&d_out));
            dq.slice_mut(s![rows.clone(), cols.clone()])
                .assign(&ds.dot(&kh));
            dk.slice_mut(s![rows.clone(), cols])
                .assign(&ds.t().dot(&qh));
        }
    }
    (dq, dk, dv)
}

fn layer_backward<T: Scalar>(
    layer: &LayerParams<T>,
    grad: &mut LayerParams<T>,
    cache: &LayerCache<T>,
    dout: Array2<T>,
    batch: usize,
    seq: usize,
    n_heads: usize,
) -> Array2<T> {
    let dr2 = layer_norm_backward(
        &dout,
        &cache.ln2,
        &layer.ln2_g,
        &mut grad.ln2_g,
        &mut grad.ln2_b,
    );
    let mut dff = dr2.clone();
    if let Some(m) = &cache.ff_drop {
        dff *= m;
    }
    grad.w2 += &cache.ff_act.t().dot(&dff);
    grad.b2 += &sum_rows(&dff);
    let mut dpre = dff.dot(&layer.w2.t());
    Zip::from(&mut dpre)
        .and(&cache.ff_pre)
        .for_each(|g, &x| *g *= gelu_grad(x));
    grad.w1 += &cache.h1.t().dot(&dpre);
    grad.b1 += &sum_rows(&dpre);
    let dh1 = dr2 + dpre.dot(&layer.w1.t());

    let dr1 = layer_norm_backward(
        &dh1,
        &cache.ln1,
        &layer.ln1_g,
        &mut grad.ln1_g,
        &mut grad.ln1_b,
    );
    let mut dattn = dr1.clone();
    if let Some(m) = &cache.attn_drop {
        dattn *= m;
    }
    grad.wo += &cache.ctx.t().dot(&dattn);
    grad.bo += &sum_rows(&dattn);
    let dctx = dattn.dot(&layer.wo.t());
    let (dq, dk, dv) = attention_backward(cache, &dctx, batch, seq, n_heads);
    grad.wq += &cache.x.t().dot(&dq);
    grad.bq += &sum_rows(&dq);
    grad.wk += &cache.x.t().dot(&dk);
    grad.bk += &sum_rows(&dk);
    grad.wv += &cache.x.t().dot(&dv);
    grad.bv += &sum_rows(&dv);
    dr1 + dq.dot(&layer.wq.t()) + dk.dot(&layer.wk.t()) + dv.dot(&layer.wv.t())
}

/// MLM loss and its gradient with respect to every parameter. Dropout, when
/// configured, draws from a stream seeded by `dropout_seed`.
pub fn gradients<T: Scalar>(
    model: &EncoderModel<T>,
    batch: &MaskedBatch,
    dropout_seed: u64,
) -> Result<(T, Parameters<T>)> {
    let (rows, targets) = selected_rows(batch);
    if rows.is_empty() {
        return Err(Error::UndefinedLoss);
    }
    let cfg = &model.config;
    let p = &model.params;
    let mut rng = (cfg.dropout_rate > 0.0).then(|| rng_from(dropout_seed, &[0xd40]));
    let trace = encode(model, &batch.input_ids, &batch.attention_mask, rng.as_mut())?;

    let picked = trace.hidden.select(Axis(0), &rows);
    let logits = head_logits(p, picked.view());
    let (total, dlogits) = cross_entropy(logits.view(), &targets, true);
    let m = rows.len() as f64;
    let dlogits = dlogits.expect("gradient requested") * T::of(1.0 / m);

    let mut grad = Parameters::zeros(cfg);
    grad.out_w = picked.t().dot(&dlogits);
    grad.out_b = sum_rows(&dlogits);
    let dpicked = dlogits.dot(&p.out_w.t());
    let mut dx = Array2::zeros(trace.hidden.raw_dim());
    for (&r, drow) in rows.iter().zip(dpicked.outer_iter()) {
        let mut target = dx.row_mut(r);
        target += &drow;
    }

    for ((layer, lgrad), cache) in p
        .layers
        .iter()
        .zip(grad.layers.iter_mut())
        .zip(&trace.layers)
        .rev()
    {
        dx = layer_backward(layer, lgrad, cache, dx, trace.batch, trace.seq, cfg.n_heads);
    }
    if let Some(mk) = &trace.emb_drop {
        dx *= mk;
    }
    for ((n, drow), &id) in dx.outer_iter().enumerate().zip(batch.input_ids.iter()) {
        let mut tok = grad.tok_emb.row_mut(id as usize);
        tok += &drow;
        let mut pos = grad.pos_emb.row_mut(n % trace.seq);
        pos += &drow;
    }
    Ok((T::of(total / m), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mask_batch, Corruption, ModelConfig};
    use crate::tokenizer::{CLS, PAD, SEP};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            max_len: 10,
            dropout_rate: 0.0,
            seed: 3,
        }
    }

    fn seqs() -> Vec<Vec<u32>> {
        vec![
            vec![CLS, 5, 6, 7, 8, SEP, PAD, PAD],
            vec![CLS, 9, 10, SEP, PAD, PAD, PAD, PAD],
            vec![CLS, 11, 12, 13, 14, 15, 16, SEP],
        ]
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let batch = mask_batch(&seqs(), 30_522, 0.5, Corruption::default(), 4).unwrap();
        let logits = Array3::<f64>::zeros((3, 8, 30_522));
        let loss = mlm_loss(&logits, &batch).unwrap();
        assert_abs_diff_eq!(loss, (30_522f64).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(loss, 10.326, epsilon = 1e-3);
    }

    #[test]
    fn confident_logits_give_zero_loss() {
        let batch = mask_batch(&seqs(), 20, 0.5, Corruption::default(), 4).unwrap();
        let mut logits = Array3::<f64>::zeros((3, 8, 20));
        for ((b, t), &target) in batch.target_ids.indexed_iter() {
            logits[[b, t, target as usize]] = 1e3;
        }
        assert!(mlm_loss(&logits, &batch).unwrap() < 1e-12);
    }

    #[test]
    fn loss_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = mask_batch(&seqs(), 20, 0.5, Corruption::default(), 2).unwrap();
        let logits =
            Array3::<f64>::from_shape_simple_fn((3, 8, 20), || rng.random_range(-3.0..3.0));
        let mut sum = 0.0;
        let mut count = 0;
        for ((b, t), &sel) in batch.loss_mask.indexed_iter() {
            if !sel {
                continue;
            }
            let z: f64 = (0..20).map(|v| logits[[b, t, v]].exp()).sum();
            sum += z.ln() - logits[[b, t, batch.target_ids[[b, t]] as usize]];
            count += 1;
        }
        let expected = sum / count as f64;
        assert_abs_diff_eq!(mlm_loss(&logits, &batch).unwrap(), expected, epsilon = 1e-6);
    }

    #[test]
    fn no_masked_positions_is_undefined() {
        let batch = MaskedBatch::unmasked(&seqs()).unwrap();
        let logits = Array3::<f64>::zeros((3, 8, 20));
        assert!(matches!(
            mlm_loss(&logits, &batch),
            Err(Error::UndefinedLoss)
        ));
        let model = EncoderModel::<f64>::init(tiny(20)).unwrap();
        assert!(matches!(
            gradients(&model, &batch, 0),
            Err(Error::UndefinedLoss)
        ));
    }

    #[test]
    fn attention_rows_sum_to_one_over_unmasked_keys() {
        let model = EncoderModel::<f64>::init(tiny(20)).unwrap();
        let batch = MaskedBatch::unmasked(&seqs()).unwrap();
        let (_, attn) = forward_with_attention(&model, &batch).unwrap();
        for layer in &attn {
            for ((b, h, q), _) in layer.slice(s![.., .., .., 0]).indexed_iter() {
                let row = layer.slice(s![b, h, q, ..]);
                let total: f64 = row.sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
                for (k, &w) in row.iter().enumerate() {
                    if !batch.attention_mask[[b, k]] {
                        assert_eq!(w, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn batch_order_does_not_mix_examples() {
        let model = EncoderModel::<f32>::init(tiny(20)).unwrap();
        let s = seqs();
        let fwd = forward(&model, &MaskedBatch::unmasked(&s).unwrap()).unwrap();
        let rev: Vec<Vec<u32>> = s.iter().rev().cloned().collect();
        let bwd = forward(&model, &MaskedBatch::unmasked(&rev).unwrap()).unwrap();
        for i in 0..3 {
            assert_eq!(
                fwd.logits.index_axis(Axis(0), i),
                bwd.logits.index_axis(Axis(0), 2 - i)
            );
            assert_eq!(
                fwd.hidden.index_axis(Axis(0), i),
                bwd.hidden.index_axis(Axis(0), 2 - i)
            );
        }
    }

    #[test]
    fn padding_does_not_change_content_outputs() {
        let model = EncoderModel::<f64>::init(tiny(20)).unwrap();
        let long = MaskedBatch::unmasked(&seqs()).unwrap();
        let short = long.trim_padding();
        let short_seq = vec![vec![CLS, 9, 10, SEP]];
        let a = forward(&model, &long).unwrap();
        let b = forward(&model, &MaskedBatch::unmasked(&short_seq).unwrap()).unwrap();
        for t in 0..4 {
            for j in 0..8 {
                assert_abs_diff_eq!(a.hidden[[1, t, j]], b.hidden[[0, t, j]], epsilon = 1e-12);
            }
        }
        assert_eq!(short.seq_len(), 8);
    }

    #[test]
    fn pad_positions_have_logits_but_no_loss() {
        let model = EncoderModel::<f32>::init(tiny(20)).unwrap();
        let batch = mask_batch(&seqs(), 20, 1.0, Corruption::default(), 0).unwrap();
        let out = forward(&model, &batch).unwrap();
        assert_eq!(out.logits.dim(), (3, 8, 20));
        assert!(out.logits.iter().all(|v| v.is_finite()));
        assert!(!batch.loss_mask[[1, 5]]);
    }

    #[test]
    fn overlong_sequence_is_shape_error() {
        let model = EncoderModel::<f32>::init(tiny(20)).unwrap();
        let long = vec![vec![5u32; 11]];
        let err = forward(&model, &MaskedBatch::unmasked(&long).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let bad_id = vec![vec![CLS, 25, SEP]];
        assert!(forward(&model, &MaskedBatch::unmasked(&bad_id).unwrap()).is_err());
    }

    #[test]
    fn layer_norm_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::<f64>::from_shape_simple_fn((16, 64), || rng.random_range(-0.05..0.05));
        let y = layer_norm_rows(&x);
        for row in y.outer_iter() {
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn gelu_derivative() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(gelu_grad(x), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn dropout_is_seeded_and_finite() {
        let cfg = ModelConfig {
            dropout_rate: 0.2,
            ..tiny(20)
        };
        let model = EncoderModel::<f64>::init(cfg).unwrap();
        let batch = mask_batch(&seqs(), 20, 0.5, Corruption::default(), 1).unwrap();
        let (l1, g1) = gradients(&model, &batch, 3).unwrap();
        let (l2, g2) = gradients(&model, &batch, 3).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
        assert!(g1.all_finite());
    }
}
