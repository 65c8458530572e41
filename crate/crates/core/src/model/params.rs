use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Scalar};
use crate::rng::rng_from;
use crate::Result;

/// Standard deviation of the initial weight distribution.
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Array2<T>,
    pub bq: Array1<T>,
    pub wk: Array2<T>,
    pub bk: Array1<T>,
    pub wv: Array2<T>,
    pub bv: Array1<T>,
    pub wo: Array2<T>,
    pub bo: Array1<T>,
    pub ln1_g: Array1<T>,
    pub ln1_b: Array1<T>,
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
    pub ln2_g: Array1<T>,
    pub ln2_b: Array1<T>,
}

/// Every trainable tensor. Gradients and optimizer moments use the same
/// type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    /// `vocab_size × d_model`
    pub tok_emb: Array2<T>,
    /// `max_len × d_model`
    pub pos_emb: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    /// `d_model × vocab_size`
    pub out_w: Array2<T>,
    pub out_b: Array1<T>,
}

/// Invokes `$mac!(args…, field, field, …)` with every per-layer tensor field.
macro_rules! layer_fields {
    ($mac:ident ! ($($args:tt)*)) => {
        $mac!($($args)* wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b)
    };
}

macro_rules! push_named {
    ($out:ident, $i:ident, $layer:ident, $($f:ident),*) => {
        $( $out.push((format!("layers.{}.{}", $i, stringify!($f)), $layer.$f.shape().to_vec(), slice(&$layer.$f))); )*
    };
}

macro_rules! push_mut {
    ($out:ident, $layer:ident, $($f:ident),*) => {
        $( $out.push(slice_mut(&mut $layer.$f)); )*
    };
}

impl<T: Scalar> Parameters<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let layer = || LayerParams {
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            w1: Array2::zeros((d, cfg.d_ff)),
            b1: Array1::zeros(cfg.d_ff),
            w2: Array2::zeros((cfg.d_ff, d)),
            b2: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
        };
        Self {
            tok_emb: Array2::zeros((cfg.vocab_size, d)),
            pos_emb: Array2::zeros((cfg.max_len, d)),
            layers: (0..cfg.n_layers).map(|_| layer()).collect(),
            out_w: Array2::zeros((d, cfg.vocab_size)),
            out_b: Array1::zeros(cfg.vocab_size),
        }
    }

    /// `(name, shape, data)` for every tensor in a fixed order. Layer
    /// tensors are named `layers.{i}.{field}`.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        out.push((
            "tok_emb".into(),
            self.tok_emb.shape().to_vec(),
            slice(&self.tok_emb),
        ));
        out.push((
            "pos_emb".into(),
            self.pos_emb.shape().to_vec(),
            slice(&self.pos_emb),
        ));
        for (i, layer) in self.layers.iter().enumerate() {
            layer_fields!(push_named!(out, i, layer,));
        }
        out.push((
            "out_w".into(),
            self.out_w.shape().to_vec(),
            slice(&self.out_w),
        ));
        out.push((
            "out_b".into(),
            self.out_b.shape().to_vec(),
            slice(&self.out_b),
        ));
        out
    }

    /// Mutable data of every tensor, in [`Parameters::named_tensors`] order.
    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        out.push(slice_mut(&mut self.tok_emb));
        out.push(slice_mut(&mut self.pos_emb));
        for layer in &mut self.layers {
            layer_fields!(push_mut!(out, layer,));
        }
        out.push(slice_mut(&mut self.out_w));
        out.push(slice_mut(&mut self.out_b));
        out
    }

    pub fn len(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    pub fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(T::zero());
        }
    }
}

fn slice<T, D: ndarray::Dimension>(a: &ndarray::Array<T, D>) -> &[T] {
    a.as_slice().expect("parameters are contiguous")
}

fn slice_mut<T, D: ndarray::Dimension>(a: &mut ndarray::Array<T, D>) -> &mut [T] {
    a.as_slice_mut().expect("parameters are contiguous")
}

/// Architecture plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel<T> {
    pub config: ModelConfig,
    pub params: Parameters<T>,
}

impl<T: Scalar> EncoderModel<T> {
    /// Weights ~ N(0, 0.02²) drawn from a stream seeded by `cfg.seed`;
    /// biases and layer-norm offsets 0, layer-norm scales 1.
    pub fn init(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = Parameters::<T>::zeros(&cfg);
        let names: Vec<String> = params
            .named_tensors()
            .into_iter()
            .map(|(n, _, _)| n)
            .collect();
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut rng = rng_from(cfg.seed, &[0x1417]);
        for (name, data) in names.iter().zip(params.slices_mut()) {
            let field = name.rsplit('.').next().unwrap_or(name);
            if field.ends_with("_g") {
                data.fill(T::one());
            } else if field.starts_with('b') || field.ends_with("_b") {
                data.fill(T::zero());
            } else {
                for v in data.iter_mut() {
                    *v = T::of(normal.sample(&mut rng));
                }
            }
        }
        Ok(Self {
            config: cfg,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Scalar>(&self) -> EncoderModel<U> {
        let mut params = Parameters::<U>::zeros(&self.config);
        for ((_, _, src), dst) in self
            .params
            .named_tensors()
            .into_iter()
            .zip(params.slices_mut())
        {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::of(s.to_f64().expect("finite"));
            }
        }
        EncoderModel {
            config: self.config,
            params,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::desk(300);
        let a = EncoderModel::<f32>::init(cfg).unwrap();
        let b = EncoderModel::<f32>::init(cfg).unwrap();
        assert_eq!(a, b);
        let c = EncoderModel::<f32>::init(ModelConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_count_matches_config() {
        let cfg = ModelConfig::desk(300);
        let m = EncoderModel::<f32>::init(cfg).unwrap();
        assert_eq!(m.params.len(), cfg.parameter_count());
        let names: Vec<String> = m.params.named_tensors().into_iter().map(|t| t.0).collect();
        assert_eq!(names.len(), 2 + 16 * cfg.n_layers + 2);
        assert_eq!(names[2], "layers.0.wq");
    }

    #[test]
    fn init_statistics() {
        let cfg = ModelConfig::desk(500);
        let m = EncoderModel::<f64>::init(cfg).unwrap();
        let w = &m.params.tok_emb;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.mapv(|v| (v - mean) * (v - mean)).sum() / n;
        assert!(mean.abs() < 1e-3);
        assert!((var.sqrt() - 0.02).abs() < 1e-3);
        assert!(m.params.layers[0].ln1_g.iter().all(|&v| v == 1.0));
        assert!(m.params.layers[0].ln1_b.iter().all(|&v| v == 0.0));
        assert!(m.params.layers[0].bq.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ModelConfig {
            d_model: 63,
            ..ModelConfig::desk(300)
        };
        assert!(EncoderModel::<f32>::init(cfg).is_err());
    }
}
