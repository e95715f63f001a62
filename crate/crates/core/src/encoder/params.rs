use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Standard deviation of the normal initializer for embeddings and weights.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl LayerNormParams {
    pub fn identity(dim: usize) -> Self {
        Self {
            gain: Array1::ones(dim),
            bias: Array1::zeros(dim),
        }
    }

    fn zeros(dim: usize) -> Self {
        Self {
            gain: Array1::zeros(dim),
            bias: Array1::zeros(dim),
        }
    }
}

/// Learnable tensors of one hybrid attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaLayerParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    /// Output projection shared by both attention branches.
    pub wo: Array2<f64>,
    pub ffn_w1: Array2<f64>,
    pub ffn_b1: Array1<f64>,
    pub ffn_w2: Array2<f64>,
    pub ffn_b2: Array1<f64>,
    pub norm: LayerNormParams,
}

impl FeaLayerParams {
    fn random(dim: usize, rng: &mut Rng) -> Self {
        let mut w = || normal_matrix(dim, dim, rng);
        Self {
            wq: w(),
            wk: w(),
            wv: w(),
            wo: w(),
            ffn_w1: w(),
            ffn_b1: Array1::zeros(dim),
            ffn_w2: w(),
            ffn_b2: Array1::zeros(dim),
            norm: LayerNormParams::identity(dim),
        }
    }

    fn zeros(dim: usize) -> Self {
        let z = || Array2::zeros((dim, dim));
        Self {
            wq: z(),
            wk: z(),
            wv: z(),
            wo: z(),
            ffn_w1: z(),
            ffn_b1: Array1::zeros(dim),
            ffn_w2: z(),
            ffn_b2: Array1::zeros(dim),
            norm: LayerNormParams::zeros(dim),
        }
    }
}

/// All learnable tensors of the model. Row 0 of `item_table` is the padding
/// embedding and stays zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub item_table: Array2<f64>,
    pub pos_table: Array2<f64>,
    /// Normalization applied to item + position embeddings.
    pub emb_norm: LayerNormParams,
    pub layers: Vec<FeaLayerParams>,
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut item_table = normal_matrix(cfg.num_items + 1, cfg.dim, rng);
        item_table.row_mut(0).fill(0.0);
        let pos_table = normal_matrix(cfg.max_len, cfg.dim, rng);
        let layers = (0..cfg.num_layers)
            .map(|_| FeaLayerParams::random(cfg.dim, rng))
            .collect();
        Ok(Self {
            item_table,
            pos_table,
            emb_norm: LayerNormParams::identity(cfg.dim),
            layers,
        })
    }

    /// Same shapes, all zeros. Used for gradient accumulators and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        let dim = self.pos_table.ncols();
        Self {
            item_table: Array2::zeros(self.item_table.raw_dim()),
            pos_table: Array2::zeros(self.pos_table.raw_dim()),
            emb_norm: LayerNormParams::zeros(dim),
            layers: self.layers.iter().map(|_| FeaLayerParams::zeros(dim)).collect(),
        }
    }

    pub fn num_items(&self) -> usize {
        self.item_table.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.item_table.ncols()
    }

    pub fn zero_padding_row(&mut self) {
        self.item_table.row_mut(0).fill(0.0);
    }

    /// Canonical tensor names with shapes and values, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn flat<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        let mut push = |name: String, (shape, values)| out.push((name, shape, values));
        push("item_table".into(), flat(&self.item_table));
        push("pos_table".into(), flat(&self.pos_table));
        push("emb_norm.gain".into(), flat(&self.emb_norm.gain));
        push("emb_norm.bias".into(), flat(&self.emb_norm.bias));
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layer{}", i + 1);
            push(format!("{p}.Wq"), flat(&l.wq));
            push(format!("{p}.Wk"), flat(&l.wk));
            push(format!("{p}.Wv"), flat(&l.wv));
            push(format!("{p}.Wo"), flat(&l.wo));
            push(format!("{p}.ffn_W1"), flat(&l.ffn_w1));
            push(format!("{p}.ffn_b1"), flat(&l.ffn_b1));
            push(format!("{p}.ffn_W2"), flat(&l.ffn_w2));
            push(format!("{p}.ffn_b2"), flat(&l.ffn_b2));
            push(format!("{p}.norm.gain"), flat(&l.norm.gain));
            push(format!("{p}.norm.bias"), flat(&l.norm.bias));
        }
        out
    }

    /// Mutable flat views in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(self.item_table.as_slice_mut().expect("standard layout"));
        out.push(self.pos_table.as_slice_mut().expect("standard layout"));
        out.push(self.emb_norm.gain.as_slice_mut().expect("standard layout"));
        out.push(self.emb_norm.bias.as_slice_mut().expect("standard layout"));
        for l in &mut self.layers {
            out.push(l.wq.as_slice_mut().expect("standard layout"));
            out.push(l.wk.as_slice_mut().expect("standard layout"));
            out.push(l.wv.as_slice_mut().expect("standard layout"));
            out.push(l.wo.as_slice_mut().expect("standard layout"));
            out.push(l.ffn_w1.as_slice_mut().expect("standard layout"));
            out.push(l.ffn_b1.as_slice_mut().expect("standard layout"));
            out.push(l.ffn_w2.as_slice_mut().expect("standard layout"));
            out.push(l.ffn_b2.as_slice_mut().expect("standard layout"));
            out.push(l.norm.gain.as_slice_mut().expect("standard layout"));
            out.push(l.norm.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        let src = other.tensors();
        for (dst, (_, _, s)) in self.tensors_mut().into_iter().zip(src) {
            for (a, b) in dst.iter_mut().zip(s) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, _, v)| v.iter().any(|x| !x.is_finite()))
            .map(|(name, _, _)| name)
    }

    /// Rebuilds parameters from named tensors produced by [`ModelParams::tensors`].
    pub fn from_tensors(cfg: &ModelConfig, tensors: &[(String, Vec<usize>, Vec<f64>)]) -> Result<Self> {
        let mut rng = crate::rng::stream(0, &[]);
        let mut params = Self::init(cfg, &mut rng)?;
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((dst, (name, shape)), (got_name, got_shape, values)) in
            params.tensors_mut().into_iter().zip(expected).zip(tensors)
        {
            if &name != got_name || &shape != got_shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {got_name} {got_shape:?} does not match expected {name} {shape:?}"
                )));
            }
            dst.copy_from_slice(values);
        }
        Ok(params)
    }
}
