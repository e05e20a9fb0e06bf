use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::num::{Parameterized, Tensor2};
use crate::rng::{sub_rng, tag, ChaCha8Rng};

/// Gate weights. Inputs are row vectors: `a = x·W + h·U + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_z: Tensor2,
    pub w_r: Tensor2,
    pub w_h: Tensor2,
    pub u_z: Tensor2,
    pub u_r: Tensor2,
    pub u_h: Tensor2,
    pub b_z: Tensor2,
    pub b_r: Tensor2,
    pub b_h: Tensor2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// Bilinear score matrix: `score_t = h_N·W_a·h_t`.
    pub w_a: Tensor2,
    /// Combine layer on `[c; h_N]`, shape `2·n_hidden × n_hidden`.
    pub w_c: Tensor2,
    pub b_c: Tensor2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// One column per horizon.
    pub w: Tensor2,
    pub b: Tensor2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentParams {
    pub gru: GruParams,
    pub attention: Option<AttentionParams>,
    pub heads: HeadParams,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let mut t = Tensor2::zeros(rows, cols);
    for v in t.data_mut() {
        *v = rng.gen_range(-a..a);
    }
    t
}

impl GruParams {
    pub fn zeros(n_features: usize, n_hidden: usize) -> Self {
        let w = || Tensor2::zeros(n_features, n_hidden);
        let u = || Tensor2::zeros(n_hidden, n_hidden);
        let b = || Tensor2::zeros(1, n_hidden);
        GruParams {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.w_z.rows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w_z.cols()
    }
}

impl RecurrentParams {
    pub fn zeros(n_features: usize, n_hidden: usize, n_outputs: usize, attention: bool) -> Self {
        RecurrentParams {
            gru: GruParams::zeros(n_features, n_hidden),
            attention: attention.then(|| AttentionParams {
                w_a: Tensor2::zeros(n_hidden, n_hidden),
                w_c: Tensor2::zeros(2 * n_hidden, n_hidden),
                b_c: Tensor2::zeros(1, n_hidden),
            }),
            heads: HeadParams {
                w: Tensor2::zeros(n_hidden, n_outputs),
                b: Tensor2::zeros(1, n_outputs),
            },
        }
    }

    /// Glorot-uniform weights, zero biases, drawn from the config seed.
    pub fn init(n_features: usize, cfg: &ModelConfig) -> Self {
        let nh = cfg.n_hidden;
        let mut rng = sub_rng(cfg.seed, tag::INIT, 0);
        let mut p = Self::zeros(n_features, nh, cfg.n_outputs(), cfg.variant.has_attention());
        p.gru.w_z = glorot(n_features, nh, &mut rng);
        p.gru.w_r = glorot(n_features, nh, &mut rng);
        p.gru.w_h = glorot(n_features, nh, &mut rng);
        p.gru.u_z = glorot(nh, nh, &mut rng);
        p.gru.u_r = glorot(nh, nh, &mut rng);
        p.gru.u_h = glorot(nh, nh, &mut rng);
        if let Some(att) = p.attention.as_mut() {
            att.w_a = glorot(nh, nh, &mut rng);
            att.w_c = glorot(2 * nh, nh, &mut rng);
        }
        p.heads.w = glorot(nh, cfg.n_outputs(), &mut rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn n_features(&self) -> usize {
        self.gru.n_features()
    }

    pub fn n_hidden(&self) -> usize {
        self.gru.n_hidden()
    }

    pub fn n_outputs(&self) -> usize {
        self.heads.w.cols()
    }
}

impl Parameterized for RecurrentParams {
    fn blocks(&self) -> Vec<(&'static str, &Tensor2)> {
        let g = &self.gru;
        let mut v = vec![
            ("gru.w_z", &g.w_z),
            ("gru.w_r", &g.w_r),
            ("gru.w_h", &g.w_h),
            ("gru.u_z", &g.u_z),
            ("gru.u_r", &g.u_r),
            ("gru.u_h", &g.u_h),
            ("gru.b_z", &g.b_z),
            ("gru.b_r", &g.b_r),
            ("gru.b_h", &g.b_h),
        ];
        if let Some(a) = &self.attention {
            v.push(("attention.w_a", &a.w_a));
            v.push(("attention.w_c", &a.w_c));
            v.push(("attention.b_c", &a.b_c));
        }
        v.push(("heads.w", &self.heads.w));
        v.push(("heads.b", &self.heads.b));
        v
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Tensor2)> {
        let g = &mut self.gru;
        let mut v = vec![
            ("gru.w_z", &mut g.w_z),
            ("gru.w_r", &mut g.w_r),
            ("gru.w_h", &mut g.w_h),
            ("gru.u_z", &mut g.u_z),
            ("gru.u_r", &mut g.u_r),
            ("gru.u_h", &mut g.u_h),
            ("gru.b_z", &mut g.b_z),
            ("gru.b_r", &mut g.b_r),
            ("gru.b_h", &mut g.b_h),
        ];
        if let Some(a) = &mut self.attention {
            v.push(("attention.w_a", &mut a.w_a));
            v.push(("attention.w_c", &mut a.w_c));
            v.push(("attention.b_c", &mut a.b_c));
        }
        v.push(("heads.w", &mut self.heads.w));
        v.push(("heads.b", &mut self.heads.b));
        v
    }
}
