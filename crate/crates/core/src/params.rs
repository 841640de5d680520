//! Trainable parameter storage. The same block container backs parameters,
//! gradients and both Adam moment tensors so they always stay shape-aligned.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::TrainConfig;
use crate::dense::DenseMatrix;
use crate::math;
use crate::rng::SeededRng;

/// Problem dimensions that, together with [`TrainConfig`], fix every
/// parameter shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_users: usize,
    pub n_items: usize,
    pub d_visual: usize,
    pub d_textual: usize,
}

impl ModelDims {
    pub fn n_entities(&self) -> usize {
        self.n_users + self.n_items
    }
}

/// One tensor per trainable quantity.
///
/// `id_emb` stacks user embeddings above item embeddings. The two-element
/// arrays are indexed by modality: 0 = visual, 1 = textual.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlocks {
    pub id_emb: DenseMatrix,
    pub proj_v: DenseMatrix,
    pub proj_t: DenseMatrix,
    pub w_tr: DenseMatrix,
    pub b_tr: Vec<f64>,
    pub w_m: [DenseMatrix; 2],
    pub w_a: [DenseMatrix; 2],
    pub w_f: [DenseMatrix; 2],
    /// Attention-aggregation query vectors (used only by that strategy).
    pub q_att: [Vec<f64>; 2],
    /// Per-layer collaborative convolution weights when `trainable_gcn`.
    pub w_gcn: Vec<DenseMatrix>,
}

/// Trainable model state.
pub type ModelParameters = ParamBlocks;

pub const VISUAL: usize = 0;
pub const TEXTUAL: usize = 1;

fn xavier(rng: &mut SeededRng, n_rows: usize, n_cols: usize) -> DenseMatrix {
    let bound = math::sqrt(6.0 / (n_rows + n_cols) as f64);
    let values = (0..n_rows * n_cols)
        .map(|_| rng.uniform(-bound, bound))
        .collect();
    DenseMatrix::from_vec(n_rows, n_cols, values).expect("xavier shape")
}

fn xavier_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    let bound = math::sqrt(6.0 / (1 + n) as f64);
    (0..n).map(|_| rng.uniform(-bound, bound)).collect()
}

impl ParamBlocks {
    /// Xavier-uniform initialization; biases start at zero.
    pub fn init(config: &TrainConfig, dims: &ModelDims, rng: &mut SeededRng) -> ParamBlocks {
        let d = config.d;
        let d_lat = config.d_lat;
        let d_joint = config.d_joint;
        let w_gcn = if config.trainable_gcn {
            (0..config.l_ui).map(|_| xavier(rng, d, d)).collect()
        } else {
            Vec::new()
        };
        ParamBlocks {
            id_emb: xavier(rng, dims.n_entities(), d),
            proj_v: xavier(rng, dims.d_visual, d_lat),
            proj_t: xavier(rng, dims.d_textual, d_lat),
            w_tr: xavier(rng, 2 * d_lat, d_joint),
            b_tr: vec![0.0; d_joint],
            w_m: [xavier(rng, d_joint, d_lat), xavier(rng, d_joint, d_lat)],
            w_a: [xavier(rng, d_lat, d_lat), xavier(rng, d_lat, d_lat)],
            w_f: [xavier(rng, d_lat, d_lat), xavier(rng, d_lat, d_lat)],
            q_att: [xavier_vec(rng, d_lat), xavier_vec(rng, d_lat)],
            w_gcn,
        }
    }

    /// Same shapes, all zeros. Used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> ParamBlocks {
        fn z(m: &DenseMatrix) -> DenseMatrix {
            DenseMatrix::zeros(m.n_rows(), m.n_cols())
        }
        ParamBlocks {
            id_emb: z(&self.id_emb),
            proj_v: z(&self.proj_v),
            proj_t: z(&self.proj_t),
            w_tr: z(&self.w_tr),
            b_tr: vec![0.0; self.b_tr.len()],
            w_m: [z(&self.w_m[0]), z(&self.w_m[1])],
            w_a: [z(&self.w_a[0]), z(&self.w_a[1])],
            w_f: [z(&self.w_f[0]), z(&self.w_f[1])],
            q_att: [vec![0.0; self.q_att[0].len()], vec![0.0; self.q_att[1].len()]],
            w_gcn: self.w_gcn.iter().map(z).collect(),
        }
    }

    /// Named views over every block, in a fixed order.
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![
            ("id_emb", self.id_emb.values()),
            ("proj_v", self.proj_v.values()),
            ("proj_t", self.proj_t.values()),
            ("w_tr", self.w_tr.values()),
            ("b_tr", &self.b_tr),
            ("w_m_v", self.w_m[0].values()),
            ("w_m_t", self.w_m[1].values()),
            ("w_a_v", self.w_a[0].values()),
            ("w_a_t", self.w_a[1].values()),
            ("w_f_v", self.w_f[0].values()),
            ("w_f_t", self.w_f[1].values()),
            ("q_att_v", &self.q_att[0]),
            ("q_att_t", &self.q_att[1]),
        ];
        for w in &self.w_gcn {
            out.push(("w_gcn", w.values()));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("id_emb", self.id_emb.values_mut()),
            ("proj_v", self.proj_v.values_mut()),
            ("proj_t", self.proj_t.values_mut()),
            ("w_tr", self.w_tr.values_mut()),
            ("b_tr", &mut self.b_tr),
        ];
        let [m0, m1] = &mut self.w_m;
        out.push(("w_m_v", m0.values_mut()));
        out.push(("w_m_t", m1.values_mut()));
        let [a0, a1] = &mut self.w_a;
        out.push(("w_a_v", a0.values_mut()));
        out.push(("w_a_t", a1.values_mut()));
        let [f0, f1] = &mut self.w_f;
        out.push(("w_f_v", f0.values_mut()));
        out.push(("w_f_t", f1.values_mut()));
        let [q0, q1] = &mut self.q_att;
        out.push(("q_att_v", q0));
        out.push(("q_att_t", q1));
        for w in &mut self.w_gcn {
            out.push(("w_gcn", w.values_mut()));
        }
        out
    }

    pub fn n_entries(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    /// Add `delta` to the flat entry `idx` (block-major). For the
    /// finite-difference oracle.
    pub fn add_flat(&mut self, idx: usize, delta: f64) {
        let mut off = 0;
        for (_, block) in self.blocks_mut() {
            if idx < off + block.len() {
                block[idx - off] += delta;
                return;
            }
            off += block.len();
        }
        panic!("flat index {idx} out of range");
    }

    /// (block name, offset within block) of a flat index.
    pub fn locate_flat(&self, idx: usize) -> (&'static str, usize) {
        let mut off = 0;
        for (name, block) in self.blocks() {
            if idx < off + block.len() {
                return (name, idx - off);
            }
            off += block.len();
        }
        panic!("flat index {idx} out of range");
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_entries());
        for (_, b) in self.blocks() {
            out.extend_from_slice(b);
        }
        out
    }
}
