//! Synthetic data generators: planted block structure for recovery tests and
//! uniform random interactions for scaling benchmarks.

use alloc::vec::Vec;

use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::forward::ModalityFeatures;
use crate::rng::SeededRng;

/// A generated interaction dataset with aligned modality features.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub pairs: Vec<(u32, u32)>,
    pub n_users: usize,
    pub n_items: usize,
    pub feats: ModalityFeatures,
}

fn block_features(
    n_items: usize,
    items_per_block: usize,
    n_blocks: usize,
    dim: usize,
    noise: f64,
    rng: &mut SeededRng,
) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n_items, dim);
    for i in 0..n_items {
        let b = (i / items_per_block).min(n_blocks - 1);
        let row = m.row_mut(i);
        // block center: indicator on a block-owned coordinate
        row[b % dim] = 1.0;
        for v in row.iter_mut() {
            *v += noise * rng.uniform(-1.0, 1.0);
        }
    }
    m
}

/// Planted block-diagonal interactions: users and items are partitioned into
/// `n_blocks` groups; in-block pairs interact with probability `p_in`,
/// cross-block pairs with `p_cross`. Every user is guaranteed at least
/// `min_per_user` in-block interactions. Modality features carry the block
/// identity plus noise.
#[allow(clippy::too_many_arguments)]
pub fn planted_blocks(
    users_per_block: usize,
    items_per_block: usize,
    n_blocks: usize,
    p_in: f64,
    p_cross: f64,
    min_per_user: usize,
    d_visual: usize,
    d_textual: usize,
    noise: f64,
    rng: &mut SeededRng,
) -> Result<SynthData> {
    let n_users = users_per_block * n_blocks;
    let n_items = items_per_block * n_blocks;
    let mut pairs = Vec::new();
    for u in 0..n_users {
        let ub = u / users_per_block;
        let mut own: Vec<u32> = Vec::new();
        for i in 0..n_items {
            let ib = i / items_per_block;
            let p = if ub == ib { p_in } else { p_cross };
            if rng.next_f64() < p {
                pairs.push((u as u32, i as u32));
                if ub == ib {
                    own.push(i as u32);
                }
            }
        }
        // top up sparse users from their own block, lowest item index first
        let mut fill = ub * items_per_block;
        while own.len() < min_per_user {
            let cand = fill as u32;
            fill += 1;
            if !own.contains(&cand) {
                pairs.push((u as u32, cand));
                own.push(cand);
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let feats = ModalityFeatures {
        x_visual: block_features(n_items, items_per_block, n_blocks, d_visual, noise, rng),
        x_textual: block_features(n_items, items_per_block, n_blocks, d_textual, noise, rng),
    };
    Ok(SynthData {
        pairs,
        n_users,
        n_items,
        feats,
    })
}

/// Uniform random interactions for throughput benchmarks: each user draws
/// `per_user` distinct items; features are uniform noise.
pub fn bench_dataset(
    n_users: usize,
    n_items: usize,
    per_user: usize,
    d_visual: usize,
    d_textual: usize,
    rng: &mut SeededRng,
) -> Result<SynthData> {
    let per_user = per_user.min(n_items);
    let mut pairs = Vec::with_capacity(n_users * per_user);
    let mut drawn: Vec<u32> = Vec::with_capacity(per_user);
    for u in 0..n_users {
        drawn.clear();
        while drawn.len() < per_user {
            let i = rng.gen_index(n_items) as u32;
            if !drawn.contains(&i) {
                drawn.push(i);
                pairs.push((u as u32, i));
            }
        }
    }
    pairs.sort_unstable();
    let mk = |rng: &mut SeededRng, d: usize| {
        DenseMatrix::from_vec(
            n_items,
            d,
            (0..n_items * d).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
    };
    let x_visual = mk(rng, d_visual)?;
    let x_textual = mk(rng, d_textual)?;
    Ok(SynthData {
        pairs,
        n_users,
        n_items,
        feats: ModalityFeatures { x_visual, x_textual },
    })
}
