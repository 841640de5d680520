//! Evaluation protocol: interaction preprocessing, the per-user 8:1:1 split
//! and top-K ranking metrics with exact tie handling.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{dot, DenseMatrix};
use crate::error::{CoreError, Result};
use crate::math;
use crate::rng::SeededRng;

/// Users below this interaction count are removed during preprocessing.
pub const MIN_USER_INTERACTIONS: usize = 4;

/// The split seeds used across the experiment grids.
pub const SPLIT_SEEDS: [u64; 5] = [9, 672, 5368, 12784, 2023];

/// Compensated accumulator for metric averaging.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Dense-reindexed interactions after filtering.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    /// Deduplicated (user, item) pairs with dense indices, ordered by user
    /// then first appearance.
    pub pairs: Vec<(u32, u32)>,
    pub n_users: usize,
    pub n_items: usize,
    /// New user index -> original user index.
    pub user_origin: Vec<u32>,
    /// New item index -> original item index.
    pub item_origin: Vec<u32>,
}

/// Deduplicate, drop users with fewer than [`MIN_USER_INTERACTIONS`]
/// interactions, and reindex both sides densely in ascending original order.
pub fn preprocess(pairs: &[(u32, u32)], n_users: usize, n_items: usize) -> Result<Preprocessed> {
    for &(u, i) in pairs {
        if u as usize >= n_users || i as usize >= n_items {
            return Err(CoreError::IndexOutOfBounds(alloc::format!(
                "pair ({u}, {i}) outside {n_users}x{n_items}"
            )));
        }
    }
    // per-user item lists in first-appearance order, duplicates dropped
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); n_users];
    for &(u, i) in pairs {
        let list = &mut per_user[u as usize];
        if !list.contains(&i) {
            list.push(i);
        }
    }
    let kept_users: Vec<u32> = (0..n_users as u32)
        .filter(|&u| per_user[u as usize].len() >= MIN_USER_INTERACTIONS)
        .collect();
    let mut item_seen = vec![false; n_items];
    for &u in &kept_users {
        for &i in &per_user[u as usize] {
            item_seen[i as usize] = true;
        }
    }
    let item_origin: Vec<u32> = (0..n_items as u32)
        .filter(|&i| item_seen[i as usize])
        .collect();
    let mut item_new = vec![u32::MAX; n_items];
    for (new, &orig) in item_origin.iter().enumerate() {
        item_new[orig as usize] = new as u32;
    }
    let mut out = Vec::new();
    for (new_u, &orig_u) in kept_users.iter().enumerate() {
        for &orig_i in &per_user[orig_u as usize] {
            out.push((new_u as u32, item_new[orig_i as usize]));
        }
    }
    Ok(Preprocessed {
        pairs: out,
        n_users: kept_users.len(),
        n_items: item_origin.len(),
        user_origin: kept_users,
        item_origin,
    })
}

/// Per-user 8:1:1 interaction split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<(u32, u32)>,
    pub valid: Vec<(u32, u32)>,
    pub test: Vec<(u32, u32)>,
}

/// Split each user's interactions: shuffle with one seeded stream walking
/// users in index order, then take ceil(n/10) for test, the preceding
/// ceil(n/10) for validation, and the rest for training. Training always
/// keeps at least one interaction.
pub fn split_811(pairs: &[(u32, u32)], n_users: usize, seed: u64) -> Split {
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); n_users];
    for &(u, i) in pairs {
        per_user[u as usize].push(i);
    }
    let mut rng = SeededRng::new(seed);
    let mut split = Split {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for (u, items) in per_user.iter_mut().enumerate() {
        if items.is_empty() {
            continue;
        }
        rng.shuffle(items);
        let n = items.len();
        let mut n_test = (n + 9) / 10;
        if n_test >= n {
            n_test = n - 1;
        }
        let mut n_valid = (n + 9) / 10;
        if n_test + n_valid >= n {
            n_valid = n - 1 - n_test;
        }
        let n_train = n - n_test - n_valid;
        for (pos, &i) in items.iter().enumerate() {
            let target = if pos < n_train {
                &mut split.train
            } else if pos < n_train + n_valid {
                &mut split.valid
            } else {
                &mut split.test
            };
            target.push((u as u32, i));
        }
    }
    split
}

/// Fraction of the relevant items that appear in the first `k` ranks.
pub fn recall_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|i| relevant.binary_search(i).is_ok())
        .count();
    hits as f64 / relevant.len() as f64
}

/// Binary-gain NDCG with the ideal DCG over `min(k, |relevant|)` positions.
pub fn ndcg_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.binary_search(item).is_ok() {
            dcg += 1.0 / math::log2((pos + 2) as f64);
        }
    }
    let ideal = relevant.len().min(k);
    let mut idcg = 0.0;
    for pos in 0..ideal {
        idcg += 1.0 / math::log2((pos + 2) as f64);
    }
    dcg / idcg
}

/// Top-`k` item indices by score, masked items skipped, ties resolved toward
/// the lower item index.
pub fn rank_items(scores: &[f64], exclude: &[u32], k: usize) -> Vec<u32> {
    let mut top: Vec<(u32, f64)> = Vec::with_capacity(k + 1);
    for (i, &s) in scores.iter().enumerate() {
        if exclude.binary_search(&(i as u32)).is_ok() {
            continue;
        }
        if top.len() == k && s <= top[k - 1].1 {
            continue;
        }
        // descending score, ascending index on equal scores
        let pos = top
            .binary_search_by(|&(pi, pv)| {
                pv.partial_cmp(&s)
                    .unwrap()
                    .then((i as u32).cmp(&pi))
                    .reverse()
            })
            .unwrap_or_else(|e| e);
        top.insert(pos, (i as u32, s));
        if top.len() > k {
            top.pop();
        }
    }
    top.into_iter().map(|(i, _)| i).collect()
}

/// Averaged metrics over the evaluated users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub recall: f64,
    pub ndcg: f64,
    /// Users with at least one relevant item.
    pub n_users: usize,
}

/// Full-ranking evaluation from fused representations.
///
/// `exclude[u]` holds sorted item indices masked out of user `u`'s ranking
/// (training items, plus validation items at test time); `relevant[u]` holds
/// the sorted held-out items. Users with no relevant items are skipped.
pub fn evaluate_topk(
    z: &DenseMatrix,
    n_users: usize,
    exclude: &[Vec<u32>],
    relevant: &[Vec<u32>],
    k: usize,
) -> Result<EvalMetrics> {
    let n_items = z.n_rows() - n_users;
    if exclude.len() != n_users || relevant.len() != n_users {
        return Err(CoreError::ShapeMismatch(
            "evaluate: per-user list lengths disagree".into(),
        ));
    }
    let mut recall_sum = KahanSum::default();
    let mut ndcg_sum = KahanSum::default();
    let mut counted = 0usize;
    let mut scores = vec![0.0f64; n_items];
    for u in 0..n_users {
        if relevant[u].is_empty() {
            continue;
        }
        let zu = z.row(u);
        for (i, s) in scores.iter_mut().enumerate() {
            *s = dot(zu, z.row(n_users + i));
        }
        let ranked = rank_items(&scores, &exclude[u], k);
        recall_sum.add(recall_at_k(&ranked, &relevant[u], k));
        ndcg_sum.add(ndcg_at_k(&ranked, &relevant[u], k));
        counted += 1;
    }
    if counted == 0 {
        return Ok(EvalMetrics {
            recall: 0.0,
            ndcg: 0.0,
            n_users: 0,
        });
    }
    Ok(EvalMetrics {
        recall: recall_sum.value() / counted as f64,
        ndcg: ndcg_sum.value() / counted as f64,
        n_users: counted,
    })
}
