//! BPR triplet sampling with negative rejection.

use crate::error::{CoreError, Result};
use crate::graph::InteractionGraph;
use crate::loss::Batch;
use crate::rng::SeededRng;

/// Sample `size` (user, positive, negative) triplets uniformly: a random
/// user with at least one interaction, one of their items, and a rejection-
/// sampled non-interacted item.
pub fn sample_triplets(
    g: &InteractionGraph,
    size: usize,
    rng: &mut SeededRng,
) -> Result<Batch> {
    let n_users = g.n_users();
    let n_items = g.n_items();
    if g.user_neighbors.iter().all(|n| n.is_empty()) {
        return Err(CoreError::InvalidInput("no interactions to sample".into()));
    }
    if g.user_neighbors
        .iter()
        .any(|n| !n.is_empty() && n.len() >= n_items)
    {
        return Err(CoreError::InvalidInput(
            "a user interacted with every item; no negatives exist".into(),
        ));
    }
    let mut batch = Batch::default();
    batch.users.reserve(size);
    batch.pos.reserve(size);
    batch.neg.reserve(size);
    while batch.users.len() < size {
        let u = rng.gen_index(n_users);
        let neigh = &g.user_neighbors[u];
        if neigh.is_empty() {
            continue;
        }
        let pos = neigh[rng.gen_index(neigh.len())];
        let neg = loop {
            let cand = rng.gen_index(n_items) as u32;
            if neigh.binary_search(&cand).is_err() {
                break cand;
            }
        };
        batch.users.push(u as u32);
        batch.pos.push(pos);
        batch.neg.push(neg);
    }
    Ok(batch)
}
