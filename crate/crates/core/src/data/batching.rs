use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::patches::PatchPair;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Indices into a pair list; `partial` marks a short final batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexBatch {
    pub indices: Vec<usize>,
    pub partial: bool,
}

#[derive(Clone, Debug)]
pub struct PairBatch {
    pub pairs: Vec<PatchPair>,
    pub partial: bool,
}

impl PairBatch {
    /// Stacks into `([N, 3, p', p'], [N, 3, p, p])`.
    pub fn tensors(&self) -> Result<(Tensor<f32>, Tensor<f32>)> {
        stack_pairs(self.pairs.iter())
    }
}

pub fn stack_pairs<'a>(pairs: impl Iterator<Item = &'a PatchPair> + Clone) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let lr: Vec<&Tensor<f32>> = pairs.clone().map(|p| &p.lr).collect();
    let hr: Vec<&Tensor<f32>> = pairs.map(|p| &p.hr).collect();
    Ok((Tensor::stack(&lr)?, Tensor::stack(&hr)?))
}

/// Deterministic shuffle of `0..n` split into batches.
pub fn shuffled_batches(n: usize, batch_size: usize, seed: u64) -> Result<Vec<IndexBatch>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order
        .chunks(batch_size)
        .map(|c| IndexBatch {
            indices: c.to_vec(),
            partial: c.len() < batch_size,
        })
        .collect())
}

pub fn make_batches(
    pairs: impl IntoIterator<Item = PatchPair>,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<PairBatch>> {
    let pairs: Vec<PatchPair> = pairs.into_iter().collect();
    if pairs.is_empty() {
        log::warn!("make_batches: no patch pairs to batch");
    }
    let plan = shuffled_batches(pairs.len(), batch_size, seed)?;
    let mut slots: Vec<Option<PatchPair>> = pairs.into_iter().map(Some).collect();
    Ok(plan
        .into_iter()
        .map(|b| PairBatch {
            pairs: b.indices.iter().map(|&i| slots[i].take().expect("index used once")).collect(),
            partial: b.partial,
        })
        .collect())
}
