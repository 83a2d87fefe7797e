//! Deterministic batch schedule. Each epoch shuffles sample indices with a
//! stream keyed by (seed, epoch) and yields full batches in order, dropping
//! the trailing partial batch. The schedule for any (seed, epoch) can be
//! recomputed at any time, so resuming needs no iterator state.

use rand::seq::SliceRandom;

use crate::rng::{purpose, stream};

pub fn epoch_permutation(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..len).collect();
    let mut rng = stream(seed, purpose::SHUFFLE_EPOCH, epoch, 0);
    indices.shuffle(&mut rng);
    indices
}

pub fn batches(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch_size must be positive");
    let perm = epoch_permutation(len, seed, epoch);
    perm.chunks_exact(batch_size).map(|chunk| chunk.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_partition_a_seeded_permutation() {
        let bs = batches(100, 32, 7, 3);
        assert_eq!(bs.len(), 3, "dropped the trailing partial batch");
        let mut seen: Vec<usize> = bs.iter().flatten().copied().collect();
        assert_eq!(seen.len(), 96);
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 96, "no index repeats within an epoch");
    }

    #[test]
    fn schedule_is_deterministic_and_epoch_dependent() {
        assert_eq!(batches(64, 16, 1, 0), batches(64, 16, 1, 0));
        assert_ne!(batches(64, 16, 1, 0), batches(64, 16, 1, 1));
        assert_ne!(batches(64, 16, 1, 0), batches(64, 16, 2, 0));
    }

    #[test]
    fn exact_division_keeps_every_sample() {
        let bs = batches(64, 16, 0, 0);
        assert_eq!(bs.len(), 4);
        let mut seen: Vec<usize> = bs.iter().flatten().copied().collect();
        seen.sort_unstable();
        let expected: Vec<usize> = (0..64).collect();
        assert_eq!(seen, expected);
    }
}
