//! Portable split generator (`chacha8-v1`): ChaCha8 seeded from a `u64`,
//! one stream per (purpose, index), Fisher-Yates with multiply-shift
//! index draws. Nothing here depends on `rand`'s shuffle internals.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PURPOSE_FOLDS: u64 = 1;
pub const PURPOSE_SPLITS: u64 = 2;

pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | (index & 0xffff_ffff));
    rng
}

/// Uniform in `0..n` for `n >= 1`.
pub fn below(rng: &mut impl RngCore, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

pub fn permutation(rng: &mut impl RngCore, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = below(rng, i + 1);
        p.swap(i, j);
    }
    p
}

/// Validation indices of each fold, sorted. Fold sizes differ by at most one.
pub fn folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let perm = permutation(&mut stream(seed, PURPOSE_FOLDS, 0), n);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = n / k + usize::from(f < n % k);
        let mut idx = perm[start..start + len].to_vec();
        idx.sort_unstable();
        out.push(idx);
        start += len;
    }
    out
}

/// `(train, test)` for split `index`, both sorted; train gets `round(fraction * n)`
/// rows, clamped so both sides keep at least one.
pub fn split(n: usize, fraction: f64, seed: u64, index: usize) -> (Vec<usize>, Vec<usize>) {
    let perm = permutation(&mut stream(seed, PURPOSE_SPLITS, index as u64), n);
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Complement of `held_out` (sorted) in `0..n`.
pub fn complement(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    held_out.iter().for_each(|&i| keep[i] = false);
    (0..n).filter(|&i| keep[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_is_a_bijection_and_reproducible() {
        for n in [0, 1, 2, 17, 100] {
            let p = permutation(&mut stream(5, 9, 0), n);
            let mut s = p.clone();
            s.sort_unstable();
            assert_eq!(s, (0..n).collect::<Vec<_>>());
            assert_eq!(p, permutation(&mut stream(5, 9, 0), n));
        }
        assert_ne!(permutation(&mut stream(5, 9, 0), 50), permutation(&mut stream(6, 9, 0), 50));
    }

    #[test]
    fn folds_partition_the_rows() {
        let f = folds(23, 5, 1);
        assert_eq!(f.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn splits_are_disjoint_and_distinct() {
        let (tr, te) = split(11, 0.5, 3, 0);
        assert_eq!(tr.len(), 6);
        assert_eq!(te.len(), 5);
        assert!(tr.iter().all(|i| !te.contains(i)));
        assert_ne!(split(11, 0.5, 3, 1).0, tr);
        assert_eq!(complement(5, &[1, 3]), vec![0, 2, 4]);
    }

    #[test]
    fn draws_are_roughly_uniform() {
        let mut rng = stream(0, 0, 0);
        let mut counts = [0usize; 6];
        for _ in 0..60_000 {
            counts[below(&mut rng, 6)] += 1;
        }
        assert!(counts.iter().all(|&c| (9_000..11_000).contains(&c)));
    }
}
