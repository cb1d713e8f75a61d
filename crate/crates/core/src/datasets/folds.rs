use rand::seq::SliceRandom;

use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Partition of `0..n` into `K` disjoint folds (0-based fold and point indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl FoldAssignment {
    /// Build from explicit fold memberships; validates the partition property.
    pub fn from_members(n: usize, members: Vec<Vec<usize>>) -> Result<Self> {
        let mut fold_of = vec![usize::MAX; n];
        for (k, fold) in members.iter().enumerate() {
            for &i in fold {
                if i >= n || fold_of[i] != usize::MAX {
                    return invalid(format!("index {i} out of range or in two folds"));
                }
                fold_of[i] = k;
            }
        }
        if fold_of.contains(&usize::MAX) {
            return invalid("folds do not cover every index");
        }
        let mut members = members;
        members.iter_mut().for_each(|m| m.sort_unstable());
        Ok(Self { fold_of, members })
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    /// Sorted indices of fold `k`.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    /// Sorted indices of every fold except `k`.
    pub fn complement(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != k).collect()
    }
}

/// Random permutation of `0..n` cut into `K` contiguous near-equal blocks;
/// the first `n mod K` folds receive one extra point.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return invalid(format!("need 2 <= K <= n, got K={k}, n={n}"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let base = n / k;
    let extra = n % k;
    let mut members = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        members.push(perm[start..start + size].to_vec());
        start += size;
    }
    FoldAssignment::from_members(n, members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_points_two_folds() {
        let f = make_folds(4, 2, 1).unwrap();
        assert_eq!(f.members(0).len(), 2);
        assert_eq!(f.members(1).len(), 2);
        let mut all: Vec<_> = f.members(0).iter().chain(f.members(1)).copied().collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn remainder_goes_to_first_folds() {
        let f = make_folds(5, 2, 9).unwrap();
        assert_eq!(f.members(0).len(), 3);
        assert_eq!(f.members(1).len(), 2);
    }

    #[test]
    fn three_hundred_points_five_folds() {
        let f = make_folds(300, 5, 3).unwrap();
        assert!((0..5).all(|k| f.members(k).len() == 60));
    }

    #[test]
    fn invalid_k_rejected() {
        assert!(make_folds(3, 4, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_property(n in 2usize..200, kk in 2usize..20, seed: u64) {
            let k = kk.min(n);
            let f = make_folds(n, k, seed).unwrap();
            let sizes: Vec<usize> = (0..k).map(|j| f.members(j).len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut seen = vec![false; n];
            for j in 0..k {
                for &i in f.members(j) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                    prop_assert_eq!(f.fold_of(i), j);
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            prop_assert_eq!(make_folds(n, k, seed).unwrap(), f);
        }
    }
}
