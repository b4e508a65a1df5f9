// Allocation-order permutations of {1, ..., n}.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Largest `n` for which all `n!` permutations may be enumerated (8! = 40,320).
pub const PERMUTATION_ENUMERATION_CAP: usize = 8;

/// An allocation order: `get(k)` is the 0-based item allocated at step `k + 1`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn natural(n_items: usize) -> Self {
        Self {
            order: (0..n_items).collect(),
        }
    }

    /// Builds from 0-based item indices, checking the bijection property.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(Error::EmptyInput("permutation"));
        }
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || seen[i] {
                return Err(Error::invalid(format!(
                    "order is not a permutation of 0..{n}"
                )));
            }
            seen[i] = true;
        }
        Ok(Self { order })
    }

    /// Builds from the 1-based convention used in serialized form.
    pub fn from_one_based(order: &[usize]) -> Result<Self> {
        if order.contains(&0) {
            return Err(Error::invalid("one-based permutation contains 0"));
        }
        Self::from_order(order.iter().map(|&i| i - 1).collect())
    }

    pub fn random<R: Rng>(n_items: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n_items).collect();
        order.shuffle(rng);
        Self { order }
    }

    pub fn n_items(&self) -> usize {
        self.order.len()
    }

    /// Item allocated at (0-based) step `k`.
    pub fn get(&self, k: usize) -> usize {
        self.order[k]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied()
    }

    /// Shuffles the entries at the given positions in place.
    pub fn shuffle_positions<R: Rng>(&mut self, positions: &[usize], rng: &mut R) {
        let mut values: Vec<usize> = positions.iter().map(|&p| self.order[p]).collect();
        values.shuffle(rng);
        for (&p, v) in positions.iter().zip(values) {
            self.order[p] = v;
        }
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation({self})")
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_based: Vec<String> = self.order.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{}", one_based.join(","))
    }
}

/// Streams all permutations of `n` items in lexicographic order.
pub fn enumerate_permutations(n_items: usize) -> Result<PermutationIter> {
    if n_items == 0 {
        return Err(Error::EmptyInput("enumerate_permutations"));
    }
    if n_items > PERMUTATION_ENUMERATION_CAP {
        return Err(Error::Capacity {
            context: "enumerate_permutations",
            limit: PERMUTATION_ENUMERATION_CAP,
            got: n_items,
        });
    }
    Ok(PermutationIter {
        order: (0..n_items).collect(),
        done: false,
    })
}

pub struct PermutationIter {
    order: Vec<usize>,
    done: bool,
}

impl Iterator for PermutationIter {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        if self.done {
            return None;
        }
        let current = Permutation {
            order: self.order.clone(),
        };
        // Lexicographic next-permutation.
        let n = self.order.len();
        let mut i = n.saturating_sub(1);
        while i > 0 && self.order[i - 1] >= self.order[i] {
            i -= 1;
        }
        if i == 0 {
            self.done = true;
        } else {
            let pivot = i - 1;
            let mut j = n - 1;
            while self.order[j] <= self.order[pivot] {
                j -= 1;
            }
            self.order.swap(pivot, j);
            self.order[i..].reverse();
        }
        Some(current)
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijection_is_enforced() {
        assert!(Permutation::from_order(vec![0, 2, 2]).is_err());
        assert!(Permutation::from_order(vec![0, 3, 1]).is_err());
        assert!(Permutation::from_order(vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn one_based_round_trip() {
        let p = Permutation::from_one_based(&[3, 1, 2]).unwrap();
        assert_eq!(p.order(), &[2, 0, 1]);
        assert_eq!(p.to_string(), "3,1,2");
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_permutations(1).unwrap().count(), 1);
        assert_eq!(enumerate_permutations(4).unwrap().count(), 24);
        assert_eq!(enumerate_permutations(6).unwrap().count(), 720);
        assert!(enumerate_permutations(9).is_err());
    }

    #[test]
    fn enumeration_is_duplicate_free() {
        let mut all: Vec<Vec<usize>> = enumerate_permutations(5)
            .unwrap()
            .map(|p| p.order().to_vec())
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 120);
    }
}
