// Canonical set partitions of {1, ..., n} encoded as cluster label vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest number of items for which full enumeration is supported.
/// Bell(12) = 4,213,597 partitions, which is still comfortable to stream.
pub const ENUMERATION_CAP: usize = 12;

/// A partition of `{1, ..., n}` stored as canonical cluster labels.
///
/// Labels are 1-based: item 1 (index 0) has label 1, and each subsequent
/// item's label is at most one more than the largest label seen before it.
/// Two label vectors encode the same partition if and only if their canonical
/// forms are equal.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    /// Canonicalizes arbitrary positive labels by first appearance.
    /// Equal raw labels define co-clustering.
    pub fn from_labels(raw: &[usize]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput("partition labels"));
        }
        Ok(Self {
            labels: canonicalize_labels(raw),
        })
    }

    /// All `n` items in one cluster.
    pub fn one_cluster(n_items: usize) -> Result<Self> {
        Self::from_labels(&vec![1; n_items])
    }

    /// Every item in its own cluster.
    pub fn singletons(n_items: usize) -> Result<Self> {
        Self::from_labels(&(1..=n_items).collect::<Vec<_>>())
    }

    pub fn n_items(&self) -> usize {
        self.labels.len()
    }

    /// Number of clusters, i.e. the largest label.
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// 1-based cluster label of a 0-based item index.
    pub fn label(&self, item: usize) -> usize {
        self.labels[item]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn same_cluster(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    /// Cluster sizes indexed by `label - 1`.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_clusters()];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }

    /// Items belonging to the cluster with the given 1-based label.
    pub fn cluster_members(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Partition({self})")
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for l in &self.labels {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let raw: Vec<usize> = s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad partition label {tok:?} in {s:?}")))
            })
            .collect::<Result<_>>()?;
        if raw.contains(&0) {
            return Err(Error::invalid(format!("labels must be positive in {s:?}")));
        }
        Partition::from_labels(&raw)
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Relabels by order of first appearance so that the result is canonical.
pub fn canonicalize_labels(raw: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::with_capacity(raw.len());
    for &r in raw {
        let mapped = match map.iter().find(|&&(orig, _)| orig == r) {
            Some(&(_, m)) => m,
            None => {
                let m = map.len() + 1;
                map.push((r, m));
                m
            }
        };
        out.push(mapped);
    }
    out
}

/// Streams all set partitions of `n` items in restricted-growth-string order.
pub fn enumerate_partitions(n_items: usize) -> Result<PartitionIter> {
    if n_items == 0 {
        return Err(Error::EmptyInput("enumerate_partitions"));
    }
    if n_items > ENUMERATION_CAP {
        return Err(Error::Capacity {
            context: "enumerate_partitions",
            limit: ENUMERATION_CAP,
            got: n_items,
        });
    }
    Ok(PartitionIter {
        labels: vec![1; n_items],
        done: false,
    })
}

pub struct PartitionIter {
    labels: Vec<usize>,
    done: bool,
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let current = Partition {
            labels: self.labels.clone(),
        };
        // Advance: find the rightmost position that can be incremented while
        // keeping the restricted growth property, then reset the tail to 1.
        let n = self.labels.len();
        let mut advanced = false;
        for i in (1..n).rev() {
            let prefix_max = self.labels[..i].iter().copied().max().unwrap();
            if self.labels[i] <= prefix_max {
                self.labels[i] += 1;
                for l in self.labels[i + 1..].iter_mut() {
                    *l = 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            self.done = true;
        }
        Some(current)
    }
}
