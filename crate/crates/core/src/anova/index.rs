use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of input coordinates, stored 0-based and strictly increasing.
///
/// The empty index is the anchored constant term. Indices order first by
/// size and then lexicographically on their coordinates; every report and
/// the candidate loop in the decomposition use this order. `Display`
/// prints coordinates 1-based, e.g. `{1,3}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct AnovaIndex(Vec<usize>);

impl TryFrom<Vec<usize>> for AnovaIndex {
    type Error = Error;

    fn try_from(coords: Vec<usize>) -> Result<Self> {
        Self::new(coords)
    }
}

impl From<AnovaIndex> for Vec<usize> {
    fn from(t: AnovaIndex) -> Self {
        t.0
    }
}

impl AnovaIndex {
    pub fn new(coords: Vec<usize>) -> Result<Self> {
        if coords.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "ANOVA index coordinates must be strictly increasing: {coords:?}"
            )));
        }
        Ok(Self(coords))
    }

    /// Sorts and deduplicates arbitrary coordinates.
    pub fn from_unsorted(mut coords: Vec<usize>) -> Self {
        coords.sort_unstable();
        coords.dedup();
        Self(coords)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn singleton(i: usize) -> Self {
        Self(vec![i])
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Checks every coordinate lies in `0..m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= m => Err(Error::invalid(format!(
                "ANOVA index {self} exceeds input dimension {m}"
            ))),
            _ => Ok(()),
        }
    }

    /// The sub-index selected by the bits of `mask` over positions of `self`.
    pub fn subset(&self, mask: usize) -> AnovaIndex {
        AnovaIndex(
            self.0
                .iter()
                .enumerate()
                .filter(|(p, _)| mask & (1 << p) != 0)
                .map(|(_, &c)| c)
                .collect(),
        )
    }

    /// All subsets obtained by dropping exactly one coordinate.
    pub fn facets(&self) -> impl Iterator<Item = AnovaIndex> + '_ {
        (0..self.0.len()).map(move |skip| {
            AnovaIndex(
                self.0
                    .iter()
                    .enumerate()
                    .filter(|&(p, _)| p != skip)
                    .map(|(_, &c)| c)
                    .collect(),
            )
        })
    }

    /// Picks the coordinates of `self` out of a full input vector.
    pub fn project(&self, xi: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&i| xi[i]).collect()
    }

    /// Label with 1-based coordinates, e.g. `{1,3}`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

/// Size first, then lexicographic on the coordinates.
pub fn index_order(a: &AnovaIndex, b: &AnovaIndex) -> Ordering {
    a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0))
}

impl Ord for AnovaIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        index_order(self, other)
    }
}

impl PartialOrd for AnovaIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for AnovaIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", c + 1)?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(c: &[usize]) -> AnovaIndex {
        AnovaIndex::new(c.to_vec()).unwrap()
    }

    #[test]
    fn ordering_rules() {
        // {2} before {1,2}; {1,3} before {1,4} (1-based labels).
        assert_eq!(index_order(&idx(&[1]), &idx(&[0, 1])), Ordering::Less);
        assert_eq!(index_order(&idx(&[0, 2]), &idx(&[0, 3])), Ordering::Less);
        assert_eq!(index_order(&idx(&[0, 1]), &idx(&[0, 1])), Ordering::Equal);
        assert_eq!(index_order(&AnovaIndex::empty(), &idx(&[0])), Ordering::Less);
        let mut v = vec![idx(&[1, 2]), idx(&[3]), idx(&[0, 4]), idx(&[0])];
        v.sort();
        assert_eq!(v, vec![idx(&[0]), idx(&[3]), idx(&[0, 4]), idx(&[1, 2])]);
    }

    #[test]
    fn construction_and_display() {
        assert!(AnovaIndex::new(vec![2, 1]).is_err());
        assert!(AnovaIndex::new(vec![1, 1]).is_err());
        assert_eq!(AnovaIndex::from_unsorted(vec![3, 0, 3]), idx(&[0, 3]));
        assert_eq!(idx(&[0, 2]).to_string(), "{1,3}");
        assert_eq!(AnovaIndex::empty().to_string(), "{}");
        assert!(idx(&[0, 4]).validate(4).is_err());
        assert!(idx(&[0, 3]).validate(4).is_ok());
    }

    #[test]
    fn subsets_and_facets() {
        let t = idx(&[1, 4, 6]);
        assert_eq!(t.subset(0), AnovaIndex::empty());
        assert_eq!(t.subset(0b101), idx(&[1, 6]));
        let f: Vec<_> = t.facets().collect();
        assert_eq!(f, vec![idx(&[4, 6]), idx(&[1, 6]), idx(&[1, 4])]);
        assert_eq!(t.project(&[0., 10., 20., 30., 40., 50., 60.]), vec![10., 40., 60.]);
    }
}

/// Serde adapter writing an index-keyed map as a list of `[index, value]`
/// pairs, since JSON object keys must be strings.
pub mod index_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::AnovaIndex;

    pub fn serialize<V: Serialize, S: Serializer>(
        map: &BTreeMap<AnovaIndex, V>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<AnovaIndex, V>, D::Error> {
        let pairs: Vec<(AnovaIndex, V)> = Vec::deserialize(d)?;
        let n = pairs.len();
        let map: BTreeMap<_, _> = pairs.into_iter().collect();
        if map.len() != n {
            return Err(serde::de::Error::custom("duplicate index in map"));
        }
        Ok(map)
    }
}
