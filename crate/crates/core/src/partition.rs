//! Grouping of classes by equal code prefix.
//!
//! Classes whose codes agree on every level assigned so far are *siblings*:
//! they hang off the same tree node and pay the sibling penalty when they
//! collide on a dimension at the next level. Classes with a unique prefix
//! live in the singleton pool and pay only the cross-class penalty.

use crate::error::{HiqError, Result};

/// Partition of class indices `0..n_classes` into sibling groups (each of
/// size >= 2) and a singleton pool.
///
/// The root partition — used before any level has been assigned — places
/// every class in the singleton pool: no sibling penalty applies at the
/// first level. It is still treated as "all classes share the empty prefix"
/// when refined by the first level's codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiblingPartition {
    groups: Vec<Vec<usize>>,
    singletons: Vec<usize>,
    n_classes: usize,
    at_root: bool,
    group_of: Vec<Option<usize>>,
}

impl SiblingPartition {
    /// The partition in effect at the first level: every class is a
    /// singleton and no sibling penalty applies.
    pub fn all_singletons(n_classes: usize) -> Self {
        Self {
            groups: Vec::new(),
            singletons: (0..n_classes).collect(),
            n_classes,
            at_root: true,
            group_of: vec![None; n_classes],
        }
    }

    /// Builds a partition from explicit member sets. Sets of size 1 are
    /// moved to the singleton pool; the sets must partition `0..n_classes`.
    pub fn from_groups(sets: Vec<Vec<usize>>, n_classes: usize) -> Result<Self> {
        let mut seen = vec![false; n_classes];
        let mut groups = Vec::new();
        let mut singletons = Vec::new();
        for mut set in sets {
            set.sort_unstable();
            for &p in &set {
                if p >= n_classes {
                    return Err(HiqError::Input(format!(
                        "class index {} out of range [0, {})",
                        p, n_classes
                    )));
                }
                if seen[p] {
                    return Err(HiqError::Input(format!("class {} appears twice", p)));
                }
                seen[p] = true;
            }
            match set.len() {
                0 => {}
                1 => singletons.push(set[0]),
                _ => groups.push(set),
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(HiqError::Input("groups do not cover all classes".into()));
        }
        singletons.sort_unstable();
        groups.sort_by_key(|g| g[0]);
        let mut group_of = vec![None; n_classes];
        for (r, g) in groups.iter().enumerate() {
            for &p in g {
                group_of[p] = Some(r);
            }
        }
        Ok(Self {
            groups,
            singletons,
            n_classes,
            at_root: false,
            group_of,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Number of sibling groups (excluding the singleton pool).
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Members of sibling group `r` (0-based among groups), sorted.
    pub fn group(&self, r: usize) -> &[usize] {
        &self.groups[r]
    }

    pub fn group_size(&self, r: usize) -> usize {
        self.groups[r].len()
    }

    /// Classes without a sibling.
    pub fn singletons(&self) -> &[usize] {
        &self.singletons
    }

    /// Sibling group of class `p`, or `None` when `p` is a singleton.
    pub fn group_of(&self, p: usize) -> Option<usize> {
        self.group_of[p]
    }

    /// True for the first-level partition that predates any code assignment.
    pub fn is_root(&self) -> bool {
        self.at_root
    }

    /// Ordered pairs `(p, q)` of distinct sibling classes.
    pub fn sibling_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for g in &self.groups {
            for &p in g {
                for &q in g {
                    if p != q {
                        out.push((p, q));
                    }
                }
            }
        }
        out
    }

    /// Checks that the groups and singleton pool are disjoint and cover
    /// `0..n_classes`, and that every group has at least two members.
    pub fn check(&self) -> Result<()> {
        let mut seen = vec![false; self.n_classes];
        for g in &self.groups {
            if g.len() < 2 {
                return Err(HiqError::Input("sibling group of size < 2".into()));
            }
            for &p in g {
                if p >= self.n_classes || seen[p] {
                    return Err(HiqError::Input("groups overlap or exceed range".into()));
                }
                seen[p] = true;
            }
        }
        for &p in &self.singletons {
            if p >= self.n_classes || seen[p] {
                return Err(HiqError::Input("singleton overlaps a group".into()));
            }
            seen[p] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(HiqError::Input("partition does not cover all classes".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_partition_has_no_groups() {
        let p = SiblingPartition::all_singletons(4);
        assert!(p.is_root());
        assert_eq!(p.group_count(), 0);
        assert_eq!(p.singletons(), &[0, 1, 2, 3]);
        assert!(p.check().is_ok());
        assert!(p.sibling_pairs().is_empty());
    }

    #[test]
    fn from_groups_splits_singletons() {
        let p = SiblingPartition::from_groups(vec![vec![2, 0], vec![1], vec![3, 4]], 5).unwrap();
        assert_eq!(p.group_count(), 2);
        assert_eq!(p.group(0), &[0, 2]);
        assert_eq!(p.group(1), &[3, 4]);
        assert_eq!(p.singletons(), &[1]);
        assert_eq!(p.group_of(1), None);
        assert_eq!(p.group_of(4), Some(1));
        assert!(!p.is_root());
    }

    #[test]
    fn rejects_overlap_and_gaps() {
        assert!(SiblingPartition::from_groups(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(SiblingPartition::from_groups(vec![vec![0, 1]], 3).is_err());
        assert!(SiblingPartition::from_groups(vec![vec![0, 7]], 3).is_err());
    }

    #[test]
    fn sibling_pairs_are_ordered_pairs() {
        let p = SiblingPartition::from_groups(vec![vec![0, 1, 2], vec![3]], 4).unwrap();
        let pairs = p.sibling_pairs();
        assert_eq!(pairs.len(), 6);
        assert!(pairs.contains(&(0, 1)) && pairs.contains(&(1, 0)));
        assert!(pairs.contains(&(2, 1)) && pairs.contains(&(1, 2)));
    }
}
