use serde::{Deserialize, Serialize};

use super::SpectralError;

/// Hard group labels over N items. Labels are zero-based (`0..k`); exported
/// files use one-based group ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl GroupAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self, SpectralError> {
        if k == 0 {
            return Err(SpectralError::InvalidK { k, n: labels.len() });
        }
        if labels.is_empty() {
            return Err(SpectralError::InvalidAssignment("no labels".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(SpectralError::InvalidAssignment(format!(
                "label {bad} outside 0..{k}"
            )));
        }
        Ok(GroupAssignment { labels, k })
    }

    /// Like [`new`](Self::new) but also requires every group to be nonempty.
    pub fn complete(labels: Vec<usize>, k: usize) -> Result<Self, SpectralError> {
        let a = Self::new(labels, k)?;
        if let Some(empty) = (0..k).find(|&g| !a.labels.contains(&g)) {
            return Err(SpectralError::InvalidAssignment(format!("group {empty} is empty")));
        }
        Ok(a)
    }

    /// Everything in one group.
    pub fn single(n: usize) -> Self {
        GroupAssignment {
            labels: vec![0; n],
            k: 1,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices of `group`, ascending.
    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == group).collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Relabels groups in order of first appearance.
    pub fn canonical(&self) -> GroupAssignment {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        GroupAssignment { labels, k: self.k }
    }

    /// True when both describe the same partition up to label permutation.
    pub fn same_partition(&self, other: &GroupAssignment) -> bool {
        self.labels.len() == other.labels.len() && self.canonical().labels == other.canonical().labels
    }
}
