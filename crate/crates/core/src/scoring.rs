//! Partitioning latent states and scoring partitions with purity-based
//! binary cross-entropy.

use serde::{Deserialize, Serialize};

use crate::dynamics::StateMatrix;

pub const DEFAULT_EPS: f64 = 1e-12;

/// Disjoint, exhaustive clusters over patients with their outcome purity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    /// Cluster id per patient, `0..k`, numbered by smallest member index.
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    pub positives: Vec<usize>,
    pub purities: Vec<f64>,
}

impl ClusterPartition {
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Cluster-induced probability of patient `i`.
    pub fn induced(&self, i: usize) -> f64 {
        self.purities[self.assignments[i]]
    }

    pub fn induced_probabilities(&self) -> Vec<f64> {
        (0..self.assignments.len()).map(|i| self.induced(i)).collect()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Relabels arbitrary group keys to `0..k` in order of first appearance.
fn canonical_ids(raw: impl Iterator<Item = usize>, n: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; n];
    let mut next = 0;
    raw.map(|r| {
        if map[r] == usize::MAX {
            map[r] = next;
            next += 1;
        }
        map[r]
    })
    .collect()
}

/// Single-linkage clustering cut at `tau = threshold_rel * reference_diameter`:
/// connected components of the graph with edges wherever the Euclidean
/// distance is at most `tau`.
pub fn cluster_states(
    states: &StateMatrix,
    threshold_rel: f64,
    reference_diameter: f64,
) -> Vec<usize> {
    let n = states.n();
    let tau = threshold_rel * reference_diameter;
    let tau2 = tau * tau;
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        let a = states.row(i);
        for j in (i + 1)..n {
            let b = states.row(j);
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            if d2 <= tau2 {
                ds.union(i, j);
            }
        }
    }
    canonical_ids((0..n).map(|i| ds.find(i)), n)
}

/// Purity `p_k` of each cluster with respect to the positive class.
pub fn cluster_purity(assignments: &[usize], outcome: &[u8]) -> ClusterPartition {
    assert_eq!(assignments.len(), outcome.len(), "assignments must cover all patients");
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    let mut positives = vec![0usize; k];
    for (&c, &y) in assignments.iter().zip(outcome) {
        sizes[c] += 1;
        positives[c] += y as usize;
    }
    assert!(sizes.iter().all(|&s| s > 0), "empty cluster id");
    let purities = sizes
        .iter()
        .zip(&positives)
        .map(|(&s, &p)| p as f64 / s as f64)
        .collect();
    ClusterPartition {
        assignments: assignments.to_vec(),
        sizes,
        positives,
        purities,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bce {
    /// Unnormalised loss summed over patients.
    pub total: f64,
    /// `total / n`, comparable across cohort sizes.
    pub per_patient: f64,
}

/// Purity BCE, evaluated per cluster: each cluster contributes
/// `pos ln q + neg ln (1 - q)` with `q` the clamped purity.
pub fn bce_loss(partition: &ClusterPartition, eps: f64) -> Bce {
    let mut total = 0.0;
    let mut n = 0usize;
    for ((&size, &pos), &p) in partition
        .sizes
        .iter()
        .zip(&partition.positives)
        .zip(&partition.purities)
    {
        let q = p.clamp(eps, 1.0 - eps);
        let neg = size - pos;
        if pos > 0 {
            total -= pos as f64 * q.ln();
        }
        if neg > 0 {
            total -= neg as f64 * (1.0 - q).ln();
        }
        n += size;
    }
    Bce {
        total,
        per_patient: if n > 0 { total / n as f64 } else { 0.0 },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub partition: ClusterPartition,
    pub loss: Bce,
}

/// Turns a latent configuration into a partition and a loss.
pub trait Scorer: Sync {
    fn score(&self, states: &StateMatrix, reference_diameter: f64, outcome: &[u8]) -> Scored;
}

/// Single-linkage clustering at a relative threshold, scored by purity BCE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurityBce {
    pub threshold_rel: f64,
    pub eps: f64,
}

impl PurityBce {
    pub fn new(threshold_rel: f64) -> Self {
        PurityBce {
            threshold_rel,
            eps: DEFAULT_EPS,
        }
    }
}

impl Scorer for PurityBce {
    fn score(&self, states: &StateMatrix, reference_diameter: f64, outcome: &[u8]) -> Scored {
        let assignments = cluster_states(states, self.threshold_rel, reference_diameter);
        let partition = cluster_purity(&assignments, outcome);
        let loss = bce_loss(&partition, self.eps);
        Scored { partition, loss }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn states(rows: &[[f64; 2]]) -> StateMatrix {
        StateMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect())
    }

    #[test]
    fn identical_states_form_one_cluster() {
        let s = states(&[[0.3, 0.3]; 5]);
        assert_eq!(cluster_states(&s, 0.05, 1.0), vec![0; 5]);
    }

    #[test]
    fn separated_groups() {
        let tau = 0.1;
        let s = states(&[
            [10.0 * tau, 0.0],
            [-10.0 * tau, 0.0],
            [10.0 * tau, 0.01],
            [-10.0 * tau, 0.02],
        ]);
        assert_eq!(cluster_states(&s, 0.1, 1.0), vec![0, 1, 0, 1]);
    }

    #[test]
    fn threshold_above_diameter() {
        let s = states(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(cluster_states(&s, 0.9, 2.0), vec![0, 0, 0]);
    }

    #[test]
    fn single_linkage_chains() {
        let s = states(&[[0.0, 0.0], [0.09, 0.0], [0.18, 0.0], [5.0, 0.0]]);
        assert_eq!(cluster_states(&s, 0.1, 1.0), vec![0, 0, 0, 1]);
    }

    #[test]
    fn purity_counts() {
        let p = cluster_purity(&[0, 0, 0], &[1, 1, 0]);
        assert!((p.purities[0] - 2.0 / 3.0).abs() < 1e-15);
        let p = cluster_purity(&[0, 0], &[0, 0]);
        assert_eq!(p.purities, vec![0.0]);
        let p = cluster_purity(&[0, 0, 1, 1], &[1, 1, 0, 1]);
        assert_eq!(p.purities, vec![1.0, 0.5]);
        assert_eq!(p.induced_probabilities(), vec![1.0, 1.0, 0.5, 0.5]);
    }

    #[test]
    fn bce_examples() {
        let pure = cluster_purity(&[0, 0], &[1, 1]);
        assert!(bce_loss(&pure, DEFAULT_EPS).total.abs() < 1e-9);

        let mixed = cluster_purity(&[0, 0, 0, 0], &[1, 0, 1, 1]);
        let expect = -(3.0 * 0.75f64.ln() + 0.25f64.ln());
        let got = bce_loss(&mixed, DEFAULT_EPS);
        assert!((got.total - 2.2493).abs() < 1e-4);
        assert!((got.total - expect).abs() < 1e-12);
        assert!((got.per_patient - expect / 4.0).abs() < 1e-12);

        let split = cluster_purity(&[0, 0, 1, 1], &[1, 1, 0, 0]);
        let merged = cluster_purity(&[0, 0, 0, 0], &[1, 1, 0, 0]);
        assert!(bce_loss(&split, DEFAULT_EPS).total < bce_loss(&merged, DEFAULT_EPS).total);
    }

    #[test]
    #[should_panic(expected = "empty cluster id")]
    fn gap_in_cluster_ids_panics() {
        cluster_purity(&[0, 2], &[1, 0]);
    }
}
