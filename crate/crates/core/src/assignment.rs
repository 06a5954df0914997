//! Worker-to-cluster eligibility matrices and the data each worker stores.
//!
//! Workers and clusters are 0-based. Workers are split into `ℓ` index groups
//! `{gP, …, gP + P - 1}`; a group with circular shift `s` contributes worker
//! `gP + ((p - s) mod P)` to column `p`. Every shift a group receives adds one
//! row band, so a group with `n` distinct shifts puts each of its workers in
//! `n` distinct clusters.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::code::Codebook;
use crate::error::{invalid, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignmentMatrix {
    pub workers: usize,
    pub clusters: usize,
    pub replication: usize,
    /// Shift amounts per index group, in row-band order.
    pub shifts: Vec<Vec<usize>>,
    /// Column `p` lists the workers eligible for cluster `p`, ascending.
    pub columns: Vec<Vec<usize>>,
}

impl ClusterAssignmentMatrix {
    pub fn from_shifts(workers: usize, clusters: usize, shifts: Vec<Vec<usize>>) -> Result<Self> {
        check_divides(workers, clusters)?;
        let groups = workers / clusters;
        if shifts.len() != groups {
            return Err(invalid(format!("expected shifts for {groups} groups, got {}", shifts.len())));
        }
        let replication = shifts[0].len();
        if replication == 0 || replication > clusters {
            return Err(invalid(format!("replication must lie in 1..={clusters}, got {replication}")));
        }
        for (g, s) in shifts.iter().enumerate() {
            let distinct: BTreeSet<_> = s.iter().collect();
            if s.len() != replication || distinct.len() != replication || s.iter().any(|&x| x >= clusters) {
                return Err(invalid(format!("group {g} needs {replication} distinct shifts below {clusters}, got {s:?}")));
            }
        }
        let mut columns = vec![Vec::with_capacity(groups * replication); clusters];
        for band in 0..replication {
            for (g, group_shifts) in shifts.iter().enumerate() {
                let shift = group_shifts[band];
                for (p, col) in columns.iter_mut().enumerate() {
                    col.push(g * clusters + (p + clusters - shift) % clusters);
                }
            }
        }
        columns.iter_mut().for_each(|c| c.sort_unstable());
        Ok(Self { workers, clusters, replication, shifts, columns })
    }

    /// Cluster size `ℓ = K / P`.
    pub fn cluster_size(&self) -> usize {
        self.workers / self.clusters
    }

    pub fn is_eligible(&self, worker: usize, cluster: usize) -> bool {
        self.columns[cluster].binary_search(&worker).is_ok()
    }

    /// Clusters worker `k` may join, ascending.
    pub fn clusters_of(&self, worker: usize) -> Vec<usize> {
        (0..self.clusters).filter(|&p| self.is_eligible(worker, p)).collect()
    }

    /// The `ℓn × P` matrix in its column-sorted form, row-major.
    pub fn rows(&self) -> Vec<Vec<usize>> {
        let height = self.columns[0].len();
        (0..height).map(|i| self.columns.iter().map(|c| c[i]).collect()).collect()
    }

    /// Static clustering contained in this matrix: every group at its first shift.
    pub fn base_clustering(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.clusters];
        for (g, s) in self.shifts.iter().enumerate() {
            for (p, col) in out.iter_mut().enumerate() {
                col.push(g * self.clusters + (p + self.clusters - s[0]) % self.clusters);
            }
        }
        out.iter_mut().for_each(|c| c.sort_unstable());
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_divides(workers: usize, clusters: usize) -> Result<()> {
    if workers == 0 || clusters == 0 || !workers.is_multiple_of(clusters) {
        return Err(invalid(format!("cluster count {clusters} must divide worker count {workers}")));
    }
    Ok(())
}

/// Fixed clustering: even groups unshifted, odd groups shifted by `P - 1`.
/// For `K = 12, P = 4` the first cluster is `{0, 5, 8}`.
pub fn static_assignment(workers: usize, clusters: usize) -> Result<ClusterAssignmentMatrix> {
    check_divides(workers, clusters)?;
    let shifts = (0..workers / clusters).map(|g| vec![if g % 2 == 0 { 0 } else { clusters - 1 }]).collect();
    ClusterAssignmentMatrix::from_shifts(workers, clusters, shifts)
}

/// Each group samples `n` distinct shifts uniformly without replacement.
pub fn dynamic_assignment_matrix(
    workers: usize,
    clusters: usize,
    replication: usize,
    seed: u64,
) -> Result<ClusterAssignmentMatrix> {
    check_divides(workers, clusters)?;
    if replication == 0 || replication > clusters {
        return Err(invalid(format!("replication must lie in 1..={clusters}, got {replication}")));
    }
    let mut rng = seed::stream(seed, "assignment-matrix", &[]);
    let shifts = (0..workers / clusters).map(|_| sample(&mut rng, clusters, replication).into_vec()).collect();
    ClusterAssignmentMatrix::from_shifts(workers, clusters, shifts)
}

/// Sufficient condition for Phase II swaps to always exist: `n > P(K-1) / (2K)`.
pub fn feasibility_check(workers: usize, clusters: usize, replication: usize) -> bool {
    2 * workers * replication > clusters * (workers - 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataAssignment {
    /// Mini-batch ids stored by each worker.
    pub batches: Vec<BTreeSet<usize>>,
    pub memory: usize,
}

/// Each worker stores the union of the supports of every codeword of every
/// cluster it is eligible for.
pub fn derive_data_assignment(a: &ClusterAssignmentMatrix, codebook: &Codebook) -> Result<DataAssignment> {
    if codebook.codes.len() != a.clusters {
        return Err(invalid(format!("codebook has {} clusters, matrix has {}", codebook.codes.len(), a.clusters)));
    }
    let batches: Vec<BTreeSet<usize>> = (0..a.workers)
        .map(|k| {
            a.clusters_of(k)
                .into_iter()
                .flat_map(|p| codebook.codes[p].codewords.iter().flat_map(|c| c.support.iter().copied()))
                .collect()
        })
        .collect();
    let memory = batches.iter().map(BTreeSet::len).max().unwrap_or(0);
    Ok(DataAssignment { batches, memory })
}
