//! Greedy two-phase placement of workers into clusters for dynamic clustering.
//!
//! Phase I places the larger of {non-stragglers, stragglers} first, then the
//! other group. Within a group, clusters take turns following a placement
//! order (fewest eligible candidates first, ties to the smaller index). On
//! its turn an open cluster takes the first eligible unplaced candidate of
//! the group: lowest worker index for homogeneous workers, highest rate for
//! heterogeneous ones. Full clusters are skipped. A group's placement stops
//! when it runs out of workers, or when an open cluster finds no eligible
//! candidate on its turn (a placement conflict).
//!
//! Workers left over after both groups are offered once more to the open
//! clusters; whoever still cannot be placed is a conflicted worker. Phase II
//! resolves each conflict by swapping the conflicted worker with a placed
//! worker that is eligible for the open cluster.

use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignmentMatrix;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderKind {
    NonStraggler,
    Straggler,
}

/// How a cluster picks among eligible candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Lowest worker index first.
    Homogeneous,
    /// Highest known rate first, ties to the lower index.
    Heterogeneous,
}

/// Clusters in the order they take turns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementOrder {
    pub kind: OrderKind,
    pub turns: Vec<usize>,
}

impl PlacementOrder {
    /// Rank of each cluster in the turn sequence (0 = first).
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.turns.len()];
        for (rank, &p) in self.turns.iter().enumerate() {
            ranks[p] = rank;
        }
        ranks
    }
}

/// Per cluster, the placed workers; position `i` holds codeword slot `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub clusters: Vec<Vec<usize>>,
}

impl Placement {
    pub fn empty(clusters: usize) -> Self {
        Self { clusters: vec![Vec::new(); clusters] }
    }

    pub fn cluster_of(&self, worker: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&worker))
    }

    pub fn straggler_counts(&self, straggling: &[bool]) -> Vec<usize> {
        self.clusters.iter().map(|c| c.iter().filter(|&&k| straggling[k]).count()).collect()
    }

    /// Every worker exactly once, only in eligible clusters, `ℓ` per cluster.
    pub fn validate(&self, a: &ClusterAssignmentMatrix) -> Result<()> {
        let ell = a.cluster_size();
        if self.clusters.len() != a.clusters {
            return Err(invalid(format!("placement has {} clusters, expected {}", self.clusters.len(), a.clusters)));
        }
        let mut seen = vec![false; a.workers];
        for (p, members) in self.clusters.iter().enumerate() {
            if members.len() != ell {
                return Err(invalid(format!("cluster {p} holds {} workers, expected {ell}", members.len())));
            }
            for &k in members {
                if k >= a.workers || seen[k] {
                    return Err(invalid(format!("worker {k} placed twice or out of range")));
                }
                seen[k] = true;
                if !a.is_eligible(k, p) {
                    return Err(invalid(format!("worker {k} is not eligible for cluster {p}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub worker: usize,
    /// An open cluster the worker cannot join.
    pub cluster: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Swap {
    /// The conflicted worker, moved into `from`.
    pub worker: usize,
    /// The placed worker, moved from `from` into the open cluster `to`.
    pub partner: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseOneOutcome {
    pub placement: Placement,
    pub first: OrderKind,
    pub non_straggler_order: PlacementOrder,
    pub straggler_order: PlacementOrder,
    pub conflicts: Vec<Conflict>,
}

/// Everything the scheduler did for one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub phase_one: PhaseOneOutcome,
    pub swaps: Vec<Swap>,
    pub placement: Placement,
}

/// Attempt cap for one group's placement turns.
pub fn attempt_cap(a: &ClusterAssignmentMatrix) -> usize {
    2 * a.workers * a.clusters
}

/// Clusters sorted by number of eligible candidates, ties by index.
pub fn determine_order(a: &ClusterAssignmentMatrix, candidates: &[usize], kind: OrderKind) -> PlacementOrder {
    let counts: Vec<usize> =
        (0..a.clusters).map(|p| candidates.iter().filter(|&&k| a.is_eligible(k, p)).count()).collect();
    let mut turns: Vec<usize> = (0..a.clusters).collect();
    turns.sort_by_key(|&p| (counts[p], p));
    PlacementOrder { kind, turns }
}

struct Selector<'a> {
    a: &'a ClusterAssignmentMatrix,
    rates: &'a [f64],
    mode: SelectionMode,
}

impl Selector<'_> {
    /// Preferred eligible worker among `pool` for cluster `p`.
    fn pick(&self, pool: &[usize], p: usize, straggling: Option<&[bool]>) -> Option<usize> {
        let eligible = pool.iter().copied().filter(|&k| self.a.is_eligible(k, p));
        let key = |k: usize| {
            let tier = straggling.is_some_and(|s| s[k]);
            let rate = match self.mode {
                SelectionMode::Homogeneous => 0.0,
                SelectionMode::Heterogeneous => -self.rates[k],
            };
            (tier, rate, k)
        };
        eligible.min_by(|&x, &y| {
            let (tx, rx, ix) = key(x);
            let (ty, ry, iy) = key(y);
            tx.cmp(&ty).then(rx.total_cmp(&ry)).then(ix.cmp(&iy))
        })
    }
}

/// Round-robin placement of one group. Returns the workers left unplaced.
fn place_group(
    sel: &Selector<'_>,
    placement: &mut Placement,
    group: &[usize],
    order: &PlacementOrder,
    cap: usize,
) -> Vec<usize> {
    let ell = sel.a.cluster_size();
    let mut pool = group.to_vec();
    let mut turn = 0;
    while !pool.is_empty() && turn < cap {
        let p = order.turns[turn % order.turns.len()];
        turn += 1;
        if placement.clusters[p].len() >= ell {
            continue;
        }
        match sel.pick(&pool, p, None) {
            Some(k) => {
                placement.clusters[p].push(k);
                pool.retain(|&w| w != k);
            }
            None => break,
        }
    }
    pool
}

/// Phase I: ordered greedy placement of both groups, then one sweep of the
/// leftovers over the open clusters.
pub fn phase1_place(
    a: &ClusterAssignmentMatrix,
    straggling: &[bool],
    rates: &[f64],
    mode: SelectionMode,
    cap: usize,
) -> Result<PhaseOneOutcome> {
    if straggling.len() != a.workers || rates.len() != a.workers {
        return Err(Error::DimensionMismatch { expected: a.workers, got: straggling.len().min(rates.len()) });
    }
    let ell = a.cluster_size();
    let fast: Vec<usize> = (0..a.workers).filter(|&k| !straggling[k]).collect();
    let slow: Vec<usize> = (0..a.workers).filter(|&k| straggling[k]).collect();
    let non_straggler_order = determine_order(a, &fast, OrderKind::NonStraggler);
    let straggler_order = determine_order(a, &slow, OrderKind::Straggler);
    let first = if fast.len() >= slow.len() { OrderKind::NonStraggler } else { OrderKind::Straggler };
    let (groups, orders) = match first {
        OrderKind::NonStraggler => ([&fast, &slow], [&non_straggler_order, &straggler_order]),
        OrderKind::Straggler => ([&slow, &fast], [&straggler_order, &non_straggler_order]),
    };

    let sel = Selector { a, rates, mode };
    let mut placement = Placement::empty(a.clusters);
    let mut leftover = Vec::new();
    for (group, order) in groups.into_iter().zip(orders) {
        leftover.extend(place_group(&sel, &mut placement, group, order, cap));
    }

    if !leftover.is_empty() {
        // Non-stragglers keep priority over stragglers in the sweep.
        let sweep_order = determine_order(a, &leftover, first);
        let mut progress = true;
        while progress && !leftover.is_empty() {
            progress = false;
            for &p in &sweep_order.turns {
                if placement.clusters[p].len() >= ell {
                    continue;
                }
                if let Some(k) = sel.pick(&leftover, p, Some(straggling)) {
                    placement.clusters[p].push(k);
                    leftover.retain(|&w| w != k);
                    progress = true;
                }
            }
        }
    }

    leftover.sort_unstable();
    let open: Vec<usize> = (0..a.clusters).filter(|&p| placement.clusters[p].len() < ell).collect();
    let conflicts = leftover
        .iter()
        .map(|&worker| Conflict { worker, cluster: open.first().copied().unwrap_or(0) })
        .collect();
    Ok(PhaseOneOutcome { placement, first, non_straggler_order, straggler_order, conflicts })
}

/// Phase II: resolve conflicted workers one by one (ascending index) by
/// swapping with the first placed worker, scanning the conflicted worker's
/// clusters ascending and each cluster in placement order, that may move
/// into an open cluster. Workers already resolved are never moved again.
pub fn phase2_resolve(
    a: &ClusterAssignmentMatrix,
    placement: &Placement,
    conflicted: &[usize],
) -> Result<(Placement, Vec<Swap>)> {
    let ell = a.cluster_size();
    let mut placement = placement.clone();
    let mut pending: Vec<usize> = conflicted.to_vec();
    pending.sort_unstable();
    let mut locked: Vec<usize> = Vec::new();
    let mut swaps = Vec::new();

    for k in pending {
        let open: Vec<usize> = (0..a.clusters).filter(|&p| placement.clusters[p].len() < ell).collect();
        if let Some(&p) = open.iter().find(|&&p| a.is_eligible(k, p)) {
            placement.clusters[p].push(k);
            locked.push(k);
            continue;
        }
        let found = open.iter().find_map(|&p| {
            a.clusters_of(k).into_iter().find_map(|from| {
                placement.clusters[from]
                    .iter()
                    .position(|&w| !locked.contains(&w) && a.is_eligible(w, p))
                    .map(|pos| (p, from, pos))
            })
        });
        let Some((to, from, pos)) = found else {
            return Err(Error::NoResolution { worker: k, cluster: open.first().copied().unwrap_or(0) });
        };
        let partner = std::mem::replace(&mut placement.clusters[from][pos], k);
        placement.clusters[to].push(partner);
        locked.push(k);
        locked.push(partner);
        swaps.push(Swap { worker: k, partner, from, to });
    }
    Ok((placement, swaps))
}

/// Order determination, Phase I and Phase II for one iteration.
pub fn assign_clusters(
    a: &ClusterAssignmentMatrix,
    straggling: &[bool],
    rates: &[f64],
    mode: SelectionMode,
) -> Result<Schedule> {
    let phase_one = phase1_place(a, straggling, rates, mode, attempt_cap(a))?;
    let conflicted: Vec<usize> = phase_one.conflicts.iter().map(|c| c.worker).collect();
    let (placement, swaps) = phase2_resolve(a, &phase_one.placement, &conflicted)?;
    debug_assert!(placement.validate(a).is_ok());
    Ok(Schedule { phase_one, swaps, placement })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{dynamic_assignment_matrix, static_assignment};
    use crate::seed;
    use rand::Rng;

    fn example() -> ClusterAssignmentMatrix {
        ClusterAssignmentMatrix::from_shifts(12, 4, vec![vec![0, 1], vec![3, 2], vec![0, 3]]).unwrap()
    }

    /// `S` with 1 = non-straggler, to straggler flags.
    fn flags(s: &[u8]) -> Vec<bool> {
        s.iter().map(|&v| v == 0).collect()
    }

    const EXAMPLE_S: [u8; 12] = [1, 1, 0, 1, 0, 0, 0, 0, 1, 1, 1, 1];

    #[test]
    fn worked_example_orders() {
        let a = example();
        let st = flags(&EXAMPLE_S);
        let fast: Vec<usize> = (0..12).filter(|&k| !st[k]).collect();
        let slow: Vec<usize> = (0..12).filter(|&k| st[k]).collect();
        assert_eq!(determine_order(&a, &fast, OrderKind::NonStraggler).turns, vec![2, 3, 0, 1]);
        assert_eq!(determine_order(&a, &slow, OrderKind::Straggler).turns, vec![0, 1, 2, 3]);
    }

    #[test]
    fn equal_counts_give_identity_order() {
        let a = static_assignment(12, 4).unwrap();
        let all: Vec<usize> = (0..12).collect();
        assert_eq!(determine_order(&a, &all, OrderKind::NonStraggler).turns, vec![0, 1, 2, 3]);
        assert_eq!(determine_order(&a, &all, OrderKind::NonStraggler).ranks(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn worked_example_phase_one_leaves_w12() {
        let a = example();
        let st = flags(&EXAMPLE_S);
        let out = phase1_place(&a, &st, &[1.0; 12], SelectionMode::Homogeneous, attempt_cap(&a)).unwrap();
        assert_eq!(out.first, OrderKind::NonStraggler);
        assert_eq!(out.conflicts, vec![Conflict { worker: 11, cluster: 0 }]);
        assert_eq!(out.placement.clusters[0].len(), 2);
        assert!(out.placement.clusters[2].iter().all(|&k| !a.is_eligible(k, 0)));
    }

    #[test]
    fn worked_example_swap_and_counts() {
        let a = example();
        let st = flags(&EXAMPLE_S);
        let sched = assign_clusters(&a, &st, &[1.0; 12], SelectionMode::Homogeneous).unwrap();
        assert_eq!(sched.swaps, vec![Swap { worker: 11, partner: 3, from: 3, to: 0 }]);
        assert_eq!(sched.placement.straggler_counts(&st), vec![1, 2, 1, 1]);
        sched.placement.validate(&a).unwrap();
    }

    #[test]
    fn no_conflicts_leaves_placement_unchanged() {
        let a = example();
        let bad = Placement { clusters: vec![vec![0, 3, 5], vec![1, 6, 7], vec![2, 4, 11], vec![8, 9, 10]] };
        assert!(bad.validate(&a).is_err());
        let good = assign_clusters(&a, &[false; 12], &[1.0; 12], SelectionMode::Homogeneous).unwrap().placement;
        let (same, swaps) = phase2_resolve(&a, &good, &[]).unwrap();
        assert_eq!(same, good);
        assert!(swaps.is_empty());
    }

    #[test]
    fn static_matrix_with_no_stragglers_reproduces_static_clusters() {
        let a = static_assignment(12, 4).unwrap();
        let sched = assign_clusters(&a, &[false; 12], &[1.0; 12], SelectionMode::Homogeneous).unwrap();
        let mut got = sched.placement.clusters.clone();
        got.iter_mut().for_each(|c| c.sort_unstable());
        assert_eq!(got, a.columns);
        assert!(sched.phase_one.conflicts.is_empty());
    }

    #[test]
    fn no_stragglers_fills_every_cluster() {
        for n in 1..=4 {
            let a = dynamic_assignment_matrix(12, 4, n, 17).unwrap();
            let sched = assign_clusters(&a, &[false; 12], &[1.0; 12], SelectionMode::Homogeneous).unwrap();
            sched.placement.validate(&a).unwrap();
        }
    }

    /// Smallest achievable max-stragglers-per-cluster over all valid placements.
    fn brute_force_min_max(a: &ClusterAssignmentMatrix, st: &[bool]) -> usize {
        fn go(a: &ClusterAssignmentMatrix, st: &[bool], k: usize, sizes: &mut [usize], slow: &mut [usize], best: &mut usize) {
            let cur = *slow.iter().max().unwrap();
            if cur >= *best {
                return;
            }
            if k == a.workers {
                *best = cur;
                return;
            }
            for p in a.clusters_of(k) {
                if sizes[p] < a.cluster_size() {
                    sizes[p] += 1;
                    slow[p] += usize::from(st[k]);
                    go(a, st, k + 1, sizes, slow, best);
                    sizes[p] -= 1;
                    slow[p] -= usize::from(st[k]);
                }
            }
        }
        let mut best = usize::MAX;
        go(a, st, 0, &mut vec![0; a.clusters], &mut vec![0; a.clusters], &mut best);
        best
    }

    #[test]
    fn full_eligibility_spreads_stragglers_one_per_cluster() {
        let a = dynamic_assignment_matrix(12, 4, 4, 0).unwrap();
        let mut rng = seed::stream(3, "test", &[]);
        for _ in 0..200 {
            let picks = rand::seq::index::sample(&mut rng, 12, 4);
            let mut st = vec![false; 12];
            picks.iter().for_each(|k| st[k] = true);
            let sched = assign_clusters(&a, &st, &[1.0; 12], SelectionMode::Homogeneous).unwrap();
            assert_eq!(sched.placement.straggler_counts(&st), vec![1, 1, 1, 1]);
            assert_eq!(brute_force_min_max(&a, &st), 1);
        }
    }

    #[test]
    fn full_eligibility_balance_within_one() {
        let a = dynamic_assignment_matrix(12, 4, 4, 2).unwrap();
        let mut rng = seed::stream(4, "test", &[]);
        for _ in 0..500 {
            let st: Vec<bool> = (0..12).map(|_| rng.random_bool(0.5)).collect();
            let counts = assign_clusters(&a, &st, &[1.0; 12], SelectionMode::Homogeneous)
                .unwrap()
                .placement
                .straggler_counts(&st);
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{st:?} -> {counts:?}");
            assert_eq!(*hi, brute_force_min_max(&a, &st));
        }
    }

    #[test]
    fn heterogeneous_mode_prefers_faster_workers() {
        let a = dynamic_assignment_matrix(8, 2, 2, 0).unwrap();
        let rates = [0.5, 4.0, 1.0, 3.0, 2.0, 0.7, 2.5, 3.5];
        let sched = assign_clusters(&a, &[false; 8], &rates, SelectionMode::Heterogeneous).unwrap();
        // both clusters open their turn with the fastest remaining workers
        assert_eq!(sched.placement.clusters[0][0], 1);
        assert_eq!(sched.placement.clusters[1][0], 7);
    }

    #[test]
    fn scheduler_is_pure() {
        let a = dynamic_assignment_matrix(20, 5, 3, 5).unwrap();
        let mut rng = seed::stream(6, "test", &[]);
        let st: Vec<bool> = (0..20).map(|_| rng.random_bool(0.5)).collect();
        let x = assign_clusters(&a, &st, &[1.0; 20], SelectionMode::Homogeneous).unwrap();
        let y = assign_clusters(&a, &st, &[1.0; 20], SelectionMode::Homogeneous).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn static_matrix_always_places() {
        let a = static_assignment(12, 4).unwrap();
        let mut rng = seed::stream(8, "test", &[]);
        for _ in 0..100 {
            let st: Vec<bool> = (0..12).map(|_| rng.random_bool(0.5)).collect();
            let sched = assign_clusters(&a, &st, &[1.0; 12], SelectionMode::Homogeneous).unwrap();
            sched.placement.validate(&a).unwrap();
        }
    }
}
