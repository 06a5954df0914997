//! Shifted-exponential computation times and order-statistic completion times.
//!
//! Time for worker `k` to finish `r` partial gradients has CDF
//! `1 - exp(-μ_k (t/r - α_k))` for `t ≥ r α_k`, i.e. `t = r (α_k + E / μ_k)`
//! with `E ~ Exp(1)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid, Result};

pub fn sample_latency<R: Rng + ?Sized>(rate: f64, alpha: f64, load: usize, rng: &mut R) -> f64 {
    debug_assert!(rate > 0.0 && alpha > 0.0 && load >= 1);
    let e: f64 = Exp1.sample(rng);
    load as f64 * (alpha + e / rate)
}

/// One draw per worker, in worker order.
pub fn sample_iteration<R: Rng + ?Sized>(rates: &[f64], alpha: f64, load: usize, rng: &mut R) -> Vec<f64> {
    rates.iter().map(|&mu| sample_latency(mu, alpha, load, rng)).collect()
}

/// `k`-th smallest value, 1-based.
pub fn kth_smallest(times: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > times.len() {
        return Err(invalid(format!("order statistic {k} out of range for {} values", times.len())));
    }
    let mut v = times.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// A cluster of `ℓ` workers finishes with its `(ℓ - r + 1)`-th result.
pub fn cluster_completion(times: &[f64], ell: usize, load: usize) -> Result<f64> {
    if times.len() != ell {
        return Err(invalid(format!("expected {ell} worker times, got {}", times.len())));
    }
    if load == 0 || load > ell {
        return Err(invalid(format!("computation load {load} must lie in 1..={ell}")));
    }
    kth_smallest(times, ell - load + 1)
}

/// The iteration ends when the slowest cluster does.
pub fn iteration_completion(cluster_times: &[f64]) -> Result<f64> {
    cluster_times
        .iter()
        .copied()
        .max_by(f64::total_cmp)
        .ok_or_else(|| invalid("no cluster completion times"))
}

/// Plain GC over all `K` workers: the `(K - r + 1)`-th result.
pub fn gc_completion(times: &[f64], load: usize) -> Result<f64> {
    cluster_completion(times, times.len(), load)
}

/// Earliest `P(ℓ - r + 1)` results regardless of placement.
pub fn lower_bound_completion(times: &[f64], clusters: usize, ell: usize, load: usize) -> Result<f64> {
    if times.len() != clusters * ell {
        return Err(invalid(format!("expected {} worker times, got {}", clusters * ell, times.len())));
    }
    if load == 0 || load > ell {
        return Err(invalid(format!("computation load {load} must lie in 1..={ell}")));
    }
    kth_smallest(times, clusters * (ell - load + 1))
}

/// Completion of a clustering: each entry of `clusters` lists its workers.
pub fn clustered_completion(times: &[f64], clusters: &[Vec<usize>], load: usize) -> Result<f64> {
    let per_cluster = clusters
        .iter()
        .map(|members| {
            let t: Vec<f64> = members.iter().map(|&k| times[k]).collect();
            cluster_completion(&t, members.len(), load)
        })
        .collect::<Result<Vec<_>>>()?;
    iteration_completion(&per_cluster)
}
