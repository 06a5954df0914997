//! Per-cluster gradient codes.
//!
//! A cluster owns `ℓ` mini-batches and `ℓ` codewords. Codeword `i` combines
//! the `r` partial gradients on the cyclic window starting at slot `i`. Any
//! `ℓ - r + 1` codewords of a cluster must be enough to rebuild the cluster's
//! normalized sum `(1/ℓ) Σ g_k`.
//!
//! Coefficients come from a seeded null-space construction: draw a random
//! `(r-1) × ℓ` matrix `H` with `H·1 = 0` and place every codeword row in
//! `null(H)`. The rows then live in an `(ℓ - r + 1)`-dimensional space that
//! contains the all-ones vector, so any `ℓ - r + 1` linearly independent rows
//! span it. Independence holds almost surely and is verified exhaustively
//! at construction time.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed;

const MAX_ATTEMPTS: u64 = 64;
const SPAN_TOL: f64 = 1e-10;
const MIN_SINGULAR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codeword {
    pub cluster: usize,
    pub slot: usize,
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
}

impl Codeword {
    /// `Σ_j coefficients[j] · gradients[support[j]]`, with `gradients` indexed by batch id.
    pub fn evaluate(&self, gradients: &[Vec<f64>]) -> Result<Vec<f64>> {
        let first = gradients.get(self.support[0]).ok_or(Error::MissingBatch(self.support[0]))?;
        let mut out = vec![0.0; first.len()];
        for (&batch, &c) in self.support.iter().zip(&self.coefficients) {
            let g = gradients.get(batch).ok_or(Error::MissingBatch(batch))?;
            if g.len() != out.len() {
                return Err(Error::DimensionMismatch { expected: out.len(), got: g.len() });
            }
            out.iter_mut().zip(g).for_each(|(o, v)| *o += c * v);
        }
        Ok(out)
    }
}

pub fn evaluate_codeword(cw: &Codeword, gradients: &[Vec<f64>]) -> Result<Vec<f64>> {
    cw.evaluate(gradients)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterCode {
    pub cluster: usize,
    pub load: usize,
    pub batch_set: Vec<usize>,
    pub codewords: Vec<Codeword>,
}

impl ClusterCode {
    pub fn size(&self) -> usize {
        self.batch_set.len()
    }

    /// Minimum number of distinct codewords needed to decode, `ℓ - r + 1`.
    pub fn threshold(&self) -> usize {
        self.size() - self.load + 1
    }

    /// Dense `ℓ × ℓ` coefficient matrix over the cluster's local batch order.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let ell = self.size();
        let mut m = DMatrix::zeros(ell, ell);
        for cw in &self.codewords {
            for (&batch, &c) in cw.support.iter().zip(&cw.coefficients) {
                let local = self.batch_set.iter().position(|&b| b == batch).expect("support inside batch set");
                m[(cw.slot, local)] = c;
            }
        }
        m
    }

    /// Rebuild `(1/ℓ) Σ_{k ∈ batch_set} g_k` from `(slot, codeword value)` pairs,
    /// in the order they arrived.
    pub fn decode(&self, received: &[(usize, Vec<f64>)]) -> Result<Vec<f64>> {
        let mut slots: Vec<usize> = Vec::new();
        let mut values: Vec<&Vec<f64>> = Vec::new();
        for (slot, value) in received {
            if *slot >= self.size() {
                return Err(invalid(format!("slot {slot} out of range for cluster of size {}", self.size())));
            }
            if !slots.contains(slot) {
                slots.push(*slot);
                values.push(value);
            }
        }
        if slots.len() < self.threshold() {
            return Err(Error::NotDecodable { received: slots.len(), needed: self.threshold() });
        }
        // Any threshold-size subset decodes; use the earliest ones received.
        slots.truncate(self.threshold());
        values.truncate(self.threshold());
        let a = combination_weights(&self.coefficient_matrix(), &slots)
            .ok_or_else(|| Error::Internal(format!("cluster {} code is singular on slots {slots:?}", self.cluster)))?;
        let d = values[0].len();
        let mut out = vec![0.0; d];
        for (w, v) in a.iter().zip(values) {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            out.iter_mut().zip(v).for_each(|(o, x)| *o += w * x);
        }
        Ok(out)
    }

    /// Checks every `(ℓ - r + 1)`-subset of codewords.
    pub fn is_decodable(&self) -> bool {
        let b = self.coefficient_matrix();
        (0..self.size()).combinations(self.threshold()).all(|s| combination_weights(&b, &s).is_some())
    }
}

pub fn decode_cluster(code: &ClusterCode, received: &[(usize, Vec<f64>)]) -> Result<Vec<f64>> {
    code.decode(received)
}

/// Weights `a` with `Σ_w a_w B[w,:] = (1/ℓ)·1`, or `None` when the rows are
/// rank-deficient or do not span the target.
fn combination_weights(b: &DMatrix<f64>, slots: &[usize]) -> Option<DVector<f64>> {
    let ell = b.ncols();
    let rows = b.select_rows(slots);
    let system = rows.transpose();
    let target = DVector::from_element(ell, 1.0 / ell as f64);
    let svd = system.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= MIN_SINGULAR * smax.max(1.0) {
        return None;
    }
    let a = svd.solve(&target, 0.0).ok()?;
    let residual = (&system * &a - &target).norm();
    (residual <= SPAN_TOL * (1.0 + a.norm())).then_some(a)
}

fn candidate_rows(ell: usize, load: usize, seed: u64) -> Option<DMatrix<f64>> {
    let s = load - 1;
    let mut rng = seed::stream(seed, "code", &[]);
    let mut h = DMatrix::<f64>::zeros(s, ell);
    for i in 0..s {
        let mut sum = 0.0;
        for j in 0..ell - 1 {
            let v: f64 = StandardNormal.sample(&mut rng);
            h[(i, j)] = v;
            sum += v;
        }
        h[(i, ell - 1)] = -sum;
    }
    let mut b = DMatrix::zeros(ell, ell);
    for i in 0..ell {
        b[(i, i)] = 1.0;
        if s == 0 {
            continue;
        }
        let rest: Vec<usize> = (1..load).map(|j| (i + j) % ell).collect();
        let lhs = h.select_columns(&rest);
        let rhs = -h.column(i);
        let x = lhs.lu().solve(&rhs)?;
        for (j, &col) in rest.iter().enumerate() {
            b[(i, col)] = x[j];
        }
    }
    Some(b)
}

/// Build the code for cluster `p` over `batch_set` with computation load `r`.
pub fn build_cluster_code(p: usize, batch_set: &[usize], r: usize) -> Result<ClusterCode> {
    let ell = batch_set.len();
    if r == 0 || ell == 0 {
        return Err(invalid("cluster size and computation load must be positive"));
    }
    if r > ell {
        return Err(invalid(format!("computation load {r} exceeds cluster size {ell}")));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let seed = seed::derive(0, "cluster-code", &[p as u64, ell as u64, r as u64, attempt]);
        let Some(b) = candidate_rows(ell, r, seed) else { continue };
        let codewords = (0..ell)
            .map(|slot| {
                let cols: Vec<usize> = (0..r).map(|j| (slot + j) % ell).collect();
                Codeword {
                    cluster: p,
                    slot,
                    support: cols.iter().map(|&c| batch_set[c]).collect(),
                    coefficients: cols.iter().map(|&c| b[(slot, c)]).collect(),
                }
            })
            .collect();
        let code = ClusterCode { cluster: p, load: r, batch_set: batch_set.to_vec(), codewords };
        if code.is_decodable() {
            return Ok(code);
        }
        log::debug!("cluster {p} code attempt {attempt} failed verification, resampling");
    }
    Err(Error::Internal(format!("no decodable code found for ℓ={ell}, r={r} after {MAX_ATTEMPTS} attempts")))
}

/// Codes for all `P` clusters; cluster `p` owns batches `pℓ .. (p+1)ℓ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub workers: usize,
    pub clusters: usize,
    pub load: usize,
    pub codes: Vec<ClusterCode>,
}

impl Codebook {
    pub fn build(workers: usize, clusters: usize, load: usize) -> Result<Self> {
        if clusters == 0 || !workers.is_multiple_of(clusters) {
            return Err(invalid(format!("cluster count {clusters} must divide worker count {workers}")));
        }
        let ell = workers / clusters;
        let codes = (0..clusters)
            .map(|p| {
                let batches: Vec<usize> = (p * ell..(p + 1) * ell).collect();
                build_cluster_code(p, &batches, load)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { workers, clusters, load, codes })
    }

    pub fn cluster_size(&self) -> usize {
        self.workers / self.clusters
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
