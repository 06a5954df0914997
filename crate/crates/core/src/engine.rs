//! Multi-run experiments over GC, GC-SC, GC-DC and the lower bound.
//!
//! One cluster assignment matrix is fixed per experiment. Each run gets its
//! own straggler trace; within a run, every scheme sees the same trace and
//! the same latency draws for each iteration.

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{dynamic_assignment_matrix, static_assignment, ClusterAssignmentMatrix};
use crate::code::Codebook;
use crate::config::{ExperimentConfig, Scheme};
use crate::dataset::{self, Dataset, MiniBatch, ModelState};
use crate::error::{Error, Result};
use crate::latency;
use crate::scheduler::{assign_clusters, SelectionMode};
use crate::seed;
use crate::straggler::{self, observe, StragglerState};

/// Largest relative error tolerated between decoded and centralized gradients.
pub const RECOVERY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub run: usize,
    pub iteration: usize,
    pub scheme: Scheme,
    pub completion_time: f64,
    /// Actual stragglers per cluster of the scheme's clustering. GC and LB
    /// report one entry covering all workers.
    pub cluster_stragglers: Vec<usize>,
    /// Phase-II swaps (GC-DC only).
    pub conflicts: usize,
    /// GC-DC could not resolve a conflict and used the base clustering.
    pub fallback: bool,
    /// Relative error of the decoded full gradient, when verified.
    pub recovery_error: Option<f64>,
    /// Workers per cluster in slot order, when placements are recorded.
    pub placement: Option<Vec<Vec<usize>>>,
}

impl IterationRecord {
    pub fn max_cluster_stragglers(&self) -> usize {
        self.cluster_stragglers.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    /// Mean per-iteration completion time over all runs and iterations.
    pub mean: f64,
    /// Sample standard deviation of the per-run means.
    pub std: f64,
    /// `(mean(GC-SC) - mean) / mean(GC-SC)`, when GC-SC was simulated.
    pub improvement_vs_gcsc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub records: Vec<IterationRecord>,
    pub summaries: Vec<SchemeSummary>,
    pub feasible: bool,
    pub fallbacks: usize,
}

impl ExperimentResult {
    pub fn summary(&self, scheme: Scheme) -> Option<&SchemeSummary> {
        self.summaries.iter().find(|s| s.scheme == scheme)
    }
}

/// Data for checking that every scheme's decoded gradient is exact.
pub struct Verifier {
    pub train: Dataset,
    pub batches: Vec<MiniBatch>,
    pub eta: f64,
    /// Single-cluster code over all `K` workers, for plain GC.
    pub global: Codebook,
}

/// Shared, read-only state for all runs of an experiment.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub codebook: Codebook,
    pub static_matrix: ClusterAssignmentMatrix,
    pub dynamic_matrix: ClusterAssignmentMatrix,
    pub verifier: Option<Verifier>,
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let codebook = Codebook::build(cfg.workers, cfg.clusters, cfg.load)?;
        let static_matrix = static_assignment(cfg.workers, cfg.clusters)?;
        let matrix_seed = seed::derive(cfg.seed, "matrix", &[]);
        let dynamic_matrix = dynamic_assignment_matrix(cfg.workers, cfg.clusters, cfg.replication, matrix_seed)?;
        let verifier = if cfg.verify_gradients {
            let problem = dataset::generate_synthetic_with_noise(
                cfg.verify_dim,
                cfg.verify_train_size(),
                1,
                dataset::DEFAULT_NOISE_STD,
                seed::derive(cfg.seed, "learner-data", &[]),
            )?;
            let batches = dataset::partition(&problem.train, cfg.workers)?;
            Some(Verifier {
                train: problem.train,
                batches,
                eta: cfg.learning_rate,
                global: Codebook::build(cfg.workers, 1, cfg.load)?,
            })
        } else {
            None
        };
        Ok(Self { cfg: cfg.clone(), codebook, static_matrix, dynamic_matrix, verifier })
    }

    fn selection_mode(&self) -> SelectionMode {
        if self.cfg.straggler.model.is_heterogeneous() {
            SelectionMode::Heterogeneous
        } else {
            SelectionMode::Homogeneous
        }
    }

    fn static_clusters(&self) -> Vec<Vec<usize>> {
        self.static_matrix.columns.clone()
    }
}

/// Per-iteration inputs shared by every scheme.
pub struct IterationInput<'a> {
    pub run: usize,
    pub iteration: usize,
    pub current: &'a StragglerState,
    pub previous: &'a StragglerState,
    pub draws: &'a [f64],
    /// Partial gradients and the centralized gradient at the current model.
    pub gradients: Option<(&'a [Vec<f64>], &'a [f64])>,
}

fn counts(clusters: &[Vec<usize>], straggling: &[bool]) -> Vec<usize> {
    clusters.iter().map(|c| c.iter().filter(|&&k| straggling[k]).count()).collect()
}

/// Decode the full gradient from each cluster's earliest `ℓ - r + 1` finishers.
/// `clusters[p][i]` is the worker computing codeword `i` of `codes[p]`.
pub fn recover_gradient(
    codebook: &Codebook,
    clusters: &[Vec<usize>],
    draws: &[f64],
    partials: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let d = partials[0].len();
    let mut full = vec![0.0; d];
    for (code, members) in codebook.codes.iter().zip(clusters) {
        let mut arrivals: Vec<usize> = (0..members.len()).collect();
        arrivals.sort_by(|&x, &y| draws[members[x]].total_cmp(&draws[members[y]]).then(x.cmp(&y)));
        let received = arrivals[..code.threshold()]
            .iter()
            .map(|&slot| Ok((slot, code.codewords[slot].evaluate(partials)?)))
            .collect::<Result<Vec<_>>>()?;
        let cluster_avg = code.decode(&received)?;
        let weight = code.size() as f64 / codebook.workers as f64;
        full.iter_mut().zip(&cluster_avg).for_each(|(f, c)| *f += weight * c);
    }
    Ok(full)
}

fn verify(codebook: &Codebook, clusters: &[Vec<usize>], input: &IterationInput<'_>) -> Result<Option<f64>> {
    let Some((partials, central)) = input.gradients else { return Ok(None) };
    let decoded = recover_gradient(codebook, clusters, input.draws, partials)?;
    let err = dataset::relative_error(&decoded, central);
    if err.is_nan() || err > RECOVERY_TOLERANCE {
        return Err(Error::Internal(format!(
            "gradient recovery error {err:e} exceeds {RECOVERY_TOLERANCE:e} (run {}, iteration {})",
            input.run, input.iteration
        )));
    }
    Ok(Some(err))
}

/// Completion time (and bookkeeping) of one scheme for one iteration.
pub fn run_iteration(ctx: &Context, scheme: Scheme, input: &IterationInput<'_>) -> Result<IterationRecord> {
    let cfg = &ctx.cfg;
    let actual = &input.current.straggling;
    let keep = cfg.record_placements;
    let mut record = IterationRecord {
        run: input.run,
        iteration: input.iteration,
        scheme,
        completion_time: 0.0,
        cluster_stragglers: vec![input.current.straggler_count()],
        conflicts: 0,
        fallback: false,
        recovery_error: None,
        placement: None,
    };
    match scheme {
        Scheme::Gc => {
            record.completion_time = latency::gc_completion(input.draws, cfg.load)?;
            if let Some(v) = &ctx.verifier {
                let all = vec![(0..cfg.workers).collect::<Vec<_>>()];
                record.recovery_error = verify(&v.global, &all, input)?;
            }
        }
        Scheme::Lb => {
            record.completion_time =
                latency::lower_bound_completion(input.draws, cfg.clusters, cfg.cluster_size(), cfg.load)?;
        }
        Scheme::GcSc => {
            let clusters = ctx.static_clusters();
            record.completion_time = latency::clustered_completion(input.draws, &clusters, cfg.load)?;
            record.cluster_stragglers = counts(&clusters, actual);
            record.recovery_error = verify(&ctx.codebook, &clusters, input)?;
            record.placement = keep.then_some(clusters);
        }
        Scheme::GcDc => {
            let seen = observe(input.current, input.previous, cfg.straggler.ssi);
            let clusters = match assign_clusters(&ctx.dynamic_matrix, &seen.straggling, &seen.rates, ctx.selection_mode())
            {
                Ok(schedule) => {
                    record.conflicts = schedule.swaps.len();
                    schedule.placement.clusters
                }
                Err(Error::NoResolution { worker, cluster }) => {
                    warn!(
                        "run {} iteration {}: conflict of worker {worker} for cluster {cluster} unresolved, \
                         using the base clustering",
                        input.run, input.iteration
                    );
                    record.fallback = true;
                    ctx.dynamic_matrix.base_clustering()
                }
                Err(e) => return Err(e),
            };
            record.completion_time = latency::clustered_completion(input.draws, &clusters, cfg.load)?;
            record.cluster_stragglers = counts(&clusters, actual);
            record.recovery_error = verify(&ctx.codebook, &clusters, input)?;
            record.placement = keep.then_some(clusters);
        }
    }
    Ok(record)
}

/// Latency draws for one iteration of one run.
pub fn iteration_draws(cfg: &ExperimentConfig, run: usize, iteration: usize, rates: &[f64]) -> Vec<f64> {
    let mut rng = seed::stream(cfg.seed, "latency", &[run as u64, iteration as u64]);
    latency::sample_iteration(rates, cfg.straggler.alpha, cfg.load, &mut rng)
}

pub fn run_single(ctx: &Context, run: usize) -> Result<Vec<IterationRecord>> {
    let cfg = &ctx.cfg;
    let trace = straggler::generate_trace(&cfg.straggler, cfg.workers, cfg.iterations, cfg.seed, run)?;
    let mut model = ctx.verifier.as_ref().map(|v| ModelState::zeros(v.train.dim(), v.eta));
    let mut records = Vec::with_capacity(cfg.iterations * cfg.schemes.len());
    for t in 1..=cfg.iterations {
        let draws = iteration_draws(cfg, run, t, &trace[t].rates);
        let grads = match (&ctx.verifier, &model) {
            (Some(v), Some(m)) => {
                let partials = dataset::partial_gradients(&v.train, &v.batches, m)?;
                let central = v.train.gradient(&m.theta)?;
                Some((partials, central))
            }
            _ => None,
        };
        let input = IterationInput {
            run,
            iteration: t,
            current: &trace[t],
            previous: &trace[t - 1],
            draws: &draws,
            gradients: grads.as_ref().map(|(p, c)| (p.as_slice(), c.as_slice())),
        };
        for &scheme in &cfg.schemes {
            records.push(run_iteration(ctx, scheme, &input)?);
        }
        if let (Some(m), Some((_, central))) = (model.as_mut(), grads.as_ref()) {
            *m = dataset::gd_step(m, central)?;
        }
    }
    Ok(records)
}

fn summarize(cfg: &ExperimentConfig, records: &[IterationRecord]) -> Vec<SchemeSummary> {
    let mut out: Vec<SchemeSummary> = cfg
        .schemes
        .iter()
        .map(|&scheme| {
            let mut per_run = vec![(0.0, 0usize); cfg.runs];
            for r in records.iter().filter(|r| r.scheme == scheme) {
                per_run[r.run].0 += r.completion_time;
                per_run[r.run].1 += 1;
            }
            let means: Vec<f64> = per_run.iter().map(|&(s, n)| s / n.max(1) as f64).collect();
            let mean = means.iter().sum::<f64>() / means.len() as f64;
            let std = if means.len() > 1 {
                (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            SchemeSummary { scheme, mean, std, improvement_vs_gcsc: None }
        })
        .collect();
    if let Some(base) = out.iter().find(|s| s.scheme == Scheme::GcSc).map(|s| s.mean) {
        for s in &mut out {
            s.improvement_vs_gcsc = Some((base - s.mean) / base);
        }
    }
    out
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ctx = Context::new(cfg)?;
    let feasible = cfg.is_feasible();
    if cfg.has(Scheme::GcDc) && !feasible {
        warn!(
            "n = {} does not satisfy n > P(K-1)/(2K) for K = {}, P = {}; conflicts may fall back to the base clustering",
            cfg.replication, cfg.workers, cfg.clusters
        );
    }
    info!(
        "running {} runs x {} iterations, K={} P={} r={} n={}",
        cfg.runs, cfg.iterations, cfg.workers, cfg.clusters, cfg.load, cfg.replication
    );
    let per_run: Vec<Vec<IterationRecord>> = if cfg.parallel {
        (0..cfg.runs).into_par_iter().map(|run| run_single(&ctx, run)).collect::<Result<_>>()?
    } else {
        (0..cfg.runs).map(|run| run_single(&ctx, run)).collect::<Result<_>>()?
    };
    let records: Vec<IterationRecord> = per_run.into_iter().flatten().collect();
    let fallbacks = records.iter().filter(|r| r.fallback).count();
    let summaries = summarize(cfg, &records);
    Ok(ExperimentResult { records, summaries, feasible, fallbacks })
}
