//! Per-iteration straggling behaviour of the workers.
//!
//! Three processes are supported:
//! * homogeneous Gilbert-Elliott: two states with shared rates `μ_s < μ_f`;
//! * heterogeneous Gilbert-Elliott: per-worker `μ_{k,f} ~ U(0, 5]`, slow rate
//!   `μ_{k,f} / 10`;
//! * time-varying: each worker redraws its rate from `U(0, 5]` with
//!   probability `p` at every iteration.
//!
//! Transitions happen at the start of an iteration, so the state of
//! iteration `t` is `step(state of t-1)` and iteration 0 holds the initial
//! state. Each worker draws from its own substream.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Open01};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StragglerModel {
    GeHomogeneous,
    GeHeterogeneous,
    TimeVarying,
}

impl StragglerModel {
    pub fn is_heterogeneous(self) -> bool {
        !matches!(self, StragglerModel::GeHomogeneous)
    }
}

impl FromStr for StragglerModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ge-homogeneous" => Ok(Self::GeHomogeneous),
            "ge-heterogeneous" => Ok(Self::GeHeterogeneous),
            "time-varying" => Ok(Self::TimeVarying),
            other => Err(invalid(format!("unknown straggler model '{other}'"))),
        }
    }
}

impl fmt::Display for StragglerModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GeHomogeneous => "ge-homogeneous",
            Self::GeHeterogeneous => "ge-heterogeneous",
            Self::TimeVarying => "time-varying",
        })
    }
}

/// What the parameter server knows when it clusters for iteration `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ssi {
    /// The realization of iteration `t` itself.
    Perfect,
    /// The realization of iteration `t - 1`.
    Imperfect,
}

impl FromStr for Ssi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(Self::Perfect),
            "imperfect" => Ok(Self::Imperfect),
            other => Err(invalid(format!("unknown SSI mode '{other}'"))),
        }
    }
}

impl fmt::Display for Ssi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Perfect => "perfect",
            Self::Imperfect => "imperfect",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StragglerConfig {
    pub model: StragglerModel,
    pub switch_prob: f64,
    pub mu_slow: f64,
    pub mu_fast: f64,
    /// Upper end of the uniform rate interval for heterogeneous models.
    pub rate_max: f64,
    /// Heterogeneous GE: slow rate is the fast rate divided by this.
    pub slowdown: f64,
    pub tau: f64,
    pub alpha: f64,
    pub ssi: Ssi,
    pub initial_stragglers: usize,
}

impl Default for StragglerConfig {
    fn default() -> Self {
        Self {
            model: StragglerModel::GeHomogeneous,
            switch_prob: 0.05,
            mu_slow: 0.1,
            mu_fast: 10.0,
            rate_max: 5.0,
            slowdown: 10.0,
            tau: 0.5,
            alpha: 0.01,
            ssi: Ssi::Imperfect,
            initial_stragglers: 0,
        }
    }
}

impl StragglerConfig {
    pub fn validate(&self, workers: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.switch_prob) {
            return Err(invalid(format!("switch probability must lie in [0, 1], got {}", self.switch_prob)));
        }
        if !(self.mu_slow > 0.0 && self.mu_fast > self.mu_slow) {
            return Err(invalid(format!("need mu_fast > mu_slow > 0, got {} and {}", self.mu_fast, self.mu_slow)));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(invalid(format!("threshold tau must be positive, got {}", self.tau)));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(invalid(format!("latency shift alpha must be positive, got {}", self.alpha)));
        }
        if !(self.rate_max > 0.0 && self.slowdown > 1.0) {
            return Err(invalid("rate_max must be positive and slowdown above 1"));
        }
        if self.model == StragglerModel::TimeVarying && self.tau >= self.rate_max {
            return Err(invalid(format!("tau {} must be below rate_max {}", self.tau, self.rate_max)));
        }
        if self.initial_stragglers > workers {
            return Err(invalid(format!(
                "initial straggler count {} exceeds worker count {workers}",
                self.initial_stragglers
            )));
        }
        Ok(())
    }

    /// Straggler flag for a worker in `slow` chain state running at `rate`.
    fn flag(&self, slow: bool, rate: f64) -> bool {
        match self.model {
            StragglerModel::GeHomogeneous => slow,
            _ => classify(rate, self.tau),
        }
    }
}

/// `true` when the rate is strictly below the threshold.
pub fn classify(rate: f64, tau: f64) -> bool {
    rate < tau
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StragglerState {
    pub iteration: usize,
    /// Chain state: `true` in the slow state. For the time-varying model this
    /// is the threshold classification of the current rate.
    pub slow: Vec<bool>,
    /// Straggler flags as seen by the scheduler (`S_k = 0` ⇔ `true`).
    pub straggling: Vec<bool>,
    pub rates: Vec<f64>,
    /// Non-straggling rate of each worker (GE models).
    pub fast_rates: Vec<f64>,
}

impl StragglerState {
    pub fn workers(&self) -> usize {
        self.rates.len()
    }

    /// The binary vector `S` with `S_k = 0` for stragglers.
    pub fn indicator(&self) -> Vec<u8> {
        self.straggling.iter().map(|&s| u8::from(!s)).collect()
    }

    pub fn straggler_count(&self) -> usize {
        self.straggling.iter().filter(|&&s| s).count()
    }
}

fn open_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = Open01.sample(rng);
    lo + (hi - lo) * u
}

/// Per-worker RNG streams for one run.
pub fn worker_streams(master: u64, run: usize, workers: usize) -> Vec<ChaCha8Rng> {
    (0..workers).map(|k| seed::stream(master, "straggler-worker", &[run as u64, k as u64])).collect()
}

/// Initial state with exactly `initial_stragglers` workers in the slow state,
/// chosen uniformly at random.
pub fn init_states(cfg: &StragglerConfig, workers: usize, seed: u64) -> Result<StragglerState> {
    cfg.validate(workers)?;
    let mut rng = seed::stream(seed, "straggler-init", &[]);
    let mut slow = vec![false; workers];
    for k in sample(&mut rng, workers, cfg.initial_stragglers) {
        slow[k] = true;
    }
    let (rates, fast_rates): (Vec<f64>, Vec<f64>) = match cfg.model {
        StragglerModel::GeHomogeneous => slow
            .iter()
            .map(|&s| (if s { cfg.mu_slow } else { cfg.mu_fast }, cfg.mu_fast))
            .unzip(),
        StragglerModel::GeHeterogeneous => slow
            .iter()
            .map(|&s| {
                let fast = open_uniform(&mut rng, 0.0, cfg.rate_max);
                (if s { fast / cfg.slowdown } else { fast }, fast)
            })
            .unzip(),
        StragglerModel::TimeVarying => slow
            .iter()
            .map(|&s| {
                let rate = if s {
                    open_uniform(&mut rng, 0.0, cfg.tau)
                } else {
                    open_uniform(&mut rng, cfg.tau, cfg.rate_max)
                };
                (rate, rate)
            })
            .unzip(),
    };
    let straggling = slow.iter().zip(&rates).map(|(&s, &r)| cfg.flag(s, r)).collect();
    Ok(StragglerState { iteration: 0, slow, straggling, rates, fast_rates })
}

/// Advance every worker by one iteration using its own stream.
pub fn step(state: &StragglerState, cfg: &StragglerConfig, rngs: &mut [ChaCha8Rng]) -> StragglerState {
    assert_eq!(rngs.len(), state.workers(), "one stream per worker");
    let mut next = state.clone();
    next.iteration += 1;
    for (k, rng) in rngs.iter_mut().enumerate() {
        match cfg.model {
            StragglerModel::GeHomogeneous | StragglerModel::GeHeterogeneous => {
                if rng.random_bool(cfg.switch_prob) {
                    next.slow[k] = !next.slow[k];
                }
                let fast = next.fast_rates[k];
                next.rates[k] = match (cfg.model, next.slow[k]) {
                    (StragglerModel::GeHomogeneous, true) => cfg.mu_slow,
                    (StragglerModel::GeHomogeneous, false) => cfg.mu_fast,
                    (_, true) => fast / cfg.slowdown,
                    (_, false) => fast,
                };
            }
            StragglerModel::TimeVarying => {
                if rng.random_bool(cfg.switch_prob) {
                    next.rates[k] = open_uniform(rng, 0.0, cfg.rate_max);
                    next.fast_rates[k] = next.rates[k];
                }
                next.slow[k] = classify(next.rates[k], cfg.tau);
            }
        }
        next.straggling[k] = cfg.flag(next.slow[k], next.rates[k]);
    }
    next
}

/// The state the scheduler acts on for the current iteration.
pub fn observe<'a>(current: &'a StragglerState, previous: &'a StragglerState, ssi: Ssi) -> &'a StragglerState {
    match ssi {
        Ssi::Perfect => current,
        Ssi::Imperfect => previous,
    }
}

/// A full trace: index 0 is the initial state, index `t` the state of iteration `t`.
pub fn generate_trace(
    cfg: &StragglerConfig,
    workers: usize,
    iterations: usize,
    master: u64,
    run: usize,
) -> Result<Vec<StragglerState>> {
    let init_seed = seed::derive(master, "straggler-run", &[run as u64]);
    let mut state = init_states(cfg, workers, init_seed)?;
    let mut rngs = worker_streams(master, run, workers);
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(state.clone());
    for _ in 0..iterations {
        state = step(&state, cfg, &mut rngs);
        trace.push(state.clone());
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous(p: f64, initial: usize) -> StragglerConfig {
        StragglerConfig { switch_prob: p, initial_stragglers: initial, ..Default::default() }
    }

    #[test]
    fn initial_straggler_counts() {
        let s = init_states(&homogeneous(0.05, 6), 12, 1).unwrap();
        assert_eq!(s.indicator().iter().filter(|&&v| v == 0).count(), 6);
        assert!(s.rates.iter().zip(&s.slow).all(|(&r, &slow)| r == if slow { 0.1 } else { 10.0 }));

        let none = init_states(&homogeneous(0.05, 0), 12, 1).unwrap();
        assert!(none.straggling.iter().all(|s| !s));

        assert!(init_states(&homogeneous(0.05, 13), 12, 1).is_err());
    }

    #[test]
    fn time_varying_initial_rates_split_at_tau() {
        let cfg = StragglerConfig {
            model: StragglerModel::TimeVarying,
            tau: 1.0,
            initial_stragglers: 10,
            ..Default::default()
        };
        let s = init_states(&cfg, 20, 4).unwrap();
        assert_eq!(s.rates.iter().filter(|&&r| r > 0.0 && r < 1.0).count(), 10);
        assert_eq!(s.rates.iter().filter(|&&r| (1.0..=5.0).contains(&r)).count(), 10);
        assert_eq!(s.straggler_count(), 10);
    }

    #[test]
    fn zero_switch_probability_freezes_state() {
        let cfg = homogeneous(0.0, 5);
        let trace = generate_trace(&cfg, 12, 50, 3, 0).unwrap();
        assert!(trace.iter().all(|s| s.slow == trace[0].slow));
    }

    #[test]
    fn unit_switch_probability_flips_everyone() {
        let cfg = homogeneous(1.0, 5);
        let trace = generate_trace(&cfg, 12, 3, 3, 0).unwrap();
        for w in trace.windows(2) {
            assert!(w[0].slow.iter().zip(&w[1].slow).all(|(a, b)| a != b));
        }
    }

    #[test]
    fn flip_frequency_matches_switch_probability() {
        let cfg = homogeneous(0.05, 0);
        let trace = generate_trace(&cfg, 1, 100_000, 21, 0).unwrap();
        let flips = trace.windows(2).filter(|w| w[0].slow[0] != w[1].slow[0]).count();
        let freq = flips as f64 / 100_000.0;
        assert!((freq - 0.05).abs() <= 0.005, "flip frequency {freq}");
    }

    #[test]
    fn symmetric_chain_spends_half_its_time_slow() {
        for initial in [0, 1] {
            let cfg = homogeneous(0.05, initial);
            let trace = generate_trace(&cfg, 1, 100_000, 5, 0).unwrap();
            let slow = trace[1..].iter().filter(|s| s.slow[0]).count() as f64 / 100_000.0;
            assert!((slow - 0.5).abs() <= 0.02, "slow fraction {slow}");
        }
    }

    #[test]
    fn heterogeneous_slow_rate_is_a_tenth() {
        let cfg = StragglerConfig {
            model: StragglerModel::GeHeterogeneous,
            initial_stragglers: 7,
            switch_prob: 0.2,
            ..Default::default()
        };
        for s in generate_trace(&cfg, 15, 200, 9, 2).unwrap() {
            for k in 0..15 {
                let expect = if s.slow[k] { s.fast_rates[k] / 10.0 } else { s.fast_rates[k] };
                assert_eq!(s.rates[k], expect);
                assert!(s.fast_rates[k] > 0.0 && s.fast_rates[k] <= 5.0);
                assert_eq!(s.straggling[k], s.rates[k] < cfg.tau);
            }
        }
    }

    #[test]
    fn time_varying_rates_stay_in_range_and_only_move_on_resample() {
        let cfg = StragglerConfig {
            model: StragglerModel::TimeVarying,
            tau: 1.0,
            initial_stragglers: 10,
            switch_prob: 0.1,
            ..Default::default()
        };
        let trace = generate_trace(&cfg, 20, 500, 1, 0).unwrap();
        let mut unchanged = 0;
        for w in trace.windows(2) {
            for k in 0..20 {
                assert!(w[1].rates[k] > 0.0 && w[1].rates[k] <= 5.0);
                if w[0].rates[k] == w[1].rates[k] {
                    unchanged += 1;
                }
            }
        }
        // about 90% of worker-steps keep their rate
        let frac = unchanged as f64 / (500.0 * 20.0);
        assert!((frac - 0.9).abs() < 0.02, "{frac}");
    }

    #[test]
    fn classify_boundaries() {
        assert!(classify(0.3, 0.5));
        assert!(!classify(0.5, 0.5));
        assert!(!classify(1.2, 1.0));
    }

    #[test]
    fn observation_modes() {
        let cfg = homogeneous(1.0, 3);
        let trace = generate_trace(&cfg, 6, 1, 0, 0).unwrap();
        let (prev, cur) = (&trace[0], &trace[1]);
        assert_eq!(observe(cur, prev, Ssi::Perfect), cur);
        let seen = observe(cur, prev, Ssi::Imperfect);
        // every coordinate flipped, so the lagged view disagrees everywhere
        assert!(seen.straggling.iter().zip(&cur.straggling).all(|(a, b)| a != b));

        let frozen = generate_trace(&homogeneous(0.0, 3), 6, 1, 0, 0).unwrap();
        assert_eq!(observe(&frozen[1], &frozen[0], Ssi::Imperfect).straggling, frozen[1].straggling);
    }

    #[test]
    fn config_validation() {
        assert!(homogeneous(1.5, 0).validate(4).is_err());
        let bad = StragglerConfig { mu_slow: 10.0, mu_fast: 1.0, ..Default::default() };
        assert!(bad.validate(4).is_err());
        let bad_tau = StragglerConfig { tau: 0.0, ..Default::default() };
        assert!(bad_tau.validate(4).is_err());
    }
}
