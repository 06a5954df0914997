//! Synthetic linear-regression data and the gradient arithmetic used to
//! check end-to-end recovery of the full gradient.
//!
//! Loss per point is the squared error `(y - x·θ)²`, so the per-point
//! gradient is `-2 (y - x·θ) x`.

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed;

pub const DEFAULT_NOISE_STD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(invalid("dataset must contain at least one point"));
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: features.len(), got: labels.len() });
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(invalid("feature dimension must be at least 1"));
        }
        if let Some(bad) = features.iter().find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        Ok(Self { features, labels, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Gradient of the mean loss over the whole dataset.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.mean_gradient(&all, theta)
    }

    pub fn loss(&self, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        let total: f64 = self
            .features
            .iter()
            .zip(&self.labels)
            .map(|(x, y)| (y - dot(x, theta)).powi(2))
            .sum();
        Ok(total / self.len() as f64)
    }

    fn mean_gradient(&self, members: &[usize], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        if members.is_empty() {
            return Err(invalid("cannot take the gradient of an empty batch"));
        }
        let mut grad = vec![0.0; self.dim];
        for &i in members {
            let x = &self.features[i];
            let residual = self.labels[i] - dot(x, theta);
            for (g, xi) in grad.iter_mut().zip(x) {
                *g -= 2.0 * residual * xi;
            }
        }
        let scale = 1.0 / members.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok(grad)
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: theta.len() });
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Train/test pair plus the weight vector that generated the labels.
#[derive(Clone, Debug)]
pub struct SyntheticProblem {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: Vec<f64>,
}

/// Features are i.i.d. `N(0, 1/d)` so `x·w` has unit scale for `w ~ N(0, I)`;
/// labels are `x·w + N(0, noise_std²)`.
pub fn generate_synthetic_with_noise(
    d: usize,
    s_train: usize,
    s_test: usize,
    noise_std: f64,
    seed: u64,
) -> Result<SyntheticProblem> {
    if d == 0 || s_train == 0 || s_test == 0 {
        return Err(invalid(format!(
            "dimension and dataset sizes must be positive (d={d}, train={s_train}, test={s_test})"
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(invalid(format!("noise std must be finite and non-negative, got {noise_std}")));
    }
    let mut rng = seed::stream(seed, "dataset", &[]);
    let truth: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let feature_dist = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
    let noise = Normal::new(0.0, noise_std).map_err(|e| invalid(e.to_string()))?;

    let draw = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Result<Dataset> {
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| feature_dist.sample(rng)).collect();
            let y = dot(&x, &truth) + if noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
            features.push(x);
            labels.push(y);
        }
        Dataset::new(features, labels)
    };
    let train = draw(s_train, &mut rng)?;
    let test = draw(s_test, &mut rng)?;
    Ok(SyntheticProblem { train, test, truth })
}

pub fn generate_synthetic(d: usize, s_train: usize, s_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let p = generate_synthetic_with_noise(d, s_train, s_test, DEFAULT_NOISE_STD, seed)?;
    Ok((p.train, p.test))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniBatch {
    pub index: usize,
    pub members: Vec<usize>,
}

/// Split into `k` contiguous, equal-size mini-batches.
pub fn partition(data: &Dataset, k: usize) -> Result<Vec<MiniBatch>> {
    if k == 0 {
        return Err(invalid("number of mini-batches must be positive"));
    }
    if !data.len().is_multiple_of(k) {
        return Err(invalid(format!("dataset size {} is not divisible by {k}", data.len())));
    }
    let size = data.len() / k;
    Ok((0..k)
        .map(|index| MiniBatch { index, members: (index * size..(index + 1) * size).collect() })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub theta: Vec<f64>,
    pub iteration: usize,
    pub eta: f64,
}

impl ModelState {
    pub fn zeros(d: usize, eta: f64) -> Self {
        Self { theta: vec![0.0; d], iteration: 0, eta }
    }
}

pub fn partial_gradient(data: &Dataset, batch: &MiniBatch, model: &ModelState) -> Result<Vec<f64>> {
    data.mean_gradient(&batch.members, &model.theta)
}

/// All partial gradients, indexed by batch id.
pub fn partial_gradients(data: &Dataset, batches: &[MiniBatch], model: &ModelState) -> Result<Vec<Vec<f64>>> {
    batches.iter().map(|b| partial_gradient(data, b, model)).collect()
}

/// Arithmetic mean of the `num_batches` partial gradients.
pub fn full_gradient(partials: &[Vec<f64>], num_batches: usize) -> Result<Vec<f64>> {
    if num_batches == 0 {
        return Err(invalid("number of mini-batches must be positive"));
    }
    if partials.len() != num_batches {
        return Err(Error::MissingBatch(partials.len().min(num_batches)));
    }
    let d = partials[0].len();
    let mut g = vec![0.0; d];
    for p in partials {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
        g.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    g.iter_mut().for_each(|a| *a /= num_batches as f64);
    Ok(g)
}

pub fn gd_step(model: &ModelState, gradient: &[f64]) -> Result<ModelState> {
    if gradient.len() != model.theta.len() {
        return Err(Error::DimensionMismatch { expected: model.theta.len(), got: gradient.len() });
    }
    let theta = model.theta.iter().zip(gradient).map(|(t, g)| t - model.eta * g).collect();
    Ok(ModelState { theta, iteration: model.iteration + 1, eta: model.eta })
}

/// Relative error `‖a - b‖ / max(‖b‖, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_point(x: Vec<f64>, y: f64) -> Dataset {
        Dataset::new(vec![x], vec![y]).unwrap()
    }

    #[test]
    fn full_scale_sizes() {
        let (train, test) = generate_synthetic(1000, 2000, 400, 1).unwrap();
        assert_eq!((train.len(), test.len(), train.dim()), (2000, 400, 1000));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_synthetic(5, 20, 4, 9).unwrap(), generate_synthetic(5, 20, 4, 9).unwrap());
        assert_ne!(generate_synthetic(5, 20, 4, 9).unwrap().0, generate_synthetic(5, 20, 4, 10).unwrap().0);
    }

    #[test]
    fn invalid_sizes_rejected() {
        assert!(generate_synthetic(0, 10, 10, 0).is_err());
        assert!(generate_synthetic(3, 0, 10, 0).is_err());
        assert!(generate_synthetic(3, 10, 0, 0).is_err());
    }

    #[test]
    fn minimal_partition_is_one_point_per_batch() {
        let (train, _) = generate_synthetic(1, 7, 1, 3).unwrap();
        let batches = partition(&train, 7).unwrap();
        assert!(batches.iter().all(|b| b.members.len() == 1));
    }

    #[test]
    fn partition_sizes() {
        let (train, _) = generate_synthetic(2, 2000, 1, 0).unwrap();
        let batches = partition(&train, 20).unwrap();
        assert_eq!(batches.len(), 20);
        assert!(batches.iter().all(|b| b.members.len() == 100));

        let (twelve, _) = generate_synthetic(2, 12, 1, 0).unwrap();
        assert!(partition(&twelve, 12).unwrap().iter().all(|b| b.members.len() == 1));

        let (ten, _) = generate_synthetic(2, 10, 1, 0).unwrap();
        assert!(partition(&ten, 3).is_err());
    }

    #[test]
    fn gradient_vanishes_at_noiseless_optimum() {
        let p = generate_synthetic_with_noise(4, 16, 1, 0.0, 5).unwrap();
        let model = ModelState { theta: p.truth.clone(), iteration: 0, eta: 0.1 };
        let batches = partition(&p.train, 4).unwrap();
        for b in &batches {
            let g = partial_gradient(&p.train, b, &model).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn single_point_gradient_at_zero() {
        let data = one_point(vec![1.5, -2.0], 3.0);
        let batch = MiniBatch { index: 0, members: vec![0] };
        let g = partial_gradient(&data, &batch, &ModelState::zeros(2, 0.1)).unwrap();
        // -2 y x
        assert_eq!(g, vec![-9.0, 12.0]);
    }

    #[test]
    fn two_point_batch_averages_pointwise() {
        let data = Dataset::new(vec![vec![1.0, 0.5], vec![-1.0, 2.0]], vec![2.0, -1.0]).unwrap();
        let model = ModelState { theta: vec![0.3, -0.2], iteration: 0, eta: 0.1 };
        let pointwise = |x: &[f64], y: f64| -> Vec<f64> {
            let r = y - (x[0] * model.theta[0] + x[1] * model.theta[1]);
            vec![-2.0 * r * x[0], -2.0 * r * x[1]]
        };
        let a = pointwise(&[1.0, 0.5], 2.0);
        let b = pointwise(&[-1.0, 2.0], -1.0);
        let g = partial_gradient(&data, &MiniBatch { index: 0, members: vec![0, 1] }, &model).unwrap();
        for i in 0..2 {
            assert!((g[i] - 0.5 * (a[i] + b[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn full_gradient_cases() {
        let g = vec![1.0, -2.0, 3.0];
        assert_eq!(full_gradient(&[g.clone(), g.clone(), g.clone()], 3).unwrap(), g);
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert_eq!(full_gradient(&[g.clone(), neg], 2).unwrap(), vec![0.0; 3]);
        assert!(matches!(full_gradient(std::slice::from_ref(&g), 2), Err(Error::MissingBatch(_))));
    }

    #[test]
    fn full_gradient_matches_centralized() {
        let (train, _) = generate_synthetic(5, 20, 1, 11).unwrap();
        let model = ModelState { theta: vec![0.1, -0.3, 0.2, 0.0, 1.0], iteration: 0, eta: 0.1 };
        let batches = partition(&train, 4).unwrap();
        let partials = partial_gradients(&train, &batches, &model).unwrap();
        let g = full_gradient(&partials, 4).unwrap();
        let central = train.gradient(&model.theta).unwrap();
        assert!(relative_error(&g, &central) <= 1e-12);
    }

    #[test]
    fn gd_step_cases() {
        let m = ModelState { theta: vec![1.0, 1.0], iteration: 3, eta: 0.1 };
        assert_eq!(gd_step(&m, &[0.0, 0.0]).unwrap().theta, m.theta);
        let frozen = ModelState { eta: 0.0, ..m.clone() };
        assert_eq!(gd_step(&frozen, &[5.0, 5.0]).unwrap().theta, m.theta);
        let next = gd_step(&m, &[2.0, -2.0]).unwrap();
        assert!((next.theta[0] - 0.8).abs() < 1e-15 && (next.theta[1] - 1.2).abs() < 1e-15);
        assert_eq!(next.iteration, 4);
        assert!(gd_step(&m, &[1.0]).is_err());
    }

    #[test]
    fn loss_is_non_increasing_with_exact_gradient() {
        let (train, _) = generate_synthetic(10, 200, 1, 2).unwrap();
        let mut model = ModelState::zeros(10, 0.1);
        let mut prev = train.loss(&model.theta).unwrap();
        for _ in 0..50 {
            let g = train.gradient(&model.theta).unwrap();
            model = gd_step(&model, &g).unwrap();
            let loss = train.loss(&model.theta).unwrap();
            assert!(loss <= prev + 1e-12);
            prev = loss;
        }
    }
}
