//! Problem abstractions: vector-valued prediction instances, stochastic
//! convex optimization instances, and the contract any learner satisfies.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VvpError};
use crate::matrix::{SparseVector, StructuredMatrix};

/// A convex loss on predictions `ŷ ∈ R^k`, with a subgradient oracle.
pub trait VectorLoss: Send + Sync {
    fn value(&self, yhat: &[f64]) -> f64;
    fn subgradient(&self, yhat: &[f64]) -> Vec<f64>;
}

/// A complete vector-valued prediction problem: dimensions, reference matrix,
/// loss, and a finite input support carrying the uniform distribution.
///
/// Feasible models are matrices in the unit Frobenius ball around `w0`.
#[derive(Clone)]
pub struct VvpInstance {
    pub k: usize,
    pub m: usize,
    pub w0: StructuredMatrix,
    pub loss: Arc<dyn VectorLoss>,
    pub inputs: Vec<SparseVector>,
    /// Lipschitz bound `G` of the loss.
    pub lipschitz_bound: f64,
    /// Bound on input Euclidean norms (1 for the shattering instances, √2
    /// for converted optimization problems).
    pub input_norm_bound: f64,
}

impl VvpInstance {
    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w0.rows() != self.k || self.w0.cols() != self.m {
            return Err(VvpError::DimensionMismatch(format!(
                "reference matrix {}x{} vs instance {}x{}",
                self.w0.rows(),
                self.w0.cols(),
                self.k,
                self.m
            )));
        }
        for (i, x) in self.inputs.iter().enumerate() {
            if x.dim() != self.m {
                return Err(VvpError::DimensionMismatch(format!(
                    "input {i} has dim {} != {}",
                    x.dim(),
                    self.m
                )));
            }
            if x.norm() > self.input_norm_bound + 1e-9 {
                return Err(VvpError::InvalidParameter(format!(
                    "input {i} has norm {} > bound {}",
                    x.norm(),
                    self.input_norm_bound
                )));
            }
        }
        Ok(())
    }

    /// Exact population loss: the average of `ℓ(Wx)` over the finite support.
    pub fn population_loss(&self, w: &StructuredMatrix) -> Result<f64> {
        if self.inputs.is_empty() {
            return Err(VvpError::InvalidParameter("empty input support".into()));
        }
        let mut sum = 0.0;
        for x in &self.inputs {
            sum += self.loss.value(&w.matvec(x)?);
        }
        Ok(sum / self.inputs.len() as f64)
    }

    /// Average loss over a sample given as an index multiset into the support.
    pub fn empirical_loss(&self, w: &StructuredMatrix, sample: &[usize]) -> Result<f64> {
        if sample.is_empty() {
            return Err(VvpError::InvalidParameter("empty sample".into()));
        }
        let mut sum = 0.0;
        for &i in sample {
            let x = self.inputs.get(i).ok_or(VvpError::IndexOutOfRange {
                index: i,
                dim: self.inputs.len(),
            })?;
            sum += self.loss.value(&w.matvec(x)?);
        }
        Ok(sum / sample.len() as f64)
    }
}

/// A convex loss `f(w, z)` with a subgradient oracle in `w`.
pub trait ScoLoss: Send + Sync {
    fn value(&self, w: &[f64], z: &[f64]) -> f64;
    fn subgradient(&self, w: &[f64], z: &[f64]) -> Vec<f64>;
}

/// Sample source for a stochastic convex problem: either an explicit finite
/// support with probabilities (population quantities evaluate exactly) or an
/// opaque seeded generator (Monte Carlo only).
#[derive(Clone)]
pub enum ScoSampler {
    Finite(Vec<(Vec<f64>, f64)>),
    Generator(Arc<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>),
}

/// Known optimum of a stochastic convex problem, used to report excess risk.
#[derive(Debug, Clone)]
pub struct ScoOptimum {
    pub w_star: Vec<f64>,
    pub f_star: f64,
}

/// A `d`-dimensional stochastic convex optimization problem over the unit
/// ball, with `|f| ≤ bound_b` on `‖w‖ ≤ domain_radius`.
///
/// `domain_radius ≥ √2` is required by the conversion to prediction, which
/// evaluates `f` on vectors of norm up to `√2`.
#[derive(Clone)]
pub struct ScoInstance {
    pub d: usize,
    pub loss: Arc<dyn ScoLoss>,
    pub bound_b: f64,
    pub domain_radius: f64,
    pub sampler: ScoSampler,
    pub optimum: Option<ScoOptimum>,
}

impl ScoInstance {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(VvpError::InvalidParameter("dimension must be ≥ 1".into()));
        }
        if self.bound_b <= 0.0 {
            return Err(VvpError::InvalidParameter(format!(
                "value bound must be positive, got {}",
                self.bound_b
            )));
        }
        if let ScoSampler::Finite(support) = &self.sampler {
            let total: f64 = support.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(VvpError::InvalidParameter(format!(
                    "support probabilities sum to {total}"
                )));
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &self.sampler {
            ScoSampler::Finite(support) => {
                let mut u: f64 = rng.gen();
                for (z, p) in support {
                    if u < *p {
                        return z.clone();
                    }
                    u -= p;
                }
                support.last().expect("nonempty support").0.clone()
            }
            ScoSampler::Generator(g) => g(rng),
        }
    }

    /// Exact population loss when the support is finite.
    pub fn population_exact(&self, w: &[f64]) -> Option<f64> {
        match &self.sampler {
            ScoSampler::Finite(support) => Some(
                support
                    .iter()
                    .map(|(z, p)| p * self.loss.value(w, z))
                    .sum(),
            ),
            ScoSampler::Generator(_) => None,
        }
    }

    /// Monte Carlo population loss estimate; returns `(mean, standard error)`.
    pub fn population_monte_carlo(&self, w: &[f64], samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..samples {
            let z = self.sample(&mut rng);
            let v = self.loss.value(w, &z);
            sum += v;
            sum_sq += v * v;
        }
        let n = samples as f64;
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    }

    /// Spot-checks `|f(w, z)| ≤ bound_b` on random `w` in the domain ball and
    /// sampled `z`; returns the largest |f| observed.
    pub fn spot_check_bound(&self, trials: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let w = random_ball_point(self.d, self.domain_radius, &mut rng);
            let z = self.sample(&mut rng);
            let v = self.loss.value(&w, &z).abs();
            worst = worst.max(v);
            if v > self.bound_b + 1e-9 {
                return Err(VvpError::InvalidParameter(format!(
                    "|f| = {v} exceeds declared bound {}",
                    self.bound_b
                )));
            }
        }
        Ok(worst)
    }
}

/// Training map of a learner: `(instance, sample indices, seed) → matrix`.
pub type TrainFn = Arc<dyn Fn(&VvpInstance, &[usize], u64) -> Result<StructuredMatrix> + Send + Sync>;
/// Advertised expected excess-risk rate `n → ε(n)`.
pub type RateFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// The interface any vector-valued prediction learner satisfies: a training
/// map and an advertised expected excess-risk rate `ε(n)`.
///
/// Feasibility is enforced here: whatever the inner learner returns is
/// projected onto the unit Frobenius ball around `w0` before being handed
/// back.
#[derive(Clone)]
pub struct LearnerContract {
    train: TrainFn,
    rate: RateFn,
}

impl LearnerContract {
    pub fn new(train: TrainFn, rate: RateFn) -> Self {
        Self { train, rate }
    }

    pub fn train(&self, inst: &VvpInstance, sample: &[usize], seed: u64) -> Result<StructuredMatrix> {
        let w = (self.train)(inst, sample, seed)?;
        w.project_onto_ball(&inst.w0, 1.0)
    }

    pub fn rate(&self, n: usize) -> f64 {
        (self.rate)(n)
    }
}

/// A uniformly random point in the ball of the given radius.
pub(crate) fn random_ball_point(d: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Rejection from the cube is fine at the small dimensions used here, but
    // normalize a Gaussian instead so it also works for d in the hundreds.
    let g: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let norm: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; d];
    }
    let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
    g.into_iter().map(|x| x * r / norm).collect()
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; avoids pulling in a distributions crate for one use.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Worst violation of `ℓ(λa + (1−λ)b) ≤ λℓ(a) + (1−λ)ℓ(b)` over random
/// segments with endpoints of the given coordinate scale. Nonpositive results
/// mean every sampled segment satisfied convexity.
pub fn spot_check_segment_convexity(
    loss: &dyn VectorLoss,
    k: usize,
    segments: usize,
    scale: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..segments {
        let a: Vec<f64> = (0..k).map(|_| rng.gen_range(-scale..scale)).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.gen_range(-scale..scale)).collect();
        let lambda: f64 = rng.gen();
        let mid: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
            .collect();
        let violation =
            loss.value(&mid) - (lambda * loss.value(&a) + (1.0 - lambda) * loss.value(&b));
        worst = worst.max(violation);
    }
    worst
}

/// Largest directional difference quotient of the loss over random base
/// points and random unit directions; an empirical Lipschitz constant.
pub fn measured_lipschitz(
    loss: &dyn VectorLoss,
    k: usize,
    trials: usize,
    scale: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let y: Vec<f64> = (0..k).map(|_| rng.gen_range(-scale..scale)).collect();
        let mut dir: Vec<f64> = (0..k).map(|_| gaussian(&mut rng)).collect();
        let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        for x in dir.iter_mut() {
            *x /= norm;
        }
        let shifted: Vec<f64> = y.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
        worst = worst.max((loss.value(&shifted) - loss.value(&y)).abs() / h);
    }
    worst
}
