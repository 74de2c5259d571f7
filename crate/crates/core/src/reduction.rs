//! Black-box conversion from stochastic convex optimization to vector-valued
//! prediction.
//!
//! Given a `d`-dimensional problem with loss `f`, `|f| ≤ b`, and `2n` drawn
//! samples `z_1..z_{2n}`, the converted prediction problem has `m = 2n+1`
//! inputs and `k = d+2` outputs. Sample indices are encoded on a quarter
//! circle: the reference matrix writes `c·φ(i)` into the top two rows of
//! column `i`, inputs are `x_i = e_i + e_{2n+1}`, and the loss decodes the
//! index by maximizing over branches:
//!
//! ```text
//! ℓ(ŷ) = max_{j ∈ [2n]} ⟨(ŷ₁, ŷ₂), φ(j)⟩ + f((ŷ₃..ŷ_{d+2}), z_j).
//! ```
//!
//! With `c = 4b/δ` and `δ = 1 − cos(π/(4n))` the own-index branch wins by at
//! least `cδ − 2b = 2b`, so feeding the proof matrix (reference plus a last
//! column holding `w` below the top rows) through input `i` evaluates
//! `c + f(w, z_i)` exactly. Training any contract learner on the converted
//! instance and reading the last `d` entries of the final column back out
//! yields a solution whose excess risk is controlled by twice the learner's
//! rate plus `10/√n`.
//!
//! `f` must be defined on radius `√2`: the decoded argument is the bottom of
//! `(W − W0)(e_i + e_{2n+1})`, whose norm can reach `√2·‖W − W0‖_F`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, VvpError};
use crate::instance::{
    LearnerContract, ScoInstance, ScoLoss, ScoOptimum, ScoSampler, VectorLoss, VvpInstance,
};
use crate::matrix::{SparseVector, StructuredMatrix};
use crate::seed::derive_seed;
use crate::signsets::CircleEmbedding;

#[derive(Debug, Clone, Copy)]
pub struct ReductionConfig {
    /// Training-set size seen by the learner; the conversion consumes `2n`
    /// optimization samples.
    pub n: usize,
    /// Scale of the index encoding; defaults to `4b/δ`.
    pub c: Option<f64>,
    pub seed: u64,
}

/// The branch-max loss of a converted instance.
pub struct ReductionLoss {
    phi: Vec<[f64; 2]>,
    samples: Vec<Vec<f64>>,
    sco_loss: Arc<dyn ScoLoss>,
    d: usize,
}

impl ReductionLoss {
    pub fn new(
        embedding: &CircleEmbedding,
        samples: Vec<Vec<f64>>,
        sco_loss: Arc<dyn ScoLoss>,
        d: usize,
    ) -> Result<Self> {
        if samples.len() != embedding.a() {
            return Err(VvpError::DimensionMismatch(format!(
                "{} samples vs embedding of {} indices",
                samples.len(),
                embedding.a()
            )));
        }
        let phi = (1..=embedding.a())
            .map(|j| embedding.point(j))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            phi,
            samples,
            sco_loss,
            d,
        })
    }

    pub fn branches(&self) -> usize {
        self.phi.len()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Value of branch `j` (0-based) at `ŷ`.
    pub fn branch_value(&self, j: usize, yhat: &[f64]) -> f64 {
        let p = self.phi[j];
        yhat[0] * p[0] + yhat[1] * p[1] + self.sco_loss.value(&yhat[2..], &self.samples[j])
    }

    fn best_branch(&self, yhat: &[f64]) -> (usize, f64, f64) {
        let mut best = 0usize;
        let mut best_value = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for j in 0..self.phi.len() {
            let v = self.branch_value(j, yhat);
            if v > best_value {
                second = best_value;
                best_value = v;
                best = j;
            } else if v > second {
                second = v;
            }
        }
        (best, best_value, second)
    }

    /// Gap between the best and second-best branch; kinks of `f` itself are
    /// not tracked, so finite-difference checks should use smooth losses.
    pub fn branch_margin(&self, yhat: &[f64]) -> f64 {
        let (_, best, second) = self.best_branch(yhat);
        best - second
    }
}

impl VectorLoss for ReductionLoss {
    fn value(&self, yhat: &[f64]) -> f64 {
        self.best_branch(yhat).1
    }

    fn subgradient(&self, yhat: &[f64]) -> Vec<f64> {
        let (j, _, _) = self.best_branch(yhat);
        let mut g = vec![0.0; self.d + 2];
        g[0] = self.phi[j][0];
        g[1] = self.phi[j][1];
        let inner = self.sco_loss.subgradient(&yhat[2..], &self.samples[j]);
        g[2..].copy_from_slice(&inner);
        g
    }
}

/// A converted problem: the prediction instance plus the conversion
/// bookkeeping needed to decode solutions and report bounds.
pub struct ReductionProblem {
    pub vvp: VvpInstance,
    pub loss: Arc<ReductionLoss>,
    pub embedding: CircleEmbedding,
    pub c: f64,
    pub n: usize,
    pub d: usize,
}

/// Builds the prediction instance for `2n` samples of the given problem.
pub fn convert(
    sco: &ScoInstance,
    samples: &[Vec<f64>],
    cfg: &ReductionConfig,
) -> Result<ReductionProblem> {
    sco.validate()?;
    if samples.is_empty() || !samples.len().is_multiple_of(2) {
        return Err(VvpError::InvalidParameter(format!(
            "conversion needs an even, positive sample count, got {}",
            samples.len()
        )));
    }
    if samples.len() != 2 * cfg.n {
        return Err(VvpError::InvalidParameter(format!(
            "{} samples vs configured n = {}",
            samples.len(),
            cfg.n
        )));
    }
    let sqrt2 = 2f64.sqrt();
    if sco.domain_radius < sqrt2 - 1e-12 {
        return Err(VvpError::InvalidParameter(format!(
            "domain radius {} too small; the conversion evaluates f on radius √2",
            sco.domain_radius
        )));
    }
    let two_n = samples.len();
    let embedding = CircleEmbedding::new(two_n)?;
    let delta = embedding.delta();
    let c = cfg.c.unwrap_or(4.0 * sco.bound_b / delta);
    if c * delta - 2.0 * sco.bound_b <= 0.0 {
        return Err(VvpError::InvalidParameter(format!(
            "c·δ − 2b = {} is not strictly positive; index decoding would fail",
            c * delta - 2.0 * sco.bound_b
        )));
    }

    let k = sco.d + 2;
    let m = two_n + 1;
    let mut w0 = StructuredMatrix::zero(k, m);
    for i in 0..two_n {
        let p = embedding.point(i + 1)?;
        let mut col = vec![0.0; k];
        col[0] = c * p[0];
        col[1] = c * p[1];
        w0.set_column(i, col)?;
    }
    let inputs = (0..two_n)
        .map(|i| SparseVector::new(m, vec![(i, 1.0), (two_n, 1.0)]))
        .collect::<Result<Vec<_>>>()?;

    let loss = Arc::new(ReductionLoss::new(
        &embedding,
        samples.to_vec(),
        sco.loss.clone(),
        sco.d,
    )?);
    let vvp = VvpInstance {
        k,
        m,
        w0,
        loss: loss.clone(),
        inputs,
        lipschitz_bound: 2.0,
        input_norm_bound: sqrt2,
    };
    vvp.validate()?;
    Ok(ReductionProblem {
        vvp,
        loss,
        embedding,
        c,
        n: cfg.n,
        d: sco.d,
    })
}

/// The feasible matrix realizing a candidate solution `w`: the reference
/// matrix plus a final column holding `w` below the top two rows. Feeding it
/// input `i` evaluates `c + f(w, z_i)` when the separation holds.
pub fn proof_matrix(prob: &ReductionProblem, w: &[f64]) -> Result<StructuredMatrix> {
    if w.len() != prob.d {
        return Err(VvpError::DimensionMismatch(format!(
            "solution length {} != dimension {}",
            w.len(),
            prob.d
        )));
    }
    let mut out = prob.vvp.w0.clone();
    let mut col = vec![0.0; prob.d + 2];
    col[2..].copy_from_slice(w);
    out.set_column(prob.vvp.m - 1, col)?;
    Ok(out)
}

/// Reads the solution out of a trained matrix: the last `d` entries of the
/// final column. Its norm is at most `‖W − W0‖_F` because that column of the
/// reference matrix is zero.
pub fn extract(w: &StructuredMatrix, d: usize) -> Result<Vec<f64>> {
    if w.rows() != d + 2 {
        return Err(VvpError::DimensionMismatch(format!(
            "{} rows vs dimension {} + 2",
            w.rows(),
            d
        )));
    }
    let last = w.cols() - 1;
    Ok(match w.column(last) {
        Some(col) => col[2..].to_vec(),
        None => vec![0.0; d],
    })
}

/// Decode-identity diagnostics for a candidate solution: the worst deviation
/// of `ℓ(W̃x_i)` from `c + f(w, z_i)` and the least margin by which the
/// own-index branch beats the others.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecodeReport {
    pub max_deviation: f64,
    pub min_separation: f64,
}

pub fn decode_report(prob: &ReductionProblem, w: &[f64]) -> Result<DecodeReport> {
    let tilde = proof_matrix(prob, w)?;
    let mut max_deviation: f64 = 0.0;
    let mut min_separation = f64::INFINITY;
    for (i, x) in prob.vvp.inputs.iter().enumerate() {
        let yhat = tilde.matvec(x)?;
        let value = prob.loss.value(&yhat);
        let expected = prob.c + prob.loss.sco_loss.value(w, &prob.loss.samples[i]);
        max_deviation = max_deviation.max((value - expected).abs());
        let own = prob.loss.branch_value(i, &yhat);
        let mut best_other = f64::NEG_INFINITY;
        for j in 0..prob.loss.branches() {
            if j != i {
                best_other = best_other.max(prob.loss.branch_value(j, &yhat));
            }
        }
        min_separation = min_separation.min(own - best_other);
    }
    Ok(DecodeReport {
        max_deviation,
        min_separation,
    })
}

/// One conversion run.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionRow {
    pub seed: u64,
    pub n: usize,
    pub c: f64,
    pub delta: f64,
    /// The learner's advertised rate `ε(n)`.
    pub vvp_rate_eps_n: f64,
    pub measured_excess: f64,
    /// `2ε(n) + 10/√n`.
    pub bound: f64,
}

/// Runs the full pipeline once per seed: draw `2n` samples, convert, draw the
/// learner's training inputs i.i.d. from the converted distribution, train,
/// extract, and evaluate the recovered solution (exactly on finite supports,
/// otherwise by `10^5`-sample Monte Carlo).
pub fn run_reduction(
    sco: &ScoInstance,
    learner: &LearnerContract,
    cfg: &ReductionConfig,
    seeds: &[u64],
) -> Result<Vec<ReductionRow>> {
    let optimum = sco.optimum.as_ref().ok_or_else(|| {
        VvpError::InvalidParameter("excess reporting needs a known optimum".into())
    })?;
    if cfg.n == 0 {
        return Err(VvpError::InvalidParameter("n must be ≥ 1".into()));
    }
    seeds
        .par_iter()
        .map(|&seed| {
            let mut sample_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            let samples: Vec<Vec<f64>> =
                (0..2 * cfg.n).map(|_| sco.sample(&mut sample_rng)).collect();
            let prob = convert(sco, &samples, &ReductionConfig { seed, ..*cfg })?;

            let mut draw_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
            let train_sample: Vec<usize> = (0..cfg.n)
                .map(|_| draw_rng.gen_range(0..2 * cfg.n))
                .collect();
            let trained = learner.train(&prob.vvp, &train_sample, derive_seed(seed, 3))?;
            let w_out = extract(&trained, sco.d)?;

            let f_out = match sco.population_exact(&w_out) {
                Some(v) => v,
                None => sco.population_monte_carlo(&w_out, 100_000, derive_seed(seed, 4)).0,
            };
            let rate = learner.rate(cfg.n);
            Ok(ReductionRow {
                seed,
                n: cfg.n,
                c: prob.c,
                delta: prob.embedding.delta(),
                vvp_rate_eps_n: rate,
                measured_excess: f_out - optimum.f_star,
                bound: 2.0 * rate + 10.0 / (cfg.n as f64).sqrt(),
            })
        })
        .collect()
}

struct LinearLoss;

impl ScoLoss for LinearLoss {
    fn value(&self, w: &[f64], z: &[f64]) -> f64 {
        w.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    fn subgradient(&self, _w: &[f64], z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
}

struct PointDistanceLoss;

impl ScoLoss for PointDistanceLoss {
    fn value(&self, w: &[f64], z: &[f64]) -> f64 {
        w.iter()
            .zip(z)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn subgradient(&self, w: &[f64], z: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = w.iter().zip(z).map(|(a, b)| a - b).collect();
        let norm: f64 = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; w.len()];
        }
        diff.into_iter().map(|v| v / norm).collect()
    }
}

struct CoordinateMedianLoss;

impl ScoLoss for CoordinateMedianLoss {
    fn value(&self, w: &[f64], z: &[f64]) -> f64 {
        (w[0] - z[0]).abs()
    }

    fn subgradient(&self, w: &[f64], z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        let diff = w[0] - z[0];
        if diff != 0.0 {
            g[0] = diff.signum();
        }
        g
    }
}

/// `f(w, z) = ⟨w, z⟩` with `z = e₁` w.p. 3/4 and `−e₁` w.p. 1/4, so
/// `F(w) = w₁/2`, minimized at `w* = −e₁` with `F(w*) = −1/2`.
pub fn linear_problem(d: usize) -> Result<ScoInstance> {
    if d == 0 {
        return Err(VvpError::InvalidParameter("dimension must be ≥ 1".into()));
    }
    let mut plus = vec![0.0; d];
    plus[0] = 1.0;
    let mut minus = vec![0.0; d];
    minus[0] = -1.0;
    let mut w_star = vec![0.0; d];
    w_star[0] = -1.0;
    Ok(ScoInstance {
        d,
        loss: Arc::new(LinearLoss),
        bound_b: 2f64.sqrt(),
        domain_radius: 2f64.sqrt(),
        sampler: ScoSampler::Finite(vec![(plus, 0.75), (minus, 0.25)]),
        optimum: Some(ScoOptimum {
            w_star,
            f_star: -0.5,
        }),
    })
}

/// `f(w, z) = ‖w − z‖` with a single support point `z₀` of unit norm, so
/// `w* = z₀` and `F(w*) = 0`.
pub fn point_distance_problem(d: usize) -> Result<ScoInstance> {
    if d == 0 {
        return Err(VvpError::InvalidParameter("dimension must be ≥ 1".into()));
    }
    let mut z0 = vec![0.0; d];
    if d == 1 {
        z0[0] = 0.6;
    } else {
        z0[0] = 0.6;
        z0[1] = 0.8;
    }
    Ok(ScoInstance {
        d,
        loss: Arc::new(PointDistanceLoss),
        bound_b: 1.0 + 2f64.sqrt(),
        domain_radius: 2f64.sqrt(),
        sampler: ScoSampler::Finite(vec![(z0.clone(), 1.0)]),
        optimum: Some(ScoOptimum {
            w_star: z0,
            f_star: 0.0,
        }),
    })
}

/// `f(w, z) = |w₁ − z|` with `z ~ Bernoulli(p)`; for `p > 1/2` the optimum
/// pins `w₁ = 1` with value `1 − p`, for `p < 1/2` it pins `w₁ = 0` with
/// value `p`.
pub fn coordinate_median_problem(d: usize, p: f64) -> Result<ScoInstance> {
    if d == 0 {
        return Err(VvpError::InvalidParameter("dimension must be ≥ 1".into()));
    }
    if !(0.0..=1.0).contains(&p) || p == 0.5 {
        return Err(VvpError::InvalidParameter(format!(
            "Bernoulli parameter must lie in [0,1] \\ {{1/2}}, got {p}"
        )));
    }
    let mut w_star = vec![0.0; d];
    let f_star = if p > 0.5 {
        w_star[0] = 1.0;
        1.0 - p
    } else {
        p
    };
    Ok(ScoInstance {
        d,
        loss: Arc::new(CoordinateMedianLoss),
        bound_b: 1.0 + 2f64.sqrt(),
        domain_radius: 2f64.sqrt(),
        sampler: ScoSampler::Finite(vec![(vec![1.0], p), (vec![0.0], 1.0 - p)]),
        optimum: Some(ScoOptimum { w_star, f_star }),
    })
}

/// Test-problem library keyed by name: `linear`, `point_distance`
/// (`w* = z₀`), or `coordinate_median` (Bernoulli 3/4).
pub fn sco_library(name: &str, d: usize) -> Result<ScoInstance> {
    match name.replace('-', "_").as_str() {
        "linear" => linear_problem(d),
        "point_distance" => point_distance_problem(d),
        "coordinate_median" => coordinate_median_problem(d, 0.75),
        other => Err(VvpError::InvalidParameter(format!(
            "unknown problem {other:?}; expected linear, point_distance, or coordinate_median"
        ))),
    }
}
