//! Learning algorithms satisfying the learner contract: projected subgradient
//! SGD and a brute-force family ERM used as an oracle baseline.

use std::sync::Arc;

use crate::error::{Result, VvpError};
use crate::instance::{LearnerContract, VvpInstance};
use crate::matrix::StructuredMatrix;
use crate::shatter::ShatterInstance;

#[derive(Debug, Clone, Copy)]
pub enum StepSize {
    Constant(f64),
    /// `η_t = η₀/√t`.
    DecaySqrt(f64),
    /// `η = 1/(G_grad·√T)` with `G_grad = G·(input norm bound)`, the bound on
    /// the Frobenius norm of the rank-one stochastic gradients.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    FinalIterate,
    /// Uniform average of the query iterates `W_1..W_T` (with `W_1 = W0`).
    UniformAverage,
}

#[derive(Debug, Clone, Copy)]
pub struct SgdConfig {
    pub steps: usize,
    pub step: StepSize,
    pub radius: f64,
    pub averaging: Averaging,
}

impl SgdConfig {
    /// One pass over a sample of the given size with the default step size
    /// and uniform averaging.
    pub fn one_pass(n: usize) -> Self {
        Self {
            steps: n,
            step: StepSize::Auto,
            radius: 1.0,
            averaging: Averaging::UniformAverage,
        }
    }
}

/// Projected subgradient descent on the instance's loss over the Frobenius
/// ball of radius `cfg.radius` around `w0`.
///
/// Examples are visited in sample order, cycling when `steps` exceeds the
/// sample length. Each update is the rank-one step
/// `W ← Π(W − η·g·xᵀ)` with `g` a subgradient of the loss at `Wx`; only
/// columns touched by `x` are materialized. The seed is accepted for contract
/// compatibility but unused: the pass order is deterministic.
pub fn sgd_train(
    inst: &VvpInstance,
    sample: &[usize],
    cfg: &SgdConfig,
    _seed: u64,
) -> Result<StructuredMatrix> {
    if cfg.steps > 0 && sample.is_empty() {
        return Err(VvpError::InvalidParameter(
            "SGD needs a non-empty sample when steps > 0".into(),
        ));
    }
    for &i in sample {
        if i >= inst.n_inputs() {
            return Err(VvpError::IndexOutOfRange {
                index: i,
                dim: inst.n_inputs(),
            });
        }
    }
    let g_grad = inst.lipschitz_bound * inst.input_norm_bound;
    let auto_eta = 1.0 / (g_grad * (cfg.steps.max(1) as f64).sqrt());

    let zero = StructuredMatrix::zero(inst.k, inst.m);
    let mut delta = zero.clone();
    let mut average = zero.clone();

    for t in 1..=cfg.steps {
        let x = &inst.inputs[sample[(t - 1) % sample.len()]];
        if cfg.averaging == Averaging::UniformAverage {
            average.add_scaled_matrix(&delta, 1.0)?;
        }
        let mut yhat = inst.w0.matvec(x)?;
        for (a, b) in yhat.iter_mut().zip(delta.matvec(x)?) {
            *a += b;
        }
        let g = inst.loss.subgradient(&yhat);
        if g.iter().any(|v| *v != 0.0) {
            let eta = match cfg.step {
                StepSize::Constant(e) => e,
                StepSize::DecaySqrt(e0) => e0 / (t as f64).sqrt(),
                StepSize::Auto => auto_eta,
            };
            delta.add_scaled_outer(&g, x, -eta)?;
            let dist = delta.frobenius_distance(&zero)?;
            if dist > cfg.radius {
                delta.scale(cfg.radius / dist);
            }
        }
    }

    let out_delta = match cfg.averaging {
        Averaging::FinalIterate => delta,
        Averaging::UniformAverage => {
            if cfg.steps == 0 {
                delta
            } else {
                average.scale(1.0 / cfg.steps as f64);
                average
            }
        }
    };
    let mut w = inst.w0.clone();
    w.add_scaled_matrix(&out_delta, 1.0)?;
    Ok(w)
}

/// Exact empirical minimizer over the labeling family `{W'_y}` of a
/// shattering instance, by enumeration of all `2^n` labelings (`n ≤ 24`).
/// Ties break toward the lexicographically smallest labeling, which labels
/// every unsampled example 0.
pub fn family_erm(inst: &ShatterInstance, sample: &[usize]) -> Result<StructuredMatrix> {
    let n = inst.params().n_examples();
    if n > 24 {
        return Err(VvpError::TooLarge(format!(
            "family ERM enumerates 2^{n} labelings"
        )));
    }
    if sample.is_empty() {
        return Err(VvpError::InvalidParameter("empty sample".into()));
    }
    let mut counts = vec![0usize; n];
    for &i in sample {
        if i >= n {
            return Err(VvpError::IndexOutOfRange { index: i, dim: n });
        }
        counts[i] += 1;
    }
    // Per-example losses on the family are ±ε, so the empirical loss of y is
    // (ε/|S|)·Σ_t counts[t]·(2y_t − 1); scan labelings in lexicographic
    // order, first strict improvement wins.
    let eps = inst.params().margin;
    let total = sample.len() as f64;
    let mut best_value = f64::INFINITY;
    let mut best_rank = 0u64;
    for rank in 0..(1u64 << n) {
        let mut sum = 0.0;
        for (t, &c) in counts.iter().enumerate() {
            if c > 0 {
                let bit = rank >> (n - 1 - t) & 1 == 1;
                let sign = if bit { 1.0 } else { -1.0 };
                sum += c as f64 * sign;
            }
        }
        let value = eps * sum / total;
        if value < best_value {
            best_value = value;
            best_rank = rank;
        }
    }
    let labeling: Vec<bool> = (0..n).map(|t| best_rank >> (n - 1 - t) & 1 == 1).collect();
    inst.labeling_matrix(&labeling)
}

/// Contract wrapper for one-pass averaged projected SGD: trains with
/// `T = |sample|` steps and the default step size, and advertises
/// `ε(n) = 2·G·(input norm bound)/√n`.
pub fn projected_sgd_contract(loss_lipschitz: f64, input_norm_bound: f64) -> LearnerContract {
    LearnerContract::new(
        Arc::new(|inst: &VvpInstance, sample: &[usize], seed: u64| {
            sgd_train(inst, sample, &SgdConfig::one_pass(sample.len()), seed)
        }),
        Arc::new(move |n: usize| 2.0 * loss_lipschitz * input_norm_bound / (n as f64).sqrt()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::adversarial_erm;
    use crate::shatter::ShatterParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance() -> ShatterInstance {
        ShatterInstance::build(
            ShatterParams {
                d1: 8,
                d2: 16,
                examples_per_block: 4,
                blocks: 2,
                margin: 0.5,
                tau: 0.5,
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn zero_steps_returns_the_reference() {
        let inst = instance();
        let cfg = SgdConfig {
            steps: 0,
            step: StepSize::Auto,
            radius: 1.0,
            averaging: Averaging::FinalIterate,
        };
        let w = sgd_train(inst.vvp(), &[0, 1], &cfg, 0).unwrap();
        assert!(w.frobenius_distance(&inst.vvp().w0).unwrap() <= 1e-15);
    }

    #[test]
    fn iterates_stay_feasible() {
        let inst = instance();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sample: Vec<usize> = (0..32).map(|_| rng.gen_range(0..8)).collect();
        for averaging in [Averaging::FinalIterate, Averaging::UniformAverage] {
            let cfg = SgdConfig {
                steps: 32,
                step: StepSize::Constant(0.5),
                radius: 1.0,
                averaging,
            };
            let w = sgd_train(inst.vvp(), &sample, &cfg, 0).unwrap();
            assert!(w.frobenius_distance(&inst.vvp().w0).unwrap() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn family_erm_on_full_support_returns_all_zeros() {
        let inst = instance();
        let sample: Vec<usize> = (0..8).collect();
        let w = family_erm(&inst, &sample).unwrap();
        let zeros = inst.labeling_matrix(&[false; 8]).unwrap();
        assert!(w.frobenius_distance(&zeros).unwrap() <= 1e-15);
    }

    #[test]
    fn family_erm_reaches_the_global_empirical_minimum() {
        let inst = instance();
        let eps = inst.params().margin;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let sample: Vec<usize> = (0..5).map(|_| rng.gen_range(0..8)).collect();
            let w = family_erm(&inst, &sample).unwrap();
            let value = inst.vvp().empirical_loss(&w, &sample).unwrap();
            assert!((value + eps).abs() <= 1e-12);

            // Exhaustive optimality: no labeling beats it.
            let n = inst.params().n_examples();
            for mask in 0..(1u64 << n) {
                let y: Vec<bool> = (0..n).map(|t| mask >> t & 1 == 1).collect();
                let other = inst.labeling_matrix(&y).unwrap();
                let other_value = inst.vvp().empirical_loss(&other, &sample).unwrap();
                assert!(other_value >= value - 1e-12);
            }

            // Same empirical value as the adversarial construction.
            let adv = adversarial_erm(&inst, &sample).unwrap();
            assert!((adv.empirical_loss - value).abs() <= 1e-12);
        }
    }

    #[test]
    fn contract_rate_matches_the_advertised_formula() {
        let contract = projected_sgd_contract(2.0, 2f64.sqrt());
        let want = 2.0 * 2.0 * 2f64.sqrt() / 10.0;
        assert!((contract.rate(100) - want).abs() <= 1e-15);
    }

    #[test]
    fn sgd_excess_is_nonincreasing_in_sample_size() {
        use rayon::prelude::*;

        // 256 examples; the top family is random (256 vectors in R^120), the
        // bottom family falls back to the basis.
        let inst = ShatterInstance::build(
            ShatterParams {
                d1: 120,
                d2: 16,
                examples_per_block: 4,
                blocks: 64,
                margin: 0.125,
                tau: 0.5,
            },
            0,
        )
        .unwrap();
        let n_ex = inst.params().n_examples();
        assert_eq!(n_ex, 256);
        let w_star = inst.labeling_matrix(&vec![false; n_ex]).unwrap();
        let pop_star = inst.vvp().population_loss(&w_star).unwrap();

        let sizes = [32usize, 64, 128, 256];
        let seeds = 100u64;
        // Paired trials: each seed draws one 256-long index stream and every
        // sample size uses its prefix.
        let sums = (0..seeds)
            .into_par_iter()
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(91);
                rng.set_stream(seed);
                let stream: Vec<usize> = (0..n_ex).map(|_| rng.gen_range(0..n_ex)).collect();
                let mut per_size = [0.0f64; 4];
                for (slot, &n) in per_size.iter_mut().zip(&sizes) {
                    let w =
                        sgd_train(inst.vvp(), &stream[..n], &SgdConfig::one_pass(n), seed)
                            .unwrap();
                    *slot = inst.vvp().population_loss(&w).unwrap() - pop_star;
                }
                per_size
            })
            .reduce(
                || [0.0; 4],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += y;
                    }
                    a
                },
            );
        let means: Vec<f64> = sums.iter().map(|s| s / seeds as f64).collect();
        for pair in means.windows(2) {
            // Non-increasing up to Monte Carlo noise.
            assert!(pair[1] <= pair[0] + 0.02, "means {means:?}");
        }
    }
}
