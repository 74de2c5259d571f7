//! Numerical checks of the uniform-convergence upper-bound machinery.
//!
//! The empirical Rademacher complexity of a function class `H` on a sample
//! `x_1..x_n` is
//!
//! ```text
//! R_S(H) = E_σ [ sup_{h ∈ H} (1/n) Σ_i σ_i h(x_i) ],   σ_i i.i.d. ±1,
//! ```
//!
//! and for a `G`-Lipschitz convex loss over the unit Frobenius ball the class
//! of predictors satisfies `E sup (L − L̂) ≤ 2·R_S ≤ 2√2·G·√k/√n`. The
//! shattering family is a subclass of that ball, so its (efficiently
//! computable) complexity must stay below the class-level bound; a violation
//! would falsify the bound itself.
//!
//! On the labeling family the per-example losses are `±ε` and every labeling
//! is realizable, so the per-draw supremum decouples across examples:
//! grouping the signs hitting support index `t` into `s_t = Σ σ_i`, the
//! supremum equals `(ε/n)·Σ_t |s_t|` — `O(n)` instead of `2^n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, VvpError};
use crate::instance::{measured_lipschitz, VvpInstance};
use crate::matrix::StructuredMatrix;
use crate::seed::derive_seed;
use crate::shatter::ShatterInstance;

/// A Monte Carlo Rademacher complexity estimate, checked against the
/// class-level bound `2√2·G·√k/√n` (with `G` the measured Lipschitz constant
/// of the instance loss).
#[derive(Debug, Clone, Serialize)]
pub struct RademacherEstimate {
    pub value: f64,
    pub trials: usize,
    pub standard_error: f64,
    pub bound: f64,
    pub sample_size: usize,
}

impl RademacherEstimate {
    fn checked(value: f64, trials: usize, standard_error: f64, bound: f64, n: usize) -> Result<Self> {
        if value > bound + 3.0 * standard_error {
            return Err(VvpError::BoundCheckFailed {
                value,
                bound,
                standard_error,
            });
        }
        Ok(Self {
            value,
            trials,
            standard_error,
            bound,
            sample_size: n,
        })
    }
}

fn summarize(sups: &[f64]) -> (f64, f64) {
    let n = sups.len() as f64;
    let mean = sups.iter().sum::<f64>() / n;
    let var = sups.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, (var / n).sqrt())
}

fn class_bound(inst: &VvpInstance, n: usize, seed: u64) -> f64 {
    let g = measured_lipschitz(inst.loss.as_ref(), inst.k, 2_048, 1.0, seed);
    2.0 * 2f64.sqrt() * g * (inst.k as f64).sqrt() / (n as f64).sqrt()
}

/// Monte Carlo Rademacher complexity of a shattering instance's labeling
/// family on the given sample (an index multiset into the support). Each
/// draw's supremum is computed exactly via the per-example decomposition.
pub fn rademacher_estimate(
    inst: &ShatterInstance,
    sample: &[usize],
    trials: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    let n_examples = inst.params().n_examples();
    validate_sample(sample, n_examples)?;
    if trials == 0 {
        return Err(VvpError::InvalidParameter("trials must be ≥ 1".into()));
    }
    let n = sample.len();
    let eps = inst.params().margin;
    let sups: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(draw);
            let mut signed = vec![0.0f64; n_examples];
            for &idx in sample {
                signed[idx] += if rng.gen::<bool>() { 1.0 } else { -1.0 };
            }
            (eps / n as f64) * signed.iter().map(|s| s.abs()).sum::<f64>()
        })
        .collect();
    let (mean, se) = summarize(&sups);
    let bound = class_bound(inst.vvp(), n, derive_seed(seed, 0xB0D));
    RademacherEstimate::checked(mean, trials, se, bound, n)
}

/// Monte Carlo Rademacher complexity of an explicit finite family of
/// matrices; used when the family is supplied rather than enumerable.
pub fn rademacher_estimate_matrices(
    inst: &VvpInstance,
    family: &[StructuredMatrix],
    sample: &[usize],
    trials: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    validate_sample(sample, inst.n_inputs())?;
    if family.is_empty() || trials == 0 {
        return Err(VvpError::InvalidParameter(
            "need a nonempty family and trials ≥ 1".into(),
        ));
    }
    let n = sample.len();
    // Loss table: rows indexed by family member, columns by sample position.
    let mut table = Vec::with_capacity(family.len());
    for w in family {
        let mut row = Vec::with_capacity(n);
        for &idx in sample {
            row.push(inst.loss.value(&w.matvec(&inst.inputs[idx])?));
        }
        table.push(row);
    }
    let sups: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(draw);
            let sigma: Vec<f64> = (0..n)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            table
                .iter()
                .map(|row| {
                    row.iter().zip(&sigma).map(|(l, s)| l * s).sum::<f64>() / n as f64
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let (mean, se) = summarize(&sups);
    let bound = class_bound(inst, n, derive_seed(seed, 0xB0D));
    RademacherEstimate::checked(mean, trials, se, bound, n)
}

/// Exact supremum over the labeling family of `L(W'_y) − L̂(W'_y)` for the
/// given sample, in closed form: the per-example gap weights are
/// `ε·(1/N − count_t/n)` and the optimal labeling picks the favorable sign
/// for each, so the supremum is the sum of their absolute values.
pub fn sup_generalization_gap(inst: &ShatterInstance, sample: &[usize]) -> Result<f64> {
    let n_examples = inst.params().n_examples();
    validate_sample(sample, n_examples)?;
    let weights = gap_weights(inst, sample);
    Ok(weights.iter().map(|g| g.abs()).sum())
}

/// The per-example contributions `ε·(1/N − count_t/n)`; exposed so the
/// brute-force oracle can enumerate labelings over identical terms.
pub fn gap_weights(inst: &ShatterInstance, sample: &[usize]) -> Vec<f64> {
    let n_examples = inst.params().n_examples();
    let eps = inst.params().margin;
    let mut counts = vec![0usize; n_examples];
    for &i in sample {
        counts[i] += 1;
    }
    counts
        .iter()
        .map(|&c| eps * (1.0 / n_examples as f64 - c as f64 / sample.len() as f64))
        .collect()
}

fn validate_sample(sample: &[usize], n_examples: usize) -> Result<()> {
    if sample.is_empty() {
        return Err(VvpError::InvalidParameter("empty sample".into()));
    }
    for &i in sample {
        if i >= n_examples {
            return Err(VvpError::IndexOutOfRange {
                index: i,
                dim: n_examples,
            });
        }
    }
    Ok(())
}
