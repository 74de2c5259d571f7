//! The bad empirical risk minimizer and the population-gap experiment.
//!
//! Given a training sample from a shattering instance, labeling every sampled
//! example 0 and every unsampled example 1 produces a matrix whose empirical
//! loss is the global minimum `−ε` while its population loss exceeds the
//! optimum by `2ε·(unseen fraction)`. The constant branch of the loss floors
//! every value at `−ε`, so this labeling matrix is a true ERM over the whole
//! Frobenius ball, not merely over the labeling family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, VvpError};
use crate::instance::{VectorLoss, VvpInstance};
use crate::matrix::{SparseVector, StructuredMatrix};
use crate::shatter::{LabelingSet, ShatterInstance, ShatterReport};

/// The adversarial ERM for one sample: its labeling, matrix, and the exact
/// empirical/population quantities.
#[derive(Debug, Clone)]
pub struct AdversaryResult {
    /// 1 on unsampled examples, 0 on sampled ones.
    pub labeling: Vec<bool>,
    pub erm_matrix: StructuredMatrix,
    pub empirical_loss: f64,
    /// `L(W_S) − L(W*)`, where `W*` realizes the all-zeros labeling.
    pub population_excess: f64,
    pub unseen_fraction: f64,
}

/// Builds the adversarial labeling for the sample and measures its exact
/// empirical loss (`−ε`) and population excess (`2ε·unseen_fraction`).
pub fn adversarial_erm(inst: &ShatterInstance, sample: &[usize]) -> Result<AdversaryResult> {
    let n = inst.params().n_examples();
    if sample.is_empty() {
        return Err(VvpError::InvalidParameter("empty sample".into()));
    }
    let mut seen = vec![false; n];
    for &i in sample {
        if i >= n {
            return Err(VvpError::IndexOutOfRange { index: i, dim: n });
        }
        seen[i] = true;
    }
    let labeling: Vec<bool> = seen.iter().map(|s| !s).collect();
    let erm_matrix = inst.labeling_matrix(&labeling)?;
    let empirical_loss = inst.vvp().empirical_loss(&erm_matrix, sample)?;
    let w_star = inst.labeling_matrix(&vec![false; n])?;
    let population_excess = inst.vvp().population_loss(&erm_matrix)?
        - inst.vvp().population_loss(&w_star)?;
    let unseen = labeling.iter().filter(|b| **b).count();
    Ok(AdversaryResult {
        labeling,
        erm_matrix,
        empirical_loss,
        population_excess,
        unseen_fraction: unseen as f64 / n as f64,
    })
}

/// The scalar shattering construction: `m ≈ 1/ε²` basis examples, a loss
/// that reads the first output coordinate, and labeling matrices whose first
/// row is the label vector in `{±ε}^m`.
pub struct ScalarInstance {
    vvp: VvpInstance,
    m: usize,
    margin: f64,
}

struct FirstCoordinateLoss;

impl VectorLoss for FirstCoordinateLoss {
    fn value(&self, yhat: &[f64]) -> f64 {
        yhat[0]
    }

    fn subgradient(&self, yhat: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; yhat.len()];
        g[0] = 1.0;
        g
    }
}

/// Builds the scalar instance for the given margin. `m = ⌈1/ε²⌉`, reduced by
/// one when rounding up would push `‖W_y‖_F = ε√m` past the unit ball.
/// Rows `2..k` are zero; the loss reads only the first coordinate, so any
/// `k ≥ 1` works.
pub fn scalar_instance(eps: f64, k: usize) -> Result<ScalarInstance> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(VvpError::InvalidParameter(format!(
            "margin must lie in (0, 1], got {eps}"
        )));
    }
    if k == 0 {
        return Err(VvpError::InvalidParameter("output dim must be ≥ 1".into()));
    }
    let mut m = (1.0 / (eps * eps)).ceil() as usize;
    if eps * (m as f64).sqrt() > 1.0 + 1e-9 {
        m -= 1;
    }
    if m == 0 {
        return Err(VvpError::InvalidParameter(format!(
            "margin {eps} leaves no feasible example count"
        )));
    }
    let inputs = (0..m)
        .map(|i| SparseVector::basis(m, i))
        .collect::<Result<Vec<_>>>()?;
    let vvp = VvpInstance {
        k,
        m,
        w0: StructuredMatrix::zero(k, m),
        loss: std::sync::Arc::new(FirstCoordinateLoss),
        inputs,
        lipschitz_bound: 1.0,
        input_norm_bound: 1.0,
    };
    Ok(ScalarInstance {
        vvp,
        m,
        margin: eps,
    })
}

impl ScalarInstance {
    pub fn vvp(&self) -> &VvpInstance {
        &self.vvp
    }

    pub fn n_examples(&self) -> usize {
        self.m
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// `W_y`: first row is `ε·(2y − 1)`, all other rows zero.
    pub fn labeling_matrix(&self, y: &[bool]) -> Result<StructuredMatrix> {
        if y.len() != self.m {
            return Err(VvpError::DimensionMismatch(format!(
                "labeling length {} != {} examples",
                y.len(),
                self.m
            )));
        }
        let mut w = StructuredMatrix::zero(self.vvp.k, self.m);
        for (i, &bit) in y.iter().enumerate() {
            let mut col = vec![0.0; self.vvp.k];
            col[0] = if bit { self.margin } else { -self.margin };
            w.set_column(i, col)?;
        }
        Ok(w)
    }

    /// Exhaustive margin check mirroring the block construction's verifier:
    /// `ℓ(W_y x_i)` must equal `y_i ∈ {±ε}` for every requested labeling.
    pub fn verify_shattering(&self, labelings: &LabelingSet) -> Result<ShatterReport> {
        let n = self.m;
        let tolerance = 1e-9;
        let check = |y: &[bool]| -> f64 {
            let w = self.labeling_matrix(y).expect("validated labeling");
            let mut worst: f64 = 0.0;
            for (i, x) in self.vvp.inputs.iter().enumerate() {
                let v = self.vvp.loss.value(&w.matvec(x).expect("validated input"));
                let expected = if y[i] { self.margin } else { -self.margin };
                worst = worst.max((v - expected).abs());
            }
            worst
        };
        let (worst, checked) = match labelings {
            LabelingSet::All => {
                if n > 24 {
                    return Err(VvpError::TooLarge(format!(
                        "exhaustive verification over 2^{n} labelings"
                    )));
                }
                let total = 1u64 << n;
                let worst = (0..total)
                    .into_par_iter()
                    .map(|mask| {
                        let y: Vec<bool> = (0..n).map(|t| mask >> t & 1 == 1).collect();
                        check(&y)
                    })
                    .reduce(|| 0.0, f64::max);
                (worst, total)
            }
            LabelingSet::Random { count, seed } => {
                let worst = (0..*count as u64)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                        rng.set_stream(i);
                        let y: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
                        check(&y)
                    })
                    .reduce(|| 0.0, f64::max);
                (worst, *count as u64)
            }
            LabelingSet::Explicit(list) => {
                let worst = list.iter().map(|y| check(y)).fold(0.0, f64::max);
                (worst, list.len() as u64)
            }
        };
        Ok(ShatterReport {
            pass: worst <= tolerance,
            worst_violation: worst,
            labelings_checked: checked,
            n_examples: n,
            margin: self.margin,
            tolerance,
        })
    }
}

/// One trial of the ERM gap experiment.
#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub trial: usize,
    pub unseen_fraction: f64,
    pub empirical_loss: f64,
    pub excess: f64,
}

/// Runs `trials` independent draws of `sample_size` examples i.i.d. uniform
/// with replacement, building the adversarial ERM for each. Trial `t` uses
/// the ChaCha stream `(seed, t)`, so rows are reproducible bit for bit.
pub fn gap_experiment(
    inst: &ShatterInstance,
    sample_size: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<GapRow>> {
    let n = inst.params().n_examples();
    if sample_size == 0 || sample_size > n {
        return Err(VvpError::InvalidParameter(format!(
            "sample size {sample_size} must lie in 1..={n}"
        )));
    }
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let sample: Vec<usize> = (0..sample_size).map(|_| rng.gen_range(0..n)).collect();
            let result = adversarial_erm(inst, &sample)?;
            Ok(GapRow {
                trial,
                unseen_fraction: result.unseen_fraction,
                empirical_loss: result.empirical_loss,
                excess: result.population_excess,
            })
        })
        .collect()
}
