//! The parameterized hard prediction instance that a unit Frobenius ball of
//! matrices shatters with an exact margin.
//!
//! The construction has two near-orthogonal vector families: `U` (dimension
//! `d1`, one vector per example) seeds the columns of the reference matrix
//! `W0`, and `Û` (dimension `d2`, one vector per block labeling in
//! `{0,1}^B`) encodes labelings. Examples come in `J` blocks of `B`:
//!
//! ```text
//! x_{i,j} = (e_{B(j−1)+i} + e_{BJ+j}) / √2,   i ∈ [B], j ∈ [J].
//! ```
//!
//! A labeling `y ∈ {0,1}^{BJ}` is realized by `W'_y = W0 + W_y`, where `W_y`
//! writes `ε·û_{y^{(j)}}` (padded below the top block) into column `BJ+j`.
//! Then `W'_y x_{i,j} = (ε/√2)(u'_{B(j−1)+i} + ũ_{y^{(j)}})`, with `u'` and
//! `ũ` the top/bottom paddings into `R^k`.
//!
//! The loss is a clamped maximum over candidate (block labeling, example)
//! pairs:
//!
//! ```text
//! ℓ(ŷ) = 2√8 · max( 3ε/√8 ,
//!                   max_{z ∈ {0,1}^B, z(r)=1, p ∈ [J]}
//!                       max(ε/√8, ⟨ũ_z, ŷ⟩) + max(ε/√8, ⟨u'_{B(p−1)+r}, ŷ⟩) )
//!        − 7ε .
//! ```
//!
//! With pairwise inner products at most `τ ≤ 1/2` in both families and an
//! injective `z ↦ û_z`, every cross term clamps at `ε/√8` and the loss on
//! `W'_y x_{i,j}` lands exactly on `+ε` (label 1: both self terms active,
//! `8ε − 7ε`) or `−ε` (label 0: at most one self term, `6ε − 7ε`, including
//! the all-zero block where only the constant branch survives).
//!
//! The candidate maximum is evaluated in `O(2^B·(B + d2) + B·J·d1)` by
//! precomputing, for each within-block position `r`, the best clamped top
//! term over blocks `p`; `verify_shattering` then brute-forces every
//! requested labeling against the `±ε` targets.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VvpError};
use crate::instance::{VectorLoss, VvpInstance};
use crate::matrix::{SparseVector, StructuredMatrix};
use crate::seed::derive_seed;
use crate::signsets::SignVectorSet;

/// Parameters of the shattering construction. The margin must satisfy
/// `ε·√J ≤ 1` so that every labeling matrix stays in the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShatterParams {
    pub d1: usize,
    pub d2: usize,
    /// Examples per block (`B`).
    #[serde(rename = "B")]
    pub examples_per_block: usize,
    /// Number of blocks (`J`).
    #[serde(rename = "J")]
    pub blocks: usize,
    /// Shattering margin `ε`.
    #[serde(rename = "eps")]
    pub margin: f64,
    /// Inner-product threshold for both vector families; the exact-margin
    /// argument needs `τ ≤ 1/2`.
    pub tau: f64,
}

impl ShatterParams {
    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 || self.examples_per_block == 0 || self.blocks == 0 {
            return Err(VvpError::InvalidParameter(
                "all shattering dimensions must be ≥ 1".into(),
            ));
        }
        if self.examples_per_block > 16 {
            return Err(VvpError::TooLarge(format!(
                "examples_per_block {} requires 2^{} block labelings",
                self.examples_per_block, self.examples_per_block
            )));
        }
        if !self.margin.is_finite() || self.margin <= 0.0 {
            return Err(VvpError::InvalidParameter(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(VvpError::InvalidParameter(format!(
                "threshold must lie in (0, 1], got {}",
                self.tau
            )));
        }
        let radius = self.margin * (self.blocks as f64).sqrt();
        if radius > 1.0 + 1e-9 {
            return Err(VvpError::InvalidParameter(format!(
                "margin·√blocks = {radius} exceeds the unit ball"
            )));
        }
        Ok(())
    }

    /// Output dimension `k = d1 + d2`.
    pub fn output_dim(&self) -> usize {
        self.d1 + self.d2
    }

    /// Input dimension `m = B·J + J`.
    pub fn input_dim(&self) -> usize {
        self.examples_per_block * self.blocks + self.blocks
    }

    /// Number of examples `n = B·J`.
    pub fn n_examples(&self) -> usize {
        self.examples_per_block * self.blocks
    }
}

struct ShatterCore {
    params: ShatterParams,
    u: SignVectorSet,
    uhat: SignVectorSet,
}

/// The clamped-max loss of the shattering construction.
pub struct ShatterLoss {
    core: Arc<ShatterCore>,
}

/// Result of one evaluation sweep over the candidate set.
struct LossScan {
    value: f64,
    /// `None` when the constant branch is (weakly) maximal.
    active: Option<ActiveBranch>,
    /// Smallest gap protecting the maximizer: distance to the runner-up
    /// candidate, to the constant branch, and to the two clamp kinks of the
    /// active branch. Infinite when there is no competitor.
    margin: f64,
}

struct ActiveBranch {
    z_index: usize,
    top_index: usize,
    bottom_dot: f64,
    top_active: bool,
}

#[derive(Clone, Copy)]
struct TopSlot {
    /// `max_p max(ε/√8, ⟨u'_{pB+r}, ŷ⟩)`.
    value: f64,
    /// First block index attaining `value`.
    arg_p: usize,
    /// Runner-up clamped value over `p`.
    second: f64,
    /// Largest raw (unclamped) top inner product over `p`.
    raw_best: f64,
}

impl ShatterLoss {
    fn scan(&self, yhat: &[f64]) -> LossScan {
        let p = &self.core.params;
        let eps = p.margin;
        let b = p.examples_per_block;
        let j = p.blocks;
        let d1 = p.d1;
        let sqrt8 = 8f64.sqrt();
        let clamp = eps / sqrt8;
        let constant = 3.0 * eps / sqrt8;

        let top = &yhat[..d1];
        let bottom = &yhat[d1..];

        let top_dots: Vec<f64> = (0..b * j)
            .map(|t| dot(self.core.u.vector(t), top))
            .collect();

        let mut slots = Vec::with_capacity(b);
        for r in 0..b {
            let mut slot = TopSlot {
                value: f64::NEG_INFINITY,
                arg_p: 0,
                second: f64::NEG_INFINITY,
                raw_best: f64::NEG_INFINITY,
            };
            for p_idx in 0..j {
                let raw = top_dots[p_idx * b + r];
                slot.raw_best = slot.raw_best.max(raw);
                let v = clamp.max(raw);
                if v > slot.value {
                    slot.second = slot.value;
                    slot.value = v;
                    slot.arg_p = p_idx;
                } else if v > slot.second {
                    slot.second = v;
                }
            }
            slots.push(slot);
        }

        let mut best_val = f64::NEG_INFINITY;
        let mut best: Option<(usize, usize, f64)> = None;
        let mut within_star = f64::NEG_INFINITY;
        let mut second_over_z = f64::NEG_INFINITY;

        for z_index in 1..(1usize << b) {
            let bdot = dot(self.core.uhat.vector(z_index), bottom);
            let term1 = clamp.max(bdot);
            let mut t2 = f64::NEG_INFINITY;
            let mut t2_second = f64::NEG_INFINITY;
            let mut r_star = 0usize;
            for (r, slot) in slots.iter().enumerate() {
                if z_index >> r & 1 == 1 {
                    if slot.value > t2 {
                        t2_second = t2;
                        t2 = slot.value;
                        r_star = r;
                    } else if slot.value > t2_second {
                        t2_second = slot.value;
                    }
                }
            }
            let cand = term1 + t2;
            if cand > best_val {
                second_over_z = second_over_z.max(best_val);
                best_val = cand;
                best = Some((z_index, r_star, bdot));
                // Runner-up candidates sharing this z: next-best position r,
                // or the next-best block p at the chosen position.
                within_star = term1 + t2_second.max(slots[r_star].second);
            } else {
                second_over_z = second_over_z.max(cand);
            }
        }

        let total = constant.max(best_val);
        let scale = 2.0 * sqrt8;
        let value = scale * total - 7.0 * eps;

        // Gaps are reported in loss-value units (candidate units times 2√8)
        // so callers can compare them against loss-level tolerances.
        if constant >= best_val {
            return LossScan {
                value,
                active: None,
                margin: scale * (constant - best_val),
            };
        }

        let (z_index, r_star, bdot) = best.expect("nonempty candidate set");
        let slot = slots[r_star];
        let runner_up = second_over_z.max(within_star).max(constant);
        let margin = scale
            * (best_val - runner_up)
                .min((bdot - clamp).abs())
                .min((slot.raw_best - clamp).abs());
        LossScan {
            value,
            active: Some(ActiveBranch {
                z_index,
                top_index: slot.arg_p * b + r_star,
                bottom_dot: bdot,
                top_active: slot.value > clamp,
            }),
            margin,
        }
    }

    /// Gap certifying that the loss is locally linear at `yhat`; points with
    /// a small gap sit near a kink and are rejected by finite-difference
    /// subgradient checks.
    pub fn branch_margin(&self, yhat: &[f64]) -> f64 {
        self.scan(yhat).margin
    }
}

impl VectorLoss for ShatterLoss {
    fn value(&self, yhat: &[f64]) -> f64 {
        self.scan(yhat).value
    }

    fn subgradient(&self, yhat: &[f64]) -> Vec<f64> {
        let p = &self.core.params;
        let scan = self.scan(yhat);
        let mut g = vec![0.0; p.output_dim()];
        let Some(branch) = scan.active else {
            return g;
        };
        let scale = 2.0 * 8f64.sqrt();
        let eps = p.margin;
        let clamp = eps / 8f64.sqrt();
        if branch.bottom_dot > clamp {
            let uh = self.core.uhat.vector(branch.z_index);
            for (gi, ui) in g[p.d1..].iter_mut().zip(uh) {
                *gi += scale * ui;
            }
        }
        if branch.top_active {
            let u = self.core.u.vector(branch.top_index);
            for (gi, ui) in g[..p.d1].iter_mut().zip(u) {
                *gi += scale * ui;
            }
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How `verify_shattering` enumerates labelings.
pub enum LabelingSet {
    /// All `2^n` labelings (guarded at `n ≤ 24`).
    All,
    /// `count` labelings drawn uniformly from the given seed.
    Random { count: usize, seed: u64 },
    Explicit(Vec<Vec<bool>>),
}

/// Outcome of a brute-force shattering check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShatterReport {
    pub pass: bool,
    /// Largest `|ℓ(W'_y x) − ε(2y−1)|` observed.
    pub worst_violation: f64,
    pub labelings_checked: u64,
    pub n_examples: usize,
    pub margin: f64,
    pub tolerance: f64,
}

/// The assembled instance: parameters, both vector families, and the
/// complete prediction problem.
pub struct ShatterInstance {
    core: Arc<ShatterCore>,
    loss: Arc<ShatterLoss>,
    vvp: VvpInstance,
}

impl ShatterInstance {
    /// Builds the instance, constructing both sign-vector families from the
    /// seed. Deterministic given `(params, seed)`.
    pub fn build(params: ShatterParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let u = SignVectorSet::build(
            params.d1,
            params.n_examples(),
            params.tau,
            64,
            derive_seed(seed, 1),
        )?;
        let uhat = SignVectorSet::build(
            params.d2,
            1usize << params.examples_per_block,
            params.tau,
            64,
            derive_seed(seed, 2),
        )?;
        Self::from_parts(params, u, uhat)
    }

    /// Assembles an instance from caller-supplied vector families. Shapes and
    /// counts are validated; pairwise certificates are not re-enforced, so
    /// this is also the entry point for deliberate counterexamples (the
    /// verifier reports any resulting margin violations).
    pub fn from_parts(params: ShatterParams, u: SignVectorSet, uhat: SignVectorSet) -> Result<Self> {
        params.validate()?;
        if u.dim() != params.d1 || u.len() != params.n_examples() {
            return Err(VvpError::DimensionMismatch(format!(
                "top family is {}×{}, expected {}×{}",
                u.len(),
                u.dim(),
                params.n_examples(),
                params.d1
            )));
        }
        if uhat.dim() != params.d2 || uhat.len() != (1usize << params.examples_per_block) {
            return Err(VvpError::DimensionMismatch(format!(
                "bottom family is {}×{}, expected {}×{}",
                uhat.len(),
                uhat.dim(),
                1usize << params.examples_per_block,
                params.d2
            )));
        }

        let k = params.output_dim();
        let m = params.input_dim();
        let n = params.n_examples();
        let b = params.examples_per_block;

        let mut w0 = StructuredMatrix::zero(k, m);
        for t in 0..n {
            let mut col = vec![0.0; k];
            for (ci, ui) in col[..params.d1].iter_mut().zip(u.vector(t)) {
                *ci = params.margin * ui;
            }
            w0.set_column(t, col)?;
        }

        let half_sqrt2 = 1.0 / 2f64.sqrt();
        let mut inputs = Vec::with_capacity(n);
        for t in 0..n {
            let block = t / b;
            inputs.push(SparseVector::new(
                m,
                vec![(t, half_sqrt2), (n + block, half_sqrt2)],
            )?);
        }

        let core = Arc::new(ShatterCore { params, u, uhat });
        let loss = Arc::new(ShatterLoss { core: core.clone() });
        let vvp = VvpInstance {
            k,
            m,
            w0,
            loss: loss.clone(),
            inputs,
            // The loss is a max of branches built from two clamped unit
            // directions, each scaled by 2√8, so its Lipschitz constant is
            // bounded by 2√8·√2 = 8.
            lipschitz_bound: 2.0 * 8f64.sqrt() * 2f64.sqrt(),
            input_norm_bound: 1.0,
        };
        let inst = Self { core, loss, vvp };
        inst.vvp.validate()?;
        Ok(inst)
    }

    pub fn params(&self) -> &ShatterParams {
        &self.core.params
    }

    pub fn u(&self) -> &SignVectorSet {
        &self.core.u
    }

    pub fn uhat(&self) -> &SignVectorSet {
        &self.core.uhat
    }

    pub fn vvp(&self) -> &VvpInstance {
        &self.vvp
    }

    pub fn loss(&self) -> &ShatterLoss {
        &self.loss
    }

    /// Index of `û_{y^{(j)}}` for block `j` of labeling `y`: bit `r` of the
    /// index is entry `r` of the block.
    pub fn block_label_index(&self, y: &[bool], block: usize) -> usize {
        let b = self.core.params.examples_per_block;
        let mut idx = 0usize;
        for r in 0..b {
            if y[block * b + r] {
                idx |= 1 << r;
            }
        }
        idx
    }

    /// The labeling matrix `W'_y = W0 + W_y`: column `BJ+j` carries
    /// `ε·û_{y^{(j)}}` in the bottom block. `‖W'_y − W0‖_F = ε√J`.
    pub fn labeling_matrix(&self, y: &[bool]) -> Result<StructuredMatrix> {
        let p = &self.core.params;
        let n = p.n_examples();
        if y.len() != n {
            return Err(VvpError::DimensionMismatch(format!(
                "labeling length {} != {n} examples",
                y.len()
            )));
        }
        let mut w = self.vvp.w0.clone();
        let k = p.output_dim();
        for j in 0..p.blocks {
            let uh = self.core.uhat.vector(self.block_label_index(y, j));
            let mut col = vec![0.0; k];
            for (ci, ui) in col[p.d1..].iter_mut().zip(uh) {
                *ci = p.margin * ui;
            }
            w.set_column(n + j, col)?;
        }
        Ok(w)
    }

    pub fn eval_loss(&self, yhat: &[f64]) -> f64 {
        self.loss.value(yhat)
    }

    pub fn loss_subgradient(&self, yhat: &[f64]) -> Vec<f64> {
        self.loss.subgradient(yhat)
    }

    /// Checks `ℓ(W'_y x_t) = ε·(2y_t − 1)` for every requested labeling and
    /// every example, to a `1e-9` tolerance. Violations are reported, not
    /// thrown.
    pub fn verify_shattering(&self, labelings: &LabelingSet) -> Result<ShatterReport> {
        let n = self.core.params.n_examples();
        let tolerance = 1e-9;
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
                        self.labeling_violation(&y)
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
                        self.labeling_violation(&y)
                    })
                    .reduce(|| 0.0, f64::max);
                (worst, *count as u64)
            }
            LabelingSet::Explicit(list) => {
                for y in list {
                    if y.len() != n {
                        return Err(VvpError::DimensionMismatch(format!(
                            "labeling length {} != {n}",
                            y.len()
                        )));
                    }
                }
                let worst = list
                    .par_iter()
                    .map(|y| self.labeling_violation(y))
                    .reduce(|| 0.0, f64::max);
                (worst, list.len() as u64)
            }
        };
        Ok(ShatterReport {
            pass: worst <= tolerance,
            worst_violation: worst,
            labelings_checked: checked,
            n_examples: n,
            margin: self.core.params.margin,
            tolerance,
        })
    }

    fn labeling_violation(&self, y: &[bool]) -> f64 {
        let eps = self.core.params.margin;
        let w = self.labeling_matrix(y).expect("validated labeling");
        let mut worst: f64 = 0.0;
        for (t, x) in self.vvp.inputs.iter().enumerate() {
            let yhat = w.matvec(x).expect("validated input");
            let value = self.loss.value(&yhat);
            let expected = if y[t] { eps } else { -eps };
            worst = worst.max((value - expected).abs());
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = InstanceRepr {
            params: self.core.params,
            u: self.core.u.clone(),
            uhat: self.core.uhat.clone(),
            w0: self.vvp.w0.clone(),
        };
        serde_json::to_string_pretty(&repr).map_err(|e| VvpError::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: InstanceRepr =
            serde_json::from_str(text).map_err(|e| VvpError::Serialization(e.to_string()))?;
        let inst = Self::from_parts(repr.params, repr.u, repr.uhat)?;
        let dist = inst.vvp.w0.frobenius_distance(&repr.w0)?;
        if dist > 1e-12 {
            return Err(VvpError::Serialization(format!(
                "stored reference matrix disagrees with the families (distance {dist})"
            )));
        }
        Ok(inst)
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    params: ShatterParams,
    #[serde(rename = "U")]
    u: SignVectorSet,
    #[serde(rename = "Uhat")]
    uhat: SignVectorSet,
    #[serde(rename = "W0")]
    w0: StructuredMatrix,
}
