//! Vector families consumed by the hard-instance constructions.
//!
//! Two families are needed: large sets of unit vectors in `R^d` whose
//! pairwise inner products stay below a threshold `τ` (built from random
//! `±1/√d` sign vectors, or from the standard basis when the requested count
//! fits in the dimension), and the embedding of `[a]` onto a quarter circle
//! in `R^2`, whose pairwise inner products are at most `1 − δ` with
//! `δ = 1 − cos(π/(2a))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VvpError};

/// An indexed family of unit vectors in `R^d` with a certified bound on all
/// pairwise inner products.
///
/// `certificate` is the maximum pairwise inner product actually achieved
/// (`-1.0` when the family has fewer than two vectors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignVectorSet {
    d: usize,
    tau: f64,
    vectors: Vec<Vec<f64>>,
    certificate: f64,
}

impl SignVectorSet {
    /// Builds a certified set of `count` unit vectors in `R^d` with pairwise
    /// inner products at most `tau`.
    ///
    /// When `count ≤ d` the first `count` standard basis vectors are used
    /// (exactly orthogonal, no randomness). Otherwise i.i.d. uniform `±1/√d`
    /// sign vectors are drawn and the whole set is resampled until the
    /// exhaustive pairwise check passes, up to `max_restarts` restarts.
    pub fn build(d: usize, count: usize, tau: f64, max_restarts: usize, seed: u64) -> Result<Self> {
        if d == 0 || count == 0 {
            return Err(VvpError::InvalidParameter(
                "sign set needs d ≥ 1 and count ≥ 1".into(),
            ));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(VvpError::InvalidParameter(format!(
                "threshold must lie in (0, 1], got {tau}"
            )));
        }

        if count <= d {
            let mut vectors = Vec::with_capacity(count);
            for i in 0..count {
                let mut v = vec![0.0; d];
                v[i] = 1.0;
                vectors.push(v);
            }
            let certificate = max_pairwise_inner_product(&vectors);
            return Ok(Self {
                d,
                tau,
                vectors,
                certificate,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d as f64).sqrt();
        let mut best_certificate = f64::INFINITY;
        for _attempt in 0..=max_restarts {
            let vectors: Vec<Vec<f64>> = (0..count)
                .map(|_| {
                    (0..d)
                        .map(|_| if rng.gen::<bool>() { scale } else { -scale })
                        .collect()
                })
                .collect();
            let certificate = max_pairwise_inner_product(&vectors);
            if certificate <= tau {
                return Ok(Self {
                    d,
                    tau,
                    vectors,
                    certificate,
                });
            }
            best_certificate = best_certificate.min(certificate);
        }
        Err(VvpError::SignSetConstruction {
            restarts: max_restarts,
            best_certificate,
            tau,
        })
    }

    /// Wraps caller-supplied vectors without enforcing the threshold; the
    /// certificate still records the true maximum pairwise inner product.
    /// Used for deserialized sets and deliberate counterexamples.
    pub fn from_vectors_unchecked(d: usize, tau: f64, vectors: Vec<Vec<f64>>) -> Result<Self> {
        for v in &vectors {
            if v.len() != d {
                return Err(VvpError::DimensionMismatch(format!(
                    "vector length {} != dimension {d}",
                    v.len()
                )));
            }
        }
        let certificate = max_pairwise_inner_product(&vectors);
        Ok(Self {
            d,
            tau,
            vectors,
            certificate,
        })
    }

    /// Exhaustive `O(count²·d)` re-verification, independent of how the set
    /// was constructed: all norms must be 1 within `1e-12` and all pairwise
    /// inner products at most `tau`. Returns the recomputed certificate.
    pub fn verify(&self) -> Result<f64> {
        for (i, v) in self.vectors.iter().enumerate() {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(VvpError::InvalidParameter(format!(
                    "vector {i} has norm {norm}, expected 1"
                )));
            }
        }
        let certificate = max_pairwise_inner_product(&self.vectors);
        if certificate > self.tau {
            return Err(VvpError::SignSetConstruction {
                restarts: 0,
                best_certificate: certificate,
                tau: self.tau,
            });
        }
        Ok(certificate)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn certificate(&self) -> f64 {
        self.certificate
    }

    pub fn vector(&self, index: usize) -> &[f64] {
        &self.vectors[index]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

fn max_pairwise_inner_product(vectors: &[Vec<f64>]) -> f64 {
    if vectors.len() < 2 {
        return -1.0;
    }
    (0..vectors.len() - 1)
        .into_par_iter()
        .map(|i| {
            let vi = &vectors[i];
            let mut worst = f64::NEG_INFINITY;
            for vj in &vectors[i + 1..] {
                let ip: f64 = vi.iter().zip(vj).map(|(a, b)| a * b).sum();
                if ip > worst {
                    worst = ip;
                }
            }
            worst
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// The quarter-circle embedding `j ↦ (sin(πj/(2a)), cos(πj/(2a)))` for
/// `j ∈ [a]`, with separation `δ = 1 − cos(π/(2a))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleEmbedding {
    a: usize,
    delta: f64,
}

impl CircleEmbedding {
    pub fn new(a: usize) -> Result<Self> {
        if a < 2 {
            return Err(VvpError::InvalidParameter(format!(
                "circle embedding needs a ≥ 2, got {a}"
            )));
        }
        let delta = 1.0 - (std::f64::consts::PI / (2.0 * a as f64)).cos();
        Ok(Self { a, delta })
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The embedded point for 1-based index `j ∈ [a]`; unit norm.
    pub fn point(&self, j: usize) -> Result<[f64; 2]> {
        if j == 0 || j > self.a {
            return Err(VvpError::IndexOutOfRange {
                index: j,
                dim: self.a,
            });
        }
        let angle = std::f64::consts::PI * j as f64 / (2.0 * self.a as f64);
        Ok([angle.sin(), angle.cos()])
    }
}

/// Embeds `u` into `R^total` at the given offset: zeros everywhere except
/// entries `offset..offset+u.len()`, which equal `u`. Norm preserved.
pub fn pad_embed(u: &[f64], total: usize, offset: usize) -> Result<Vec<f64>> {
    if offset + u.len() > total {
        return Err(VvpError::DimensionMismatch(format!(
            "offset {offset} + length {} exceeds total {total}",
            u.len()
        )));
    }
    let mut out = vec![0.0; total];
    out[offset..offset + u.len()].copy_from_slice(u);
    Ok(out)
}
