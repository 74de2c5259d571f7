//! Column-sparse matrices and Frobenius-ball geometry.
//!
//! Every matrix used by the constructions (`W0`, the labeling matrices, the
//! conversion reference) is dense in only a handful of columns, so a matrix
//! is stored as its shape plus a map from column index to an explicit dense
//! column; absent columns are zero. Inputs are sparse combinations of basis
//! vectors, so matrix–vector products touch only the referenced columns.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, VvpError};

/// A sparse vector: a fixed dimension and a sorted list of `(index, value)`
/// entries with distinct indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(i, _)| i);
        for window in entries.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(VvpError::InvalidParameter(format!(
                    "duplicate sparse index {}",
                    window[0].0
                )));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= dim {
                return Err(VvpError::IndexOutOfRange { index: i, dim });
            }
        }
        Ok(Self { dim, entries })
    }

    /// The standard basis vector `e_index` (0-based).
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        Self::new(dim, vec![(index, 1.0)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// A `k × m` matrix stored as explicit dense columns over a zero background.
///
/// Serializes as `{"k":…,"m":…,"cols":{"<index>":[…]}}` with 1-based column
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMatrix {
    rows: usize,
    cols: usize,
    columns: BTreeMap<usize, Vec<f64>>,
}

impl StructuredMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            columns: BTreeMap::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Installs an explicit column (0-based index).
    pub fn set_column(&mut self, index: usize, column: Vec<f64>) -> Result<()> {
        if index >= self.cols {
            return Err(VvpError::IndexOutOfRange {
                index,
                dim: self.cols,
            });
        }
        if column.len() != self.rows {
            return Err(VvpError::DimensionMismatch(format!(
                "column length {} != {} rows",
                column.len(),
                self.rows
            )));
        }
        self.columns.insert(index, column);
        Ok(())
    }

    /// The explicit column at `index`, or `None` if it is an implicit zero.
    pub fn column(&self, index: usize) -> Option<&[f64]> {
        self.columns.get(&index).map(Vec::as_slice)
    }

    pub fn explicit_columns(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.columns.iter().map(|(&i, c)| (i, c.as_slice()))
    }

    pub fn num_explicit_columns(&self) -> usize {
        self.columns.len()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(VvpError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Exact product `Mx`; only explicit columns referenced by `x` contribute.
    pub fn matvec(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim() != self.cols {
            return Err(VvpError::DimensionMismatch(format!(
                "input dim {} != {} cols",
                x.dim(),
                self.cols
            )));
        }
        let mut out = vec![0.0; self.rows];
        for &(j, v) in x.entries() {
            if let Some(col) = self.columns.get(&j) {
                for (o, c) in out.iter_mut().zip(col) {
                    *o += v * c;
                }
            }
        }
        Ok(out)
    }

    /// `√(Σ_{ij} (A−B)²)`, computed over the union of explicit columns.
    pub fn frobenius_distance(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut sum = 0.0;
        for (&j, col) in &self.columns {
            match other.columns.get(&j) {
                Some(oc) => {
                    for (a, b) in col.iter().zip(oc) {
                        let d = a - b;
                        sum += d * d;
                    }
                }
                None => {
                    for a in col {
                        sum += a * a;
                    }
                }
            }
        }
        for (&j, oc) in &other.columns {
            if !self.columns.contains_key(&j) {
                for b in oc {
                    sum += b * b;
                }
            }
        }
        Ok(sum.sqrt())
    }

    /// Projects onto the Frobenius ball of the given radius around `center`:
    /// returns `self` unchanged when inside, otherwise
    /// `center + radius·(self−center)/‖self−center‖`.
    pub fn project_onto_ball(&self, center: &Self, radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(VvpError::InvalidParameter(format!(
                "projection radius must be positive, got {radius}"
            )));
        }
        let dist = self.frobenius_distance(center)?;
        if dist <= radius {
            return Ok(self.clone());
        }
        let scale = radius / dist;
        let mut out = center.clone();
        let union: Vec<usize> = {
            let mut v: Vec<usize> = self.columns.keys().copied().collect();
            v.extend(center.columns.keys().copied());
            v.sort_unstable();
            v.dedup();
            v
        };
        for j in union {
            let a = self.columns.get(&j);
            let c = center.columns.get(&j);
            let mut col = vec![0.0; self.rows];
            for i in 0..self.rows {
                let av = a.map_or(0.0, |x| x[i]);
                let cv = c.map_or(0.0, |x| x[i]);
                col[i] = cv + scale * (av - cv);
            }
            out.columns.insert(j, col);
        }
        Ok(out)
    }

    /// Rank-one update `self += scale · g xᵀ`, materializing only the columns
    /// where `x` is nonzero.
    pub fn add_scaled_outer(&mut self, g: &[f64], x: &SparseVector, scale: f64) -> Result<()> {
        if g.len() != self.rows {
            return Err(VvpError::DimensionMismatch(format!(
                "vector length {} != {} rows",
                g.len(),
                self.rows
            )));
        }
        if x.dim() != self.cols {
            return Err(VvpError::DimensionMismatch(format!(
                "input dim {} != {} cols",
                x.dim(),
                self.cols
            )));
        }
        for &(j, v) in x.entries() {
            let col = self
                .columns
                .entry(j)
                .or_insert_with(|| vec![0.0; self.rows]);
            let f = scale * v;
            for (c, gi) in col.iter_mut().zip(g) {
                *c += f * gi;
            }
        }
        Ok(())
    }

    /// `self += scale · other`.
    pub fn add_scaled_matrix(&mut self, other: &Self, scale: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (&j, oc) in &other.columns {
            let col = self
                .columns
                .entry(j)
                .or_insert_with(|| vec![0.0; self.rows]);
            for (c, o) in col.iter_mut().zip(oc) {
                *c += scale * o;
            }
        }
        Ok(())
    }

    /// `self *= scale` over explicit columns.
    pub fn scale(&mut self, scale: f64) {
        for col in self.columns.values_mut() {
            for c in col.iter_mut() {
                *c *= scale;
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (&j, col) in &self.columns {
            for (i, &v) in col.iter().enumerate() {
                out[i][j] = v;
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    k: usize,
    m: usize,
    // 1-based column indices, serialized as JSON object keys.
    cols: BTreeMap<String, Vec<f64>>,
}

impl Serialize for StructuredMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let cols = self
            .columns
            .iter()
            .map(|(&j, c)| ((j + 1).to_string(), c.clone()))
            .collect();
        MatrixRepr {
            k: self.rows,
            m: self.cols,
            cols,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StructuredMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        let mut out = StructuredMatrix::zero(repr.k, repr.m);
        for (key, col) in repr.cols {
            let one_based: usize = key
                .parse()
                .map_err(|_| D::Error::custom(format!("bad column index {key:?}")))?;
            if one_based == 0 {
                return Err(D::Error::custom("column indices are 1-based"));
            }
            out.set_column(one_based - 1, col)
                .map_err(|e| D::Error::custom(e.to_string()))?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        m.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn matvec_zero_matrix() {
        let m = StructuredMatrix::zero(3, 5);
        let x = SparseVector::new(5, vec![(0, 1.0), (4, -2.0)]).unwrap();
        assert_eq!(m.matvec(&x).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn matvec_selects_basis_column() {
        let mut m = StructuredMatrix::zero(2, 4);
        m.set_column(2, vec![1.0, 2.0]).unwrap();
        let x = SparseVector::basis(4, 2).unwrap();
        assert_eq!(m.matvec(&x).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn matvec_rejects_out_of_range_input() {
        let m = StructuredMatrix::zero(2, 4);
        assert!(SparseVector::basis(4, 4).is_err());
        let x = SparseVector::basis(5, 4).unwrap();
        assert!(matches!(
            m.matvec(&x),
            Err(VvpError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn frobenius_distance_of_equal_matrices_is_zero() {
        let mut m = StructuredMatrix::zero(2, 2);
        m.set_column(0, vec![1.0, -1.0]).unwrap();
        assert_eq!(m.frobenius_distance(&m).unwrap(), 0.0);
    }

    #[test]
    fn frobenius_distance_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut a = StructuredMatrix::zero(3, 3);
            let mut b = StructuredMatrix::zero(3, 3);
            for j in 0..3 {
                if rng.gen_bool(0.7) {
                    a.set_column(j, (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .unwrap();
                }
                if rng.gen_bool(0.7) {
                    b.set_column(j, (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .unwrap();
                }
            }
            let da = a.to_dense();
            let db = b.to_dense();
            let mut sum = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let d = da[i][j] - db[i][j];
                    sum += d * d;
                }
            }
            let want = sum.sqrt();
            assert!((a.frobenius_distance(&b).unwrap() - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_radial_scaling() {
        // W = W0 + 2Δ with ‖Δ‖_F = 1 projects to W0 + Δ at radius 1.
        let mut w0 = StructuredMatrix::zero(2, 3);
        w0.set_column(0, vec![0.5, 0.5]).unwrap();
        let mut delta = StructuredMatrix::zero(2, 3);
        delta.set_column(1, vec![0.6, 0.8]).unwrap();
        let mut w = w0.clone();
        w.add_scaled_matrix(&delta, 2.0).unwrap();
        let proj = w.project_onto_ball(&w0, 1.0).unwrap();
        let mut want = w0.clone();
        want.add_scaled_matrix(&delta, 1.0).unwrap();
        assert!(proj.frobenius_distance(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn projection_keeps_interior_points() {
        let w0 = StructuredMatrix::zero(2, 2);
        let mut w = StructuredMatrix::zero(2, 2);
        w.set_column(0, vec![0.3, 0.4]).unwrap();
        let proj = w.project_onto_ball(&w0, 1.0).unwrap();
        assert_eq!(proj, w);
    }

    #[test]
    fn serialization_round_trip_uses_one_based_indices() {
        let mut m = StructuredMatrix::zero(2, 4);
        m.set_column(0, vec![1.0, 2.0]).unwrap();
        m.set_column(3, vec![-0.5, 0.25]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"1\""));
        assert!(json.contains("\"4\""));
        assert!(!json.contains("\"0\""));
        let back: StructuredMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = StructuredMatrix> {
        proptest::collection::vec(
            (0..cols, proptest::collection::vec(-2.0f64..2.0, rows)),
            0..=cols,
        )
        .prop_map(move |entries| {
            let mut m = StructuredMatrix::zero(rows, cols);
            for (j, col) in entries {
                m.set_column(j, col).unwrap();
            }
            m
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matvec_agrees_with_dense_oracle(
            m in arb_matrix(4, 6),
            idx in proptest::collection::vec((0usize..6, -2.0f64..2.0), 0..4),
        ) {
            let mut seen = std::collections::BTreeMap::new();
            for (j, v) in idx {
                seen.insert(j, v);
            }
            let x = SparseVector::new(6, seen.into_iter().collect()).unwrap();
            let got = m.matvec(&x).unwrap();
            let want = dense_matvec(&m.to_dense(), &x.to_dense());
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-12);
            }
        }

        #[test]
        fn projection_is_idempotent_and_nonexpansive(
            a in arb_matrix(3, 4),
            b in arb_matrix(3, 4),
            c in arb_matrix(3, 4),
        ) {
            let once = a.project_onto_ball(&c, 1.0).unwrap();
            let twice = once.project_onto_ball(&c, 1.0).unwrap();
            prop_assert!(once.frobenius_distance(&twice).unwrap() <= 1e-12);
            prop_assert!(once.frobenius_distance(&c).unwrap() <= 1.0 + 1e-12);

            let pa = a.project_onto_ball(&c, 1.0).unwrap();
            let pb = b.project_onto_ball(&c, 1.0).unwrap();
            let lhs = pa.frobenius_distance(&pb).unwrap();
            let rhs = a.frobenius_distance(&b).unwrap();
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }
}
