//! Domain value types: pair indexing, precision states, sparsity patterns and
//! sample covariances.
//!
//! Indices are 0-based. Off-diagonal slots are stored once per unordered pair
//! in row-major order over `j < k`: (0,1), (0,2), ..., (0,p-1), (1,2), ...

use bitvec::prelude::*;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of unordered off-diagonal pairs of a `p x p` matrix.
#[inline]
pub fn num_pairs(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// An unordered off-diagonal position `(j, k)` with `j < k`, together with its
/// flat slot in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairIndex {
    pub j: usize,
    pub k: usize,
    pub flat: usize,
}

impl PairIndex {
    /// Builds the index for `(j, k)` in a `p`-dimensional matrix. The pair is
    /// reordered if `j > k`. Panics if `j == k` or either index is out of range.
    pub fn new(j: usize, k: usize, p: usize) -> Self {
        assert!(j != k, "diagonal position ({j}, {k}) has no pair index");
        let (j, k) = if j < k { (j, k) } else { (k, j) };
        assert!(k < p, "pair ({j}, {k}) out of range for p = {p}");
        PairIndex {
            j,
            k,
            flat: flatten(j, k, p),
        }
    }

    /// Inverse of [`PairIndex::new`].
    pub fn from_flat(flat: usize, p: usize) -> Self {
        let (j, k) = unflatten(flat, p);
        PairIndex { j, k, flat }
    }
}

#[inline]
fn row_offset(j: usize, p: usize) -> usize {
    j * (2 * p - j - 1) / 2
}

/// Flat slot of pair `(j, k)`, `j < k < p`.
#[inline]
pub fn flatten(j: usize, k: usize, p: usize) -> usize {
    debug_assert!(j < k && k < p);
    row_offset(j, p) + (k - j - 1)
}

/// Pair `(j, k)` stored at `flat`.
pub fn unflatten(flat: usize, p: usize) -> (usize, usize) {
    assert!(flat < num_pairs(p), "flat index {flat} out of range for p = {p}");
    let b = (2 * p - 1) as f64;
    let mut j = ((b - (b * b - 8.0 * flat as f64).max(0.0).sqrt()) / 2.0).floor() as usize;
    // float rounding can land one row off in either direction
    while j > 0 && row_offset(j, p) > flat {
        j -= 1;
    }
    while row_offset(j + 1, p) <= flat {
        j += 1;
    }
    (j, j + 1 + flat - row_offset(j, p))
}

/// All pairs of a `p`-dimensional matrix in canonical order.
pub fn pairs(p: usize) -> impl Iterator<Item = PairIndex> {
    let mut flat = 0;
    (0..p)
        .flat_map(move |j| (j + 1..p).map(move |k| (j, k)))
        .map(move |(j, k)| {
            let idx = PairIndex { j, k, flat };
            flat += 1;
            idx
        })
}

/// A symmetric matrix with strictly positive diagonal, stored as its diagonal
/// and the upper off-diagonal slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionState {
    p: usize,
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl PrecisionState {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        let p = diag.len();
        if offdiag.len() != num_pairs(p) {
            return Err(Error::DimensionMismatch {
                expected: num_pairs(p),
                got: offdiag.len(),
            });
        }
        if let Some(j) = diag.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidData(format!(
                "diagonal entry {j} is {} (must be > 0)",
                diag[j]
            )));
        }
        if offdiag.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite off-diagonal entry".into()));
        }
        Ok(PrecisionState { p, diag, offdiag })
    }

    pub fn identity(p: usize) -> Self {
        PrecisionState {
            p,
            diag: vec![1.0; p],
            offdiag: vec![0.0; num_pairs(p)],
        }
    }

    /// Reads the upper triangle of a dense matrix. Symmetry is not checked;
    /// the lower triangle is ignored.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidData(format!(
                "matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let p = m.nrows();
        let diag = (0..p).map(|j| m[(j, j)]).collect();
        let offdiag = pairs(p).map(|ix| m[(ix.j, ix.k)]).collect();
        Self::new(diag, offdiag)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    #[inline]
    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    /// Entry `(j, k)`; symmetric by construction.
    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        if j == k {
            self.diag[j]
        } else if j < k {
            self.offdiag[flatten(j, k, self.p)]
        } else {
            self.offdiag[flatten(k, j, self.p)]
        }
    }

    #[inline]
    pub fn set_offdiag(&mut self, flat: usize, value: f64) {
        self.offdiag[flat] = value;
    }

    /// Sets a diagonal entry. Panics on a non-positive value.
    #[inline]
    pub fn set_diag(&mut self, j: usize, value: f64) {
        assert!(value > 0.0, "diagonal entry must stay positive, got {value}");
        self.diag[j] = value;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        for ix in pairs(self.p) {
            let v = self.offdiag[ix.flat];
            m[(ix.j, ix.k)] = v;
            m[(ix.k, ix.j)] = v;
        }
        m
    }

    /// Number of nonzero off-diagonal slots.
    pub fn density(&self) -> usize {
        self.offdiag.iter().filter(|v| **v != 0.0).count()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.to_dense())
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Which off-diagonal positions are nonzero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparsityPattern {
    p: usize,
    bits: BitVec,
}

impl SparsityPattern {
    pub fn empty(p: usize) -> Self {
        SparsityPattern {
            p,
            bits: bitvec![0; num_pairs(p)],
        }
    }

    pub fn full(p: usize) -> Self {
        SparsityPattern {
            p,
            bits: bitvec![1; num_pairs(p)],
        }
    }

    pub fn from_bools(p: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != num_pairs(p) {
            return Err(Error::DimensionMismatch {
                expected: num_pairs(p),
                got: bits.len(),
            });
        }
        Ok(SparsityPattern {
            p,
            bits: bits.iter().collect(),
        })
    }

    /// Pattern from a bitmask over the first `num_pairs(p)` slots (bit `i` is
    /// slot `i`). Only valid for `num_pairs(p) <= 64`.
    pub fn from_mask(p: usize, mask: u64) -> Self {
        let m = num_pairs(p);
        assert!(m <= 64);
        SparsityPattern {
            p,
            bits: (0..m).map(|i| (mask >> i) & 1 == 1).collect(),
        }
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut pat = Self::empty(p);
        for &(j, k) in edges {
            if j == k || j >= p || k >= p {
                return Err(Error::InvalidData(format!(
                    "edge ({j}, {k}) is not an off-diagonal pair for p = {p}"
                )));
            }
            pat.set(PairIndex::new(j, k, p).flat, true);
        }
        Ok(pat)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, flat: usize) -> bool {
        self.bits[flat]
    }

    #[inline]
    pub fn set(&mut self, flat: usize, on: bool) {
        self.bits.set(flat, on);
    }

    /// Number of included pairs.
    pub fn density(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_subset_of(&self, other: &SparsityPattern) -> bool {
        self.p == other.p && self.bits.iter_ones().all(|i| other.bits[i])
    }

    /// Included pairs in canonical order.
    pub fn edges(&self) -> impl Iterator<Item = PairIndex> + '_ {
        self.bits
            .iter_ones()
            .map(move |flat| PairIndex::from_flat(flat, self.p))
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.bits.iter().by_vals().collect()
    }

    /// Per-vertex edge counts.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.p];
        for e in self.edges() {
            deg[e.j] += 1;
            deg[e.k] += 1;
        }
        deg
    }

    /// Maximum vertex degree of the graph.
    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }
}

/// Sparsity pattern of a state: slot set iff `|offdiag| > tol`.
pub fn pattern_of(state: &PrecisionState, tol: f64) -> SparsityPattern {
    SparsityPattern {
        p: state.p,
        bits: state.offdiag.iter().map(|v| v.abs() > tol).collect(),
    }
}

/// Symmetric `p x p` sample covariance `S = (1/n) YᵀY`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    entries: DMatrix<f64>,
}

const SYMMETRY_TOL: f64 = 1e-10;

impl SampleCovariance {
    /// Covariance of the rows of `data` (`n x p`). With `center`, columns are
    /// mean-subtracted first; the divisor is `n` either way.
    pub fn from_data(data: &DMatrix<f64>, center: bool) -> Result<Self> {
        let (n, p) = data.shape();
        if n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n });
        }
        if p < 2 {
            return Err(Error::InvalidData(format!("need at least 2 variables, got {p}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("data contains non-finite values".into()));
        }
        let entries = if center {
            let mut y = data.clone();
            for mut col in y.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
            y.tr_mul(&y) / n as f64
        } else {
            data.tr_mul(data) / n as f64
        };
        Ok(SampleCovariance {
            entries: symmetrize(entries),
        })
    }

    /// Wraps an explicit matrix, checking squareness, finiteness and symmetry.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidCovariance(format!(
                "matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() < 2 {
            return Err(Error::InvalidCovariance("need p >= 2".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        let scale = m.amax().max(1.0);
        for j in 0..m.nrows() {
            for k in j + 1..m.ncols() {
                if (m[(j, k)] - m[(k, j)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidCovariance(format!("not symmetric at ({j}, {k})")));
                }
            }
        }
        Ok(SampleCovariance { entries: symmetrize(m) })
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[(j, k)]
    }

    #[inline]
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.entries)
    }

    /// Rescales to unit diagonal (correlation matrix). Zero-variance columns
    /// are rejected.
    pub fn standardized(&self) -> Result<Self> {
        let p = self.p();
        let sd: Vec<f64> = (0..p).map(|j| self.entries[(j, j)].sqrt()).collect();
        if let Some(j) = sd.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::InvalidCovariance(format!("variable {j} has zero variance")));
        }
        let m = DMatrix::from_fn(p, p, |j, k| self.entries[(j, k)] / (sd[j] * sd[k]));
        Ok(SampleCovariance { entries: symmetrize(m) })
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flat_endpoints() {
        let p = 7;
        assert_eq!(PairIndex::new(0, 1, p).flat, 0);
        assert_eq!(PairIndex::new(p - 2, p - 1, p).flat, num_pairs(p) - 1);
        assert_eq!(PairIndex::new(3, 1, p), PairIndex::new(1, 3, p));
    }

    #[test]
    fn flat_round_trip_up_to_64() {
        for p in 2..=64 {
            let mut expected = 0;
            for j in 0..p {
                for k in j + 1..p {
                    let ix = PairIndex::new(j, k, p);
                    assert_eq!(ix.flat, expected);
                    assert_eq!(unflatten(ix.flat, p), (j, k));
                    expected += 1;
                }
            }
            assert_eq!(pairs(p).count(), num_pairs(p));
            assert!(pairs(p).all(|ix| unflatten(ix.flat, p) == (ix.j, ix.k)));
        }
    }

    #[test]
    fn covariance_worked_examples() {
        let data = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let s = SampleCovariance::from_data(&data, false).unwrap();
        assert_eq!(s.matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));

        let zeros = DMatrix::zeros(5, 3);
        let s = SampleCovariance::from_data(&zeros, false).unwrap();
        assert!(s.matrix().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn covariance_errors() {
        let one_row = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert_eq!(
            SampleCovariance::from_data(&one_row, false),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        );
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(matches!(
            SampleCovariance::from_data(&bad, false),
            Err(Error::InvalidData(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]);
        assert!(SampleCovariance::from_matrix(asym).is_err());
    }

    #[test]
    fn centering_keeps_divisor_n() {
        let data = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 5.0]);
        let s = SampleCovariance::from_data(&data, true).unwrap();
        // column means (2, 4); deviations ±1 in both columns
        assert_eq!(s.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn pattern_of_thresholds() {
        let st = PrecisionState::identity(3);
        assert_eq!(pattern_of(&st, 0.0).density(), 0);

        let st = PrecisionState::new(vec![1.0; 3], vec![0.3, 0.0, 0.0]).unwrap();
        assert_eq!(pattern_of(&st, 0.0).to_bools(), vec![true, false, false]);

        let st = PrecisionState::new(vec![1.0; 3], vec![1e-12, 0.5, 0.0]).unwrap();
        assert_eq!(pattern_of(&st, 1e-9).to_bools(), vec![false, true, false]);
    }

    #[test]
    fn state_rejects_bad_diagonal() {
        assert!(PrecisionState::new(vec![1.0, 0.0], vec![0.0]).is_err());
        assert!(PrecisionState::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn pattern_degrees() {
        let pat = SparsityPattern::from_edges(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        assert_eq!(pat.degrees(), vec![1, 3, 1, 1]);
        assert_eq!(pat.max_degree(), 3);
        assert!(SparsityPattern::from_edges(4, &[(2, 2)]).is_err());
    }

    proptest! {
        #[test]
        fn dense_round_trip(p in 2usize..8, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let diag: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..3.0)).collect();
            let off: Vec<f64> = (0..num_pairs(p)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let st = PrecisionState::new(diag.clone(), off.clone()).unwrap();
            let m = st.to_dense();
            prop_assert_eq!(&m, &m.transpose());
            for ix in pairs(p) {
                prop_assert_eq!(st.get(ix.j, ix.k), st.get(ix.k, ix.j));
                prop_assert_eq!(m[(ix.j, ix.k)], off[ix.flat]);
            }
            prop_assert_eq!(PrecisionState::from_dense(&m).unwrap(), st);
        }

        #[test]
        fn covariance_matches_double_loop(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (n, p) = (10, 4);
            let data = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
            let s = SampleCovariance::from_data(&data, false).unwrap();
            for j in 0..p {
                for k in 0..p {
                    let brute: f64 = (0..n).map(|i| data[(i, j)] * data[(i, k)]).sum::<f64>() / n as f64;
                    prop_assert!((s.get(j, k) - brute).abs() < 1e-12);
                }
            }
        }
    }
}
