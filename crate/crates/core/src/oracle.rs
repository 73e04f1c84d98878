//! Exact posterior over sparsity patterns for small `p`, with the diagonal
//! held fixed.
//!
//! With `δ` fixed, `tr(Ω²S) = ξᵀΦξ + 2ξᵀa(δ) + δᵀDδ`, and under the
//! spike-and-slab prior each pattern `l` integrates in closed form:
//!
//! ```text
//! π(l) ∝ q^d (1-q)^(C-d) |Λ_ll|^½ |(nΦ+Λ)_ll|^-½ exp{ (n²/2) a_lᵀ (nΦ+Λ)_ll⁻¹ a_l }
//! ```

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::bssc::SpikeSlabConfig;
use crate::dist::log_sum_exp;
use crate::error::{Error, Result};
use crate::types::{num_pairs, pairs, PairIndex, SampleCovariance, SparsityPattern};

/// Largest number of off-diagonal slots the enumeration accepts.
pub const MAX_ENUM_PAIRS: usize = 20;

/// Entry of Φ for pairs `(a, b)` and `(c, d)` (both with first index smaller).
pub fn phi_entry(s: &SampleCovariance, ab: PairIndex, cd: PairIndex) -> f64 {
    let (a, b, c, d) = (ab.j, ab.k, cd.j, cd.k);
    if a == c && b == d {
        s.get(a, a) + s.get(b, b)
    } else if b == d {
        s.get(a, c)
    } else if a == c {
        s.get(b, d)
    } else if b == c {
        s.get(a, d)
    } else if a == d {
        s.get(b, c)
    } else {
        0.0
    }
}

/// The `C(p,2) x C(p,2)` quadratic-form matrix of the off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiMatrix {
    pub p: usize,
    pub entries: DMatrix<f64>,
}

pub fn build_phi(s: &SampleCovariance) -> PhiMatrix {
    let p = s.p();
    let m = num_pairs(p);
    let idx: Vec<PairIndex> = pairs(p).collect();
    let entries = DMatrix::from_fn(m, m, |r, c| phi_entry(s, idx[r], idx[c]));
    PhiMatrix { p, entries }
}

/// `a_jk = s_jk (ω_jj + ω_kk)` in canonical pair order.
pub fn build_a(s: &SampleCovariance, diag: &[f64]) -> Result<Vec<f64>> {
    let p = s.p();
    if diag.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: diag.len(),
        });
    }
    if diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidData("diagonal entries must be positive".into()));
    }
    Ok(pairs(p)
        .map(|ix| s.get(ix.j, ix.k) * (diag[ix.j] + diag[ix.k]))
        .collect())
}

/// Normalised posterior probabilities of every pattern, indexed by bitmask
/// (bit `i` = pair slot `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct PatternPosterior {
    pub p: usize,
    pub probs: Vec<f64>,
    pub log_norm: f64,
}

/// Enumerates all `2^C(p,2)` patterns and normalises in log space.
pub fn enumerate_patterns(
    s: &SampleCovariance,
    n: usize,
    diag: &[f64],
    cfg: &SpikeSlabConfig,
) -> Result<PatternPosterior> {
    let p = s.p();
    let m = num_pairs(p);
    if m > MAX_ENUM_PAIRS {
        return Err(Error::InvalidConfig(format!(
            "enumeration needs at most {MAX_ENUM_PAIRS} pairs, p = {p} has {m}"
        )));
    }
    cfg.validate(p)?;
    let a = build_a(s, diag)?;
    let phi = build_phi(s);
    let nf = n as f64;
    let lambda: Vec<f64> = (0..m).map(|f| cfg.lambda_at(f)).collect();
    let tau = cfg.tau.unwrap_or(m);
    let (lq, lnq) = (cfg.q.ln(), (-cfg.q).ln_1p());

    let log_weights: Vec<Result<f64>> = (0u64..1 << m)
        .into_par_iter()
        .map(|mask| {
            let slots: Vec<usize> = (0..m).filter(|i| (mask >> i) & 1 == 1).collect();
            let d = slots.len();
            if d > tau {
                return Ok(f64::NEG_INFINITY);
            }
            let prior = d as f64 * lq + (m - d) as f64 * lnq;
            if d == 0 {
                return Ok(prior);
            }
            let mat = DMatrix::from_fn(d, d, |r, c| {
                let v = nf * phi.entries[(slots[r], slots[c])];
                if r == c {
                    v + lambda[slots[r]]
                } else {
                    v
                }
            });
            let chol = mat.cholesky().ok_or_else(|| {
                Error::OracleDegenerate(format!(
                    "(nΦ+Λ) restricted to pattern {mask:#x} is not positive definite"
                ))
            })?;
            let log_det: f64 = chol.l_dirty().diagonal().iter().take(d).map(|v| 2.0 * v.ln()).sum();
            let al = DVector::from_iterator(d, slots.iter().map(|&i| a[i]));
            let quad = al.dot(&chol.solve(&al));
            let log_lambda: f64 = slots.iter().map(|&i| lambda[i].ln()).sum();
            Ok(prior + 0.5 * log_lambda - 0.5 * log_det + 0.5 * nf * nf * quad)
        })
        .collect();
    let log_weights = log_weights.into_iter().collect::<Result<Vec<f64>>>()?;
    let log_norm = log_sum_exp(&log_weights);
    let probs = log_weights.iter().map(|w| (w - log_norm).exp()).collect();
    Ok(PatternPosterior { p, probs, log_norm })
}

impl PatternPosterior {
    pub fn prob(&self, pattern: &SparsityPattern) -> f64 {
        let mask = pattern.edges().fold(0usize, |acc, e| acc | (1 << e.flat));
        self.probs[mask]
    }

    /// The `k` most probable patterns, ties broken by mask.
    pub fn top(&self, k: usize) -> Vec<(SparsityPattern, f64)> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&x, &y| self.probs[y].total_cmp(&self.probs[x]).then(x.cmp(&y)));
        order
            .into_iter()
            .take(k)
            .map(|m| (SparsityPattern::from_mask(self.p, m as u64), self.probs[m]))
            .collect()
    }
}

/// `P(slot i included) = Σ_{l ∋ i} π(l)`.
pub fn marginal_inclusion(post: &PatternPosterior) -> Vec<f64> {
    let m = num_pairs(post.p);
    let mut out = vec![0.0; m];
    for (mask, &pr) in post.probs.iter().enumerate() {
        for (i, o) in out.iter_mut().enumerate() {
            if (mask >> i) & 1 == 1 {
                *o += pr;
            }
        }
    }
    out
}

/// A pattern with its probability, for serialisation.
#[derive(Debug, Clone, Serialize)]
pub struct RankedPattern {
    pub edges: Vec<[usize; 2]>,
    pub prob: f64,
}

impl From<(SparsityPattern, f64)> for RankedPattern {
    fn from((pat, prob): (SparsityPattern, f64)) -> Self {
        RankedPattern {
            edges: pat.edges().map(|e| [e.j, e.k]).collect(),
            prob,
        }
    }
}
