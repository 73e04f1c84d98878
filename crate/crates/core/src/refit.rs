//! Refitting on a selected graph.
//!
//! Conditional on an edge set `Ê`, the refitted posterior on matrices with
//! positive diagonal and zeros off `Ê` has log density
//! `n·tr(Ω) - (n/2)·tr(Ω²S)`. It is a Gaussian restricted to a positive
//! orthant in the diagonal coordinates, so its mode solves a linear system and
//! its full conditionals are normal (edges) and truncated normal (diagonals).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{standard_normal, truncated_normal_lower};
use crate::error::{Error, Result};
use crate::gibbs::Workspace;
use crate::oracle::phi_entry;
use crate::types::{min_eigenvalue, num_pairs, PairIndex, PrecisionState, SampleCovariance, SparsityPattern};

/// Systems with a larger condition estimate are reported as singular.
const MAX_CONDITION: f64 = 1e14;

/// The selected graph `Ĝ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphConstraint {
    pub edges: SparsityPattern,
}

impl GraphConstraint {
    pub fn new(edges: SparsityPattern) -> Self {
        GraphConstraint { edges }
    }

    pub fn p(&self) -> usize {
        self.edges.p()
    }

    pub fn degree(&self) -> usize {
        self.edges.max_degree()
    }

    /// Whether the refitted posterior is proper for sample size `n`.
    pub fn is_proper(&self, n: usize) -> bool {
        self.degree() < n
    }

    fn check(&self, s: &SampleCovariance, n: usize) -> Result<()> {
        if self.p() != s.p() {
            return Err(Error::DimensionMismatch {
                expected: s.p(),
                got: self.p(),
            });
        }
        if !self.is_proper(n) {
            return Err(Error::ImproperPosterior {
                degree: self.degree(),
                n,
            });
        }
        Ok(())
    }
}

/// Minimises `(n/2)tr(Ω²S) - n·tr(Ω)` over matrices supported on `g`.
///
/// The unknowns are the `p` diagonals followed by the edge entries; the
/// stationarity conditions form the symmetric system `K x = u` with
/// `u = 1` on diagonal slots and `0` on edge slots.
pub fn refit_mode(s: &SampleCovariance, g: &GraphConstraint, n: usize) -> Result<PrecisionState> {
    g.check(s, n)?;
    let p = s.p();
    let edges: Vec<PairIndex> = g.edges.edges().collect();
    let dim = p + edges.len();
    let mut k = DMatrix::zeros(dim, dim);
    for j in 0..p {
        k[(j, j)] = s.get(j, j);
    }
    for (e, ix) in edges.iter().enumerate() {
        let r = p + e;
        k[(r, ix.j)] = s.get(ix.j, ix.k);
        k[(ix.j, r)] = s.get(ix.j, ix.k);
        k[(r, ix.k)] = s.get(ix.j, ix.k);
        k[(ix.k, r)] = s.get(ix.j, ix.k);
        for (f, iy) in edges.iter().enumerate().skip(e) {
            let v = phi_entry(s, *ix, *iy);
            k[(r, p + f)] = v;
            k[(p + f, r)] = v;
        }
    }
    let mut u = DVector::zeros(dim);
    u.rows_mut(0, p).fill(1.0);

    let chol = k.clone().cholesky().ok_or_else(|| Error::NumericallySingular {
        condition: condition_estimate(&k),
    })?;
    let l = chol.l_dirty();
    let (lmin, lmax) = (0..dim).fold((f64::INFINITY, 0.0f64), |(a, b), i| {
        (a.min(l[(i, i)]), b.max(l[(i, i)]))
    });
    // squared ratio of Cholesky pivots: a cheap lower bound on the condition number
    let cond = (lmax / lmin).powi(2);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::NumericallySingular { condition: cond });
    }
    let x = chol.solve(&u);
    let diag: Vec<f64> = x.rows(0, p).iter().copied().collect();
    if diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidCovariance(
            "refitted mode has a non-positive diagonal".into(),
        ));
    }
    let mut offdiag = vec![0.0; num_pairs(p)];
    for (e, ix) in edges.iter().enumerate() {
        offdiag[ix.flat] = x[p + e];
    }
    PrecisionState::new(diag, offdiag)
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `n·tr(Ω) - (n/2)·tr(Ω²S)`, the unnormalised log refitted density.
pub fn log_refit_density(state: &PrecisionState, s: &SampleCovariance, g: &GraphConstraint, n: usize) -> Result<f64> {
    let p = s.p();
    if state.p() != p || g.p() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: state.p(),
        });
    }
    if let Some(f) = state
        .offdiag()
        .iter()
        .enumerate()
        .position(|(f, w)| *w != 0.0 && !g.edges.get(f))
    {
        let ix = PairIndex::from_flat(f, p);
        return Err(Error::ConstraintViolation(ix.j, ix.k));
    }
    let o = state.to_dense();
    let nf = n as f64;
    Ok(nf * o.trace() - 0.5 * nf * (&o * &o * s.matrix()).trace())
}

/// Shifts the diagonal so the smallest eigenvalue becomes `eps` when the
/// matrix is not positive definite; positive definite input is returned as is.
pub fn project_pd(state: &PrecisionState, eps: f64) -> Result<PrecisionState> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "projection eps must be positive, got {eps}"
        )));
    }
    let lmin = state.min_eigenvalue();
    if lmin > 0.0 {
        return Ok(state.clone());
    }
    let shift = eps - lmin;
    let diag = state.diag().iter().map(|d| d + shift).collect();
    PrecisionState::new(diag, state.offdiag().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefitConfig {
    /// Retained sweeps.
    pub sweeps: usize,
    pub burn_in: usize,
    /// Central credible level, e.g. 0.95.
    pub level: f64,
    /// Target smallest eigenvalue after projection.
    pub eps: f64,
}

impl Default for RefitConfig {
    fn default() -> Self {
        RefitConfig {
            sweeps: 4000,
            burn_in: 400,
            level: 0.95,
            eps: 1e-6,
        }
    }
}

/// Per-entry posterior summaries over the free coordinates (diagonals then edges).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntrySummary {
    pub j: usize,
    pub k: usize,
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefitResult {
    pub mode: PrecisionState,
    pub mean: PrecisionState,
    pub entries: Vec<EntrySummary>,
    /// Present when the posterior mean is not positive definite.
    pub projected: Option<PrecisionState>,
    /// Smallest eigenvalue of the posterior mean.
    pub min_eigenvalue: f64,
    pub graph_degree: usize,
}

/// Full conditional of an edge entry: `N(-b/a, 1/(n a))`, `a = s_jj + s_kk`.
pub fn edge_conditional(s_jj: f64, s_kk: f64, b: f64, n: f64) -> (f64, f64) {
    let a = s_jj + s_kk;
    (-b / a, 1.0 / (n * a))
}

/// Full conditional of a diagonal entry: `N((1 - b_j)/s_jj, 1/(n s_jj))` on `(0, ∞)`.
pub fn diag_conditional(s_jj: f64, b_j: f64, n: f64) -> (f64, f64) {
    ((1.0 - b_j) / s_jj, 1.0 / (n * s_jj))
}

/// Gibbs sampling from the refitted posterior, started at its mode.
pub fn refit_gibbs<R: Rng + ?Sized>(
    s: &SampleCovariance,
    g: &GraphConstraint,
    n: usize,
    cfg: &RefitConfig,
    rng: &mut R,
) -> Result<RefitResult> {
    g.check(s, n)?;
    if cfg.sweeps == 0 {
        return Err(Error::InvalidConfig("refit needs at least one sweep".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "credible level must lie in (0, 1), got {}",
            cfg.level
        )));
    }
    let p = s.p();
    if let Some(j) = (0..p).find(|&j| !(s.get(j, j) > 0.0)) {
        return Err(Error::InvalidCovariance(format!("s_{j}{j} must be positive")));
    }
    let mode = refit_mode(s, g, n)?;
    let edges: Vec<PairIndex> = g.edges.edges().collect();
    let mut ws = Workspace::new(s, mode.clone());
    let nf = n as f64;
    let dim = p + edges.len();
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.sweeps); dim];

    for it in 0..cfg.burn_in + cfg.sweeps {
        ws.refresh();
        for ix in &edges {
            let b = ws.pair_linear(ix.j, ix.k, ix.flat);
            let (mean, var) = edge_conditional(ws.s(ix.j, ix.j), ws.s(ix.k, ix.k), b, nf);
            let mut v = mean + var.sqrt() * standard_normal(rng);
            if v == 0.0 {
                v = f64::MIN_POSITIVE;
            }
            ws.set_offdiag(ix.j, ix.k, ix.flat, v);
        }
        for j in 0..p {
            let (mean, var) = diag_conditional(ws.s(j, j), ws.diag_linear(j), nf);
            let v = truncated_normal_lower(rng, mean, var.sqrt(), 0.0);
            ws.set_diag(j, v);
        }
        if it >= cfg.burn_in {
            for (j, d) in draws.iter_mut().take(p).enumerate() {
                d.push(ws.state.diag()[j]);
            }
            for (e, ix) in edges.iter().enumerate() {
                draws[p + e].push(ws.state.offdiag()[ix.flat]);
            }
        }
    }

    let alpha = 1.0 - cfg.level;
    let mut entries = Vec::with_capacity(dim);
    for (i, d) in draws.iter_mut().enumerate() {
        let (j, k) = if i < p {
            (i, i)
        } else {
            (edges[i - p].j, edges[i - p].k)
        };
        let t = d.len() as f64;
        let mean = d.iter().sum::<f64>() / t;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0).max(1.0)).sqrt();
        d.sort_by(f64::total_cmp);
        entries.push(EntrySummary {
            j,
            k,
            mean,
            sd,
            lo: quantile(d, alpha / 2.0),
            hi: quantile(d, 1.0 - alpha / 2.0),
        });
    }
    let mut offdiag = vec![0.0; num_pairs(p)];
    for (e, ix) in edges.iter().enumerate() {
        offdiag[ix.flat] = entries[p + e].mean;
    }
    let mean = PrecisionState::new(entries[..p].iter().map(|e| e.mean).collect(), offdiag)?;
    let lmin = min_eigenvalue(&mean.to_dense());
    let projected = if lmin > 0.0 {
        None
    } else {
        Some(project_pd(&mean, cfg.eps)?)
    };
    Ok(RefitResult {
        mode,
        mean,
        entries,
        projected,
        min_eigenvalue: lmin,
        graph_degree: g.degree(),
    })
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
