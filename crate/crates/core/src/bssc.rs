//! Entry-wise spike-and-slab CONCORD Gibbs sampler.
//!
//! Each off-diagonal entry is drawn from a two-component mixture: an exact
//! zero, or a normal slab `N(-b/a, 1/(n a))`. Diagonal entries are set to the
//! mode of their (non-standard) full conditional, drawn on a log-spaced grid,
//! or held fixed.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{gamma_rate, log_sum_exp, prob_from_log_odds, standard_normal};
use crate::error::{Error, Result};
use crate::gibbs::Workspace;
use crate::rng::{streams, SeededRng};
use crate::types::{num_pairs, pairs, PairIndex, PrecisionState, SampleCovariance, SparsityPattern};

/// How diagonal entries are updated within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DiagMode {
    /// Set each diagonal to the mode of its full conditional.
    #[default]
    PointMass,
    /// Draw from the full conditional discretised on a log-spaced grid.
    Discretized,
    /// Keep the diagonal at its initial value.
    Pinned,
}

/// How `λ_jk` is redrawn while `ω_jk` sits in the spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroRule {
    /// The spike carries no information on `λ_jk`, so draw from the prior `Gamma(r, s)`.
    #[default]
    Prior,
    /// Plug `ω_jk = 0` into the slab conditional: `Gamma(r + 1/2, s)`.
    Formula,
}

/// Gamma(r, s) priors (shape, rate) on the slab and diagonal rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaHyper {
    pub r: f64,
    pub s: f64,
    #[serde(default)]
    pub zero_rule: ZeroRule,
}

impl Default for GammaHyper {
    fn default() -> Self {
        GammaHyper {
            r: 1e-4,
            s: 1e-8,
            zero_rule: ZeroRule::Prior,
        }
    }
}

/// Prior and run-length settings for a BSSC chain.
///
/// `lambda` and `gamma` hold either one value broadcast to every slot or one
/// value per pair (resp. per diagonal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlabConfig {
    pub q: f64,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    pub hyper: Option<GammaHyper>,
    /// Cap on the number of nonzero off-diagonals; `None` is no cap.
    pub tau: Option<usize>,
    pub burn_in: usize,
    pub keep: usize,
    /// Stride for stored full draws; 0 stores none.
    pub thin: usize,
    pub diag_mode: DiagMode,
}

impl Default for SpikeSlabConfig {
    fn default() -> Self {
        SpikeSlabConfig {
            q: 0.5,
            lambda: vec![1.0],
            gamma: vec![1.0],
            hyper: Some(GammaHyper::default()),
            tau: None,
            burn_in: 2000,
            keep: 2000,
            thin: 0,
            diag_mode: DiagMode::PointMass,
        }
    }
}

impl SpikeSlabConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q must lie in (0, 1), got {}", self.q));
        }
        if self.lambda.len() != 1 && self.lambda.len() != num_pairs(p) {
            return bad(format!(
                "lambda needs 1 or {} values, got {}",
                num_pairs(p),
                self.lambda.len()
            ));
        }
        if self.gamma.len() != 1 && self.gamma.len() != p {
            return bad(format!("gamma needs 1 or {p} values, got {}", self.gamma.len()));
        }
        if self
            .lambda
            .iter()
            .chain(&self.gamma)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return bad("lambda and gamma must be positive and finite".into());
        }
        if let Some(h) = self.hyper {
            if !(h.r > 0.0 && h.s > 0.0) {
                return bad(format!(
                    "hyperprior r, s must be positive, got r = {}, s = {}",
                    h.r, h.s
                ));
            }
        }
        if self.burn_in < 1 || self.keep < 1 {
            return bad("burn_in and keep must be at least 1".into());
        }
        if let Some(t) = self.tau {
            if t < 1 || t > num_pairs(p) {
                return bad(format!("tau must lie in [1, {}], got {t}", num_pairs(p)));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn lambda_at(&self, flat: usize) -> f64 {
        if self.lambda.len() == 1 {
            self.lambda[0]
        } else {
            self.lambda[flat]
        }
    }

    #[inline]
    pub fn gamma_at(&self, j: usize) -> f64 {
        if self.gamma.len() == 1 {
            self.gamma[0]
        } else {
            self.gamma[j]
        }
    }

    fn expanded(&self, p: usize) -> SpikeSlabConfig {
        let mut c = self.clone();
        c.lambda = (0..num_pairs(p)).map(|f| self.lambda_at(f)).collect();
        c.gamma = (0..p).map(|j| self.gamma_at(j)).collect();
        c
    }
}

/// Full conditional of one off-diagonal entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffdiagConditional {
    /// Quadratic coefficient `a_jk = s_jj + s_kk + λ_jk / n`.
    pub a: f64,
    /// Linear coefficient `b_jk`.
    pub b: f64,
    /// `log c_jk`, the log odds of the slab.
    pub log_odds: f64,
    /// Slab probability `p_jk = c_jk / (1 + c_jk)`.
    pub prob: f64,
    pub mean: f64,
    pub var: f64,
}

pub(crate) fn slab_conditional(
    s_jj: f64,
    s_kk: f64,
    b: f64,
    lambda: f64,
    q: f64,
    n: f64,
) -> Result<OffdiagConditional> {
    let a = s_jj + s_kk + lambda / n;
    if !(a > 0.0) {
        return Err(Error::Internal(format!("non-positive quadratic coefficient a = {a}")));
    }
    let log_odds = q.ln() - (-q).ln_1p() + 0.5 * lambda.ln() - 0.5 * (n * a).ln() + n * b * b / (2.0 * a);
    Ok(OffdiagConditional {
        a,
        b,
        log_odds,
        prob: prob_from_log_odds(log_odds),
        mean: -b / a,
        var: 1.0 / (n * a),
    })
}

/// Conditional of entry `pair` given the rest of `state`, computed directly in O(p).
pub fn offdiag_conditional(
    state: &PrecisionState,
    s: &SampleCovariance,
    cfg: &SpikeSlabConfig,
    pair: PairIndex,
    n: usize,
) -> Result<OffdiagConditional> {
    let p = state.p();
    let (j, k) = (pair.j, pair.k);
    let b: f64 = (0..p)
        .filter(|&l| l != k)
        .map(|l| state.get(j, l) * s.get(k, l))
        .sum::<f64>()
        + (0..p)
            .filter(|&l| l != j)
            .map(|l| state.get(l, k) * s.get(j, l))
            .sum::<f64>();
    slab_conditional(s.get(j, j), s.get(k, k), b, cfg.lambda_at(pair.flat), cfg.q, n as f64)
}

/// Log density (up to a constant) of a diagonal entry's full conditional:
/// `n log ω - (n/2) s_jj ω² - (γ_j + n b_j) ω`.
pub fn diag_log_density(omega: f64, s_jj: f64, b_j: f64, gamma: f64, n: f64) -> f64 {
    n * omega.ln() - 0.5 * n * s_jj * omega * omega - (gamma + n * b_j) * omega
}

/// The unique positive root of `n s_jj ω² + (γ_j + n b_j) ω - n = 0`.
pub fn diag_mode(s_jj: f64, b_j: f64, gamma: f64, n: f64) -> f64 {
    let lin = gamma + n * b_j;
    let disc = (lin * lin + 4.0 * n * n * s_jj).sqrt();
    if lin >= 0.0 {
        // rationalised form avoids cancellation for large positive lin
        2.0 * n / (lin + disc)
    } else {
        (disc - lin) / (2.0 * n * s_jj)
    }
}

const DIAG_GRID: usize = 512;

fn diag_grid_draw<R: Rng + ?Sized>(rng: &mut R, s_jj: f64, b_j: f64, gamma: f64, n: f64) -> f64 {
    let mode = diag_mode(s_jj, b_j, gamma, n);
    let (lo, hi) = ((mode / 8.0).ln(), (mode * 8.0).ln());
    let step = (hi - lo) / (DIAG_GRID - 1) as f64;
    let grid: Vec<f64> = (0..DIAG_GRID).map(|i| (lo + step * i as f64).exp()).collect();
    // weight f(ω)·ω for a log-spaced cell
    let logw: Vec<f64> = grid
        .iter()
        .map(|&w| diag_log_density(w, s_jj, b_j, gamma, n) + w.ln())
        .collect();
    let norm = log_sum_exp(&logw);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (w, lw) in grid.iter().zip(&logw) {
        acc += (lw - norm).exp();
        if u < acc {
            return *w;
        }
    }
    grid[DIAG_GRID - 1]
}

/// New value of diagonal `j` under `cfg.diag_mode`, given the rest of `state`.
pub fn diag_update<R: Rng + ?Sized>(
    state: &PrecisionState,
    s: &SampleCovariance,
    cfg: &SpikeSlabConfig,
    j: usize,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    let s_jj = s.get(j, j);
    if !(s_jj > 0.0) {
        return Err(Error::InvalidCovariance(format!("s_{j}{j} = {s_jj} must be positive")));
    }
    let b_j: f64 = (0..state.p())
        .filter(|&l| l != j)
        .map(|l| state.get(j, l) * s.get(j, l))
        .sum();
    Ok(diag_value(
        cfg.diag_mode,
        state.diag()[j],
        s_jj,
        b_j,
        cfg.gamma_at(j),
        n as f64,
        rng,
    ))
}

pub(crate) fn diag_value<R: Rng + ?Sized>(
    mode: DiagMode,
    current: f64,
    s_jj: f64,
    b_j: f64,
    gamma: f64,
    n: f64,
    rng: &mut R,
) -> f64 {
    match mode {
        DiagMode::PointMass => diag_mode(s_jj, b_j, gamma, n),
        DiagMode::Discretized => diag_grid_draw(rng, s_jj, b_j, gamma, n),
        DiagMode::Pinned => current,
    }
}

/// A BSSC chain: the sampler state plus the current (possibly updated) hyperparameters.
pub struct BsscChain {
    ws: Workspace,
    cfg: SpikeSlabConfig,
    n: f64,
}

impl BsscChain {
    pub fn new(s: &SampleCovariance, n: usize, cfg: &SpikeSlabConfig, init: PrecisionState) -> Result<Self> {
        let p = s.p();
        cfg.validate(p)?;
        if init.p() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: init.p(),
            });
        }
        if let Some(j) = (0..p).find(|&j| !(s.get(j, j) > 0.0)) {
            return Err(Error::InvalidCovariance(format!(
                "s_{j}{j} = {} must be positive",
                s.get(j, j)
            )));
        }
        if n == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        Ok(BsscChain {
            ws: Workspace::new(s, init),
            cfg: cfg.expanded(p),
            n: n as f64,
        })
    }

    pub fn state(&self) -> &PrecisionState {
        &self.ws.state
    }

    pub fn config(&self) -> &SpikeSlabConfig {
        &self.cfg
    }

    /// One pass over all pairs in canonical order, then all diagonals.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.ws.refresh();
        let p = self.ws.p;
        let cap = self.cfg.tau.unwrap_or(usize::MAX);
        for ix in pairs(p) {
            let (j, k, flat) = (ix.j, ix.k, ix.flat);
            let current = self.ws.state.offdiag()[flat];
            let others = self.ws.nonzero() - usize::from(current != 0.0);
            let b = self.ws.pair_linear(j, k, flat);
            let cond = slab_conditional(
                self.ws.s(j, j),
                self.ws.s(k, k),
                b,
                self.cfg.lambda[flat],
                self.cfg.q,
                self.n,
            )?;
            let include = others < cap && rng.random::<f64>() < cond.prob;
            let value = if include {
                let v = cond.mean + cond.var.sqrt() * standard_normal(rng);
                // a slab draw of exactly 0 has probability zero; keep zeros unambiguous
                if v == 0.0 {
                    f64::MIN_POSITIVE
                } else {
                    v
                }
            } else {
                0.0
            };
            self.ws.set_offdiag(j, k, flat, value);
        }
        if self.cfg.diag_mode != DiagMode::Pinned {
            for j in 0..p {
                let b_j = self.ws.diag_linear(j);
                let v = diag_value(
                    self.cfg.diag_mode,
                    self.ws.state.diag()[j],
                    self.ws.s(j, j),
                    b_j,
                    self.cfg.gamma[j],
                    self.n,
                    rng,
                );
                self.ws.set_diag(j, v);
            }
        }
        if self.cfg.hyper.is_some() {
            self.cfg = update_hyperparameters(&self.ws.state, &self.cfg, rng)?;
        }
        Ok(())
    }
}

/// One full sweep (pairs, then diagonals, then hyperparameters when enabled).
pub fn sweep<R: Rng + ?Sized>(
    state: &PrecisionState,
    s: &SampleCovariance,
    cfg: &SpikeSlabConfig,
    n: usize,
    rng: &mut R,
) -> Result<PrecisionState> {
    let mut chain = BsscChain::new(s, n, cfg, state.clone())?;
    chain.sweep(rng)?;
    Ok(chain.ws.state)
}

/// Draws `λ_jk ~ Gamma(r + 1/2, ω_jk²/2 + s)` for slab entries, `λ_jk` per
/// [`ZeroRule`] for zero entries, and `γ_j ~ Gamma(r + 1, ω_jj + s)`
/// (shape, rate) given the current state.
pub fn update_hyperparameters<R: Rng + ?Sized>(
    state: &PrecisionState,
    cfg: &SpikeSlabConfig,
    rng: &mut R,
) -> Result<SpikeSlabConfig> {
    let h = cfg
        .hyper
        .ok_or_else(|| Error::InvalidConfig("hyperparameter updates need r and s".into()))?;
    let mut out = cfg.clone();
    out.lambda = state
        .offdiag()
        .iter()
        .map(|w| {
            let l = if *w == 0.0 && h.zero_rule == ZeroRule::Prior {
                gamma_rate(rng, h.r, h.s)
            } else {
                gamma_rate(rng, h.r + 0.5, 0.5 * w * w + h.s)
            };
            // small shapes underflow; keep the rate strictly positive
            l.max(f64::MIN_POSITIVE)
        })
        .collect();
    out.gamma = state
        .diag()
        .iter()
        .map(|d| gamma_rate(rng, h.r + 1.0, d + h.s))
        .collect();
    Ok(out)
}

/// Accumulated statistics of the retained sweeps of one or more chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub p: usize,
    /// Retained sweeps.
    pub t: u64,
    pub include_count: Vec<u64>,
    /// Sum of retained nonzero draws per pair.
    pub value_sum: Vec<f64>,
    pub diag_sum: Vec<f64>,
    pub draws: Vec<PrecisionState>,
}

impl ChainTrace {
    pub fn new(p: usize) -> Self {
        ChainTrace {
            p,
            t: 0,
            include_count: vec![0; num_pairs(p)],
            value_sum: vec![0.0; num_pairs(p)],
            diag_sum: vec![0.0; p],
            draws: Vec::new(),
        }
    }

    pub fn record(&mut self, state: &PrecisionState) {
        self.t += 1;
        for (f, &w) in state.offdiag().iter().enumerate() {
            if w != 0.0 {
                self.include_count[f] += 1;
                self.value_sum[f] += w;
            }
        }
        for (acc, d) in self.diag_sum.iter_mut().zip(state.diag()) {
            *acc += d;
        }
    }

    /// Pools another trace into this one. Counts add exactly; sums are added
    /// in call order, so merge chains in a fixed order.
    pub fn merge(&mut self, other: &ChainTrace) {
        assert_eq!(self.p, other.p);
        self.t += other.t;
        for (a, b) in self.include_count.iter_mut().zip(&other.include_count) {
            *a += b;
        }
        for (a, b) in self.value_sum.iter_mut().zip(&other.value_sum) {
            *a += b;
        }
        for (a, b) in self.diag_sum.iter_mut().zip(&other.diag_sum) {
            *a += b;
        }
        self.draws.extend(other.draws.iter().cloned());
    }

    /// `p̂_jk = include_count / T`.
    pub fn inclusion(&self) -> Vec<f64> {
        self.include_count.iter().map(|&c| c as f64 / self.t as f64).collect()
    }

    pub fn diag_mean(&self) -> Vec<f64> {
        self.diag_sum.iter().map(|d| d / self.t as f64).collect()
    }
}

/// Runs `burn_in + keep` sweeps from `init` (identity when `None`).
pub fn run_chain<R: Rng + ?Sized>(
    s: &SampleCovariance,
    n: usize,
    cfg: &SpikeSlabConfig,
    init: Option<PrecisionState>,
    rng: &mut R,
) -> Result<ChainTrace> {
    run_chain_timed(s, n, cfg, init, rng).map(|(t, _)| t)
}

/// [`run_chain`], also returning the wall-clock seconds of every sweep
/// (burn-in included).
pub fn run_chain_timed<R: Rng + ?Sized>(
    s: &SampleCovariance,
    n: usize,
    cfg: &SpikeSlabConfig,
    init: Option<PrecisionState>,
    rng: &mut R,
) -> Result<(ChainTrace, Vec<f64>)> {
    let p = s.p();
    let mut chain = BsscChain::new(s, n, cfg, init.unwrap_or_else(|| PrecisionState::identity(p)))?;
    let mut trace = ChainTrace::new(p);
    let mut timings = Vec::with_capacity(cfg.burn_in + cfg.keep);
    for _ in 0..cfg.burn_in {
        let t0 = Instant::now();
        chain.sweep(rng)?;
        timings.push(t0.elapsed().as_secs_f64());
    }
    for i in 0..cfg.keep {
        let t0 = Instant::now();
        chain.sweep(rng)?;
        timings.push(t0.elapsed().as_secs_f64());
        trace.record(chain.state());
        if cfg.thin > 0 && i % cfg.thin == 0 {
            trace.draws.push(chain.state().clone());
        }
    }
    Ok((trace, timings))
}

/// Runs `chains` independent chains (chain `c` on stream `streams::chain(c)`)
/// on the current rayon pool and pools them in chain order.
pub fn run_chains(
    s: &SampleCovariance,
    n: usize,
    cfg: &SpikeSlabConfig,
    init: Option<&PrecisionState>,
    seed: u64,
    chains: usize,
) -> Result<(ChainTrace, Vec<f64>)> {
    let results: Vec<Result<(ChainTrace, Vec<f64>)>> = (0..chains.max(1) as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = SeededRng::new(seed, streams::chain(c));
            run_chain_timed(s, n, cfg, init.cloned(), &mut rng)
        })
        .collect();
    let mut pooled = ChainTrace::new(s.p());
    let mut timings = Vec::new();
    for r in results {
        let (t, tm) = r?;
        pooled.merge(&t);
        timings.extend(tm);
    }
    Ok((pooled, timings))
}

/// Inclusion probabilities, thresholded pattern and point estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub inclusion: Vec<f64>,
    pub estimate: PrecisionState,
    pub selected: SparsityPattern,
}

/// Median-probability selection at `threshold` (0.5 by convention) and the
/// estimate that averages nonzero draws on selected pairs.
pub fn summarize(trace: &ChainTrace, threshold: f64) -> Result<PosteriorSummary> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if trace.t == 0 {
        return Err(Error::InvalidData("trace holds no retained sweeps".into()));
    }
    let inclusion = trace.inclusion();
    let mut selected = SparsityPattern::empty(trace.p);
    let mut offdiag = vec![0.0; num_pairs(trace.p)];
    for (f, &ph) in inclusion.iter().enumerate() {
        if ph > threshold {
            let count = trace.include_count[f];
            if count == 0 {
                return Err(Error::Internal(format!("selected pair {f} has no nonzero draws")));
            }
            selected.set(f, true);
            offdiag[f] = trace.value_sum[f] / count as f64;
        }
    }
    let estimate = PrecisionState::new(trace.diag_mean(), offdiag)?;
    Ok(PosteriorSummary {
        inclusion,
        estimate,
        selected,
    })
}
