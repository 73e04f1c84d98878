//! Entry-wise horseshoe CONCORD Gibbs sampler.
//!
//! Off-diagonal entries get a normal prior with variance `λ_jk² τ²`, where the
//! local and global scales are half-Cauchy, written through inverse-gamma
//! auxiliaries `ν_jk` and `ε`. Every conditional is then conjugate. The prior
//! is continuous, so edges are selected by whether the central credible
//! interval of an entry excludes zero.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bssc::{diag_value, DiagMode};
use crate::dist::{inv_gamma, log_sum_exp, standard_normal};
use crate::error::{Error, Result};
use crate::gibbs::Workspace;
use crate::refit::quantile;
use crate::rng::{streams, SeededRng};
use crate::types::{num_pairs, pairs, PrecisionState, SampleCovariance, SparsityPattern};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeConfig {
    /// Rate of the exponential prior on each diagonal entry.
    pub gamma: f64,
    pub burn_in: usize,
    pub keep: usize,
    /// Central credible level, e.g. 0.95.
    pub level: f64,
    pub diag_mode: DiagMode,
}

impl Default for HorseshoeConfig {
    fn default() -> Self {
        HorseshoeConfig {
            gamma: 1.0,
            burn_in: 2000,
            keep: 2000,
            level: 0.95,
            diag_mode: DiagMode::PointMass,
        }
    }
}

impl HorseshoeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "credible level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.keep == 0 {
            return Err(Error::InvalidConfig("keep must be at least 1".into()));
        }
        Ok(())
    }
}

/// Local and global scales with their auxiliaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeState {
    pub lambda2: Vec<f64>,
    pub nu: Vec<f64>,
    pub tau2: f64,
    pub eps: f64,
}

impl HorseshoeState {
    pub fn new(p: usize) -> Self {
        let c = num_pairs(p);
        HorseshoeState {
            lambda2: vec![1.0; c],
            nu: vec![1.0; c],
            tau2: 1.0,
            eps: 1.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        self.lambda2.iter().chain(&self.nu).all(|v| ok(*v)) && ok(self.tau2) && ok(self.eps)
    }
}

/// Full conditional `N(-b/a, 1/(n a))` of an off-diagonal entry with
/// `a = s_jj + s_kk + 1/(n λ² τ²)`.
pub fn pair_conditional(s_jj: f64, s_kk: f64, b: f64, lambda2: f64, tau2: f64, n: f64) -> (f64, f64) {
    let a = s_jj + s_kk + 1.0 / (n * lambda2 * tau2);
    (-b / a, 1.0 / (n * a))
}

pub struct BhscChain {
    ws: Workspace,
    hs: HorseshoeState,
    cfg: HorseshoeConfig,
    n: f64,
}

impl BhscChain {
    pub fn new(s: &SampleCovariance, n: usize, cfg: &HorseshoeConfig, init: PrecisionState) -> Result<Self> {
        let p = s.p();
        cfg.validate()?;
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
        Ok(BhscChain {
            ws: Workspace::new(s, init),
            hs: HorseshoeState::new(p),
            cfg: cfg.clone(),
            n: n as f64,
        })
    }

    pub fn state(&self) -> &PrecisionState {
        &self.ws.state
    }

    pub fn scales(&self) -> &HorseshoeState {
        &self.hs
    }

    /// Pairs with their local scales, then the global scale, then diagonals.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.ws.refresh();
        let p = self.ws.p;
        let n = self.n;
        let tau2 = self.hs.tau2;
        for ix in pairs(p) {
            let f = ix.flat;
            let b = self.ws.pair_linear(ix.j, ix.k, f);
            let (mean, var) = pair_conditional(
                self.ws.s(ix.j, ix.j),
                self.ws.s(ix.k, ix.k),
                b,
                self.hs.lambda2[f],
                tau2,
                n,
            );
            let mut w = mean + var.sqrt() * standard_normal(rng);
            if w == 0.0 {
                w = f64::MIN_POSITIVE;
            }
            self.ws.set_offdiag(ix.j, ix.k, f, w);
            let l2 = inv_gamma(rng, 1.0, 1.0 / self.hs.nu[f] + w * w / (2.0 * tau2));
            self.hs.lambda2[f] = l2;
            self.hs.nu[f] = inv_gamma(rng, 1.0, 1.0 + 1.0 / l2);
        }
        let c = num_pairs(p);
        if c > 0 {
            // log-space accumulation of Σ ω²/(2λ²) keeps the rate finite for large p
            let mut terms: Vec<f64> = self
                .ws
                .state
                .offdiag()
                .iter()
                .zip(&self.hs.lambda2)
                .map(|(w, l2)| 2.0 * w.abs().ln() - (2.0 * l2).ln())
                .collect();
            terms.push(-self.hs.eps.ln());
            let log_rate = log_sum_exp(&terms);
            let unit = inv_gamma(rng, 0.5 + c as f64 / 2.0, 1.0);
            let t2 = (log_rate + unit.ln()).exp();
            self.hs.tau2 = t2.clamp(f64::MIN_POSITIVE, f64::MAX);
            self.hs.eps = inv_gamma(rng, 1.0, 1.0 + 1.0 / self.hs.tau2);
        }
        if self.cfg.diag_mode != DiagMode::Pinned {
            for j in 0..p {
                let b_j = self.ws.diag_linear(j);
                let v = diag_value(
                    self.cfg.diag_mode,
                    self.ws.state.diag()[j],
                    self.ws.s(j, j),
                    b_j,
                    self.cfg.gamma,
                    n,
                    rng,
                );
                self.ws.set_diag(j, v);
            }
        }
    }
}

/// Retained draws of one or more horseshoe chains.
#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeTrace {
    pub p: usize,
    /// Per-pair draw series, chains concatenated in chain order.
    pub offdiag: Vec<Vec<f32>>,
    pub offdiag_sum: Vec<f64>,
    pub diag_sum: Vec<f64>,
    pub t: usize,
}

impl HorseshoeTrace {
    pub fn new(p: usize) -> Self {
        let c = num_pairs(p);
        HorseshoeTrace {
            p,
            offdiag: vec![Vec::new(); c],
            offdiag_sum: vec![0.0; c],
            diag_sum: vec![0.0; p],
            t: 0,
        }
    }

    pub fn record(&mut self, state: &PrecisionState) {
        for (f, w) in state.offdiag().iter().enumerate() {
            self.offdiag[f].push(*w as f32);
            self.offdiag_sum[f] += w;
        }
        for (acc, d) in self.diag_sum.iter_mut().zip(state.diag()) {
            *acc += d;
        }
        self.t += 1;
    }

    pub fn merge(&mut self, other: &HorseshoeTrace) {
        for f in 0..self.offdiag.len() {
            self.offdiag[f].extend_from_slice(&other.offdiag[f]);
            self.offdiag_sum[f] += other.offdiag_sum[f];
        }
        for (a, b) in self.diag_sum.iter_mut().zip(&other.diag_sum) {
            *a += b;
        }
        self.t += other.t;
    }
}

pub fn run_chain_bhsc<R: Rng + ?Sized>(
    s: &SampleCovariance,
    n: usize,
    cfg: &HorseshoeConfig,
    init: Option<PrecisionState>,
    rng: &mut R,
) -> Result<HorseshoeTrace> {
    run_chain_bhsc_timed(s, n, cfg, init, rng).map(|(t, _)| t)
}

/// [`run_chain_bhsc`], also returning the wall-clock seconds of every sweep.
pub fn run_chain_bhsc_timed<R: Rng + ?Sized>(
    s: &SampleCovariance,
    n: usize,
    cfg: &HorseshoeConfig,
    init: Option<PrecisionState>,
    rng: &mut R,
) -> Result<(HorseshoeTrace, Vec<f64>)> {
    let p = s.p();
    let mut chain = BhscChain::new(s, n, cfg, init.unwrap_or_else(|| PrecisionState::identity(p)))?;
    let mut trace = HorseshoeTrace::new(p);
    let mut timings = Vec::with_capacity(cfg.burn_in + cfg.keep);
    for _ in 0..cfg.burn_in {
        let t0 = Instant::now();
        chain.sweep(rng);
        timings.push(t0.elapsed().as_secs_f64());
    }
    for _ in 0..cfg.keep {
        let t0 = Instant::now();
        chain.sweep(rng);
        timings.push(t0.elapsed().as_secs_f64());
        if chain.state().offdiag().contains(&0.0) {
            return Err(Error::Internal("horseshoe draw produced an exact zero".into()));
        }
        trace.record(chain.state());
    }
    if !chain.scales().is_valid() {
        return Err(Error::Internal("horseshoe scales left the positive reals".into()));
    }
    Ok((trace, timings))
}

/// Runs `chains` chains on streams `streams::chain(c)` and pools them in chain order.
pub fn run_chains_bhsc(
    s: &SampleCovariance,
    n: usize,
    cfg: &HorseshoeConfig,
    init: Option<&PrecisionState>,
    seed: u64,
    chains: usize,
) -> Result<(HorseshoeTrace, Vec<f64>)> {
    let results: Vec<Result<(HorseshoeTrace, Vec<f64>)>> = (0..chains.max(1) as u64)
        .into_par_iter()
        .map(|c| run_chain_bhsc_timed(s, n, cfg, init.cloned(), &mut SeededRng::new(seed, streams::chain(c))))
        .collect();
    let mut pooled = HorseshoeTrace::new(s.p());
    let mut timings = Vec::new();
    for r in results {
        let (t, tm) = r?;
        pooled.merge(&t);
        timings.extend(tm);
    }
    Ok((pooled, timings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeSummary {
    pub mean: PrecisionState,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    /// Pairs whose credible interval excludes zero.
    pub selected: SparsityPattern,
}

pub fn summarize_bhsc(trace: &HorseshoeTrace, level: f64) -> Result<HorseshoeSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "credible level must lie in (0, 1), got {level}"
        )));
    }
    if trace.t == 0 {
        return Err(Error::InvalidData("trace holds no retained sweeps".into()));
    }
    let t = trace.t as f64;
    let alpha = 1.0 - level;
    let c = trace.offdiag.len();
    let (mut lo, mut hi) = (vec![0.0; c], vec![0.0; c]);
    let mut selected = SparsityPattern::empty(trace.p);
    for f in 0..c {
        let mut d: Vec<f64> = trace.offdiag[f].iter().map(|v| *v as f64).collect();
        d.sort_by(f64::total_cmp);
        lo[f] = quantile(&d, alpha / 2.0);
        hi[f] = quantile(&d, 1.0 - alpha / 2.0);
        selected.set(f, lo[f] > 0.0 || hi[f] < 0.0);
    }
    let mean = PrecisionState::new(
        trace.diag_sum.iter().map(|v| v / t).collect(),
        trace.offdiag_sum.iter().map(|v| v / t).collect(),
    )?;
    Ok(HorseshoeSummary {
        mean,
        ci_lo: lo,
        ci_hi: hi,
        selected,
    })
}
