//! Synthetic ground truth, Gaussian data and edge-recovery metrics.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bhsc::{run_chain_bhsc, summarize_bhsc, HorseshoeConfig};
use crate::bssc::{run_chain, summarize, SpikeSlabConfig};
use crate::dist::standard_normal;
use crate::error::{Error, Result};
use crate::refit::{refit_gibbs, GraphConstraint, RefitConfig};
use crate::rng::{derive_seed, streams, SeededRng};
use crate::types::{num_pairs, PairIndex, PrecisionState, SampleCovariance, SparsityPattern};

/// How the diagonal of a generated truth is made large enough for positive definiteness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum DiagRule {
    /// `ω_jj = Σ_k |ω_jk| + margin`.
    Dominance { margin: f64 },
    /// Every diagonal set to `margin - λ_min(A)`, `A` being the off-diagonal part.
    EigenShift { margin: f64 },
}

impl Default for DiagRule {
    fn default() -> Self {
        DiagRule::Dominance { margin: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub p: usize,
    /// Fraction of upper off-diagonal entries that are nonzero.
    pub density: f64,
    /// Magnitudes are uniform on this range, with a random sign.
    pub magnitude: (f64, f64),
    #[serde(default)]
    pub diag_rule: DiagRule,
}

impl TruthSpec {
    pub fn new(p: usize, density: f64) -> Self {
        TruthSpec {
            p,
            density,
            magnitude: (0.4, 0.6),
            diag_rule: DiagRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidConfig("p must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.density) {
            return Err(Error::InvalidConfig(format!(
                "density must lie in [0, 1), got {}",
                self.density
            )));
        }
        let (lo, hi) = self.magnitude;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "magnitude range ({lo}, {hi}) must be positive and ordered"
            )));
        }
        let (DiagRule::Dominance { margin } | DiagRule::EigenShift { margin }) = self.diag_rule;
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "diagonal margin must be positive, got {margin}"
            )));
        }
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        (self.density * num_pairs(self.p) as f64).ceil() as usize
    }
}

/// A diagonally dominant precision matrix with `⌈density·C⌉` uniformly placed edges.
pub fn generate_truth<R: Rng + ?Sized>(spec: &TruthSpec, rng: &mut R) -> Result<PrecisionState> {
    spec.validate()?;
    let p = spec.p;
    let c = num_pairs(p);
    let mut offdiag = vec![0.0; c];
    let mut chosen = sample(rng, c, spec.edge_count().min(c)).into_vec();
    chosen.sort_unstable();
    let (lo, hi) = spec.magnitude;
    for f in chosen {
        let m = if lo == hi { lo } else { rng.random_range(lo..hi) };
        offdiag[f] = if rng.random::<bool>() { m } else { -m };
    }
    match spec.diag_rule {
        DiagRule::Dominance { margin } => {
            let mut diag = vec![margin; p];
            for (f, w) in offdiag.iter().enumerate() {
                let ix = PairIndex::from_flat(f, p);
                diag[ix.j] += w.abs();
                diag[ix.k] += w.abs();
            }
            PrecisionState::new(diag, offdiag)
        }
        DiagRule::EigenShift { margin } => {
            let unit = PrecisionState::new(vec![1.0; p], offdiag)?;
            // λ_min of the zero-diagonal matrix, clipped so an empty graph gets margin·I
            let shift = (1.0 - unit.min_eigenvalue()).max(0.0) + margin;
            PrecisionState::new(vec![shift; p], unit.offdiag().to_vec())
        }
    }
}

/// `n` rows i.i.d. `N(0, Ω⁻¹)`: with `Ω = L Lᵀ`, each row solves `Lᵀ x = z`.
pub fn sample_mvn<R: Rng + ?Sized>(omega: &PrecisionState, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = omega.p();
    let chol = omega.to_dense().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let lt = chol.l().transpose();
    let mut z = DMatrix::zeros(p, n);
    for i in 0..n {
        for j in 0..p {
            z[(j, i)] = standard_normal(rng);
        }
    }
    let x = lt.solve_upper_triangular(&z).ok_or(Error::NotPositiveDefinite)?;
    Ok(x.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sp: f64,
    pub se: f64,
    pub mcc: f64,
}

/// Confusion counts over off-diagonal positions. An empty denominator makes
/// SP or SE equal to 1 and MCC equal to 0.
pub fn accuracy(selected: &SparsityPattern, truth: &SparsityPattern) -> Result<AccuracyReport> {
    if selected.p() != truth.p() {
        return Err(Error::DimensionMismatch {
            expected: truth.p(),
            got: selected.p(),
        });
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for f in 0..truth.len() {
        match (selected.get(f), truth.get(f)) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 1.0 } else { a as f64 / (a + b) as f64 };
    let (tpf, tnf, fpf, fnf) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let denom = (tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf);
    let mcc = if denom == 0.0 {
        0.0
    } else {
        (tpf * tnf - fpf * fnf) / denom.sqrt()
    };
    Ok(AccuracyReport {
        tp,
        tn,
        fp,
        fn_,
        sp: ratio(tn, fp),
        se: ratio(tp, fn_),
        mcc,
    })
}

/// `‖Ω̂ - Ω⁰‖_F / ‖Ω⁰‖_F` over the full symmetric matrices.
pub fn relative_frobenius(est: &PrecisionState, truth: &PrecisionState) -> Result<f64> {
    if est.p() != truth.p() {
        return Err(Error::DimensionMismatch {
            expected: truth.p(),
            got: est.p(),
        });
    }
    let sq = |d: &mut dyn Iterator<Item = f64>, o: &mut dyn Iterator<Item = f64>| {
        d.map(|v| v * v).sum::<f64>() + 2.0 * o.map(|v| v * v).sum::<f64>()
    };
    let den = sq(&mut truth.diag().iter().copied(), &mut truth.offdiag().iter().copied());
    if den == 0.0 {
        return Err(Error::InvalidData("truth has zero Frobenius norm".into()));
    }
    let num = sq(
        &mut est.diag().iter().zip(truth.diag()).map(|(a, b)| a - b),
        &mut est.offdiag().iter().zip(truth.offdiag()).map(|(a, b)| a - b),
    );
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bssc,
    BsscRefit,
    Bhsc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub p: usize,
    pub n: usize,
    pub density: f64,
    pub reps: usize,
    pub method: Method,
    pub seed: u64,
    #[serde(default)]
    pub diag_rule: DiagRule,
    pub bssc: SpikeSlabConfig,
    pub bhsc: HorseshoeConfig,
    pub refit: RefitConfig,
    pub threshold: f64,
}

impl BenchSpec {
    pub fn new(p: usize, n: usize, density: f64, reps: usize, method: Method, seed: u64) -> Self {
        BenchSpec {
            p,
            n,
            density,
            reps,
            method,
            seed,
            diag_rule: DiagRule::default(),
            bssc: SpikeSlabConfig::default(),
            bhsc: HorseshoeConfig::default(),
            refit: RefitConfig::default(),
            threshold: 0.5,
        }
    }
}

/// Outcome of one replicate; `error` is set when the pipeline failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub rep: usize,
    pub accuracy: Option<AccuracyReport>,
    /// Error of the sampler's own estimate.
    pub rel_frobenius: Option<f64>,
    pub rel_frobenius_refit: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<RepRow>,
    pub mean_sp: f64,
    pub mean_se: f64,
    pub mean_mcc: f64,
    pub mean_rel_frobenius: f64,
    pub mean_rel_frobenius_refit: Option<f64>,
    pub failed: usize,
}

fn run_rep(spec: &BenchSpec, truth: &PrecisionState, rep: usize) -> Result<RepRow> {
    let rep_seed = derive_seed(spec.seed, rep as u64);
    let data = sample_mvn(truth, spec.n, &mut SeededRng::new(rep_seed, streams::DATA))?;
    let s = SampleCovariance::from_data(&data, true)?;
    let truth_pattern =
        SparsityPattern::from_bools(spec.p, &truth.offdiag().iter().map(|w| *w != 0.0).collect::<Vec<_>>())?;
    let mut chain_rng = SeededRng::new(rep_seed, streams::chain(0));
    let (selected, estimate) = match spec.method {
        Method::Bssc | Method::BsscRefit => {
            let trace = run_chain(&s, spec.n, &spec.bssc, None, &mut chain_rng)?;
            let sm = summarize(&trace, spec.threshold)?;
            (sm.selected, sm.estimate)
        }
        Method::Bhsc => {
            let trace = run_chain_bhsc(&s, spec.n, &spec.bhsc, None, &mut chain_rng)?;
            let sm = summarize_bhsc(&trace, spec.bhsc.level)?;
            (sm.selected, sm.mean)
        }
    };
    let acc = accuracy(&selected, &truth_pattern)?;
    let rel = relative_frobenius(&estimate, truth)?;
    let refit = if spec.method == Method::BsscRefit {
        let g = GraphConstraint::new(selected);
        let res = refit_gibbs(
            &s,
            &g,
            spec.n,
            &spec.refit,
            &mut SeededRng::new(rep_seed, streams::refit(0)),
        )?;
        Some(relative_frobenius(res.projected.as_ref().unwrap_or(&res.mean), truth)?)
    } else {
        None
    };
    Ok(RepRow {
        rep,
        accuracy: Some(acc),
        rel_frobenius: Some(rel),
        rel_frobenius_refit: refit,
        error: None,
    })
}

/// One truth shared by all replicates; replicate `r` draws its data and
/// chains from `derive_seed(seed, r)`. Rows come back in replicate order.
pub fn replicate(spec: &BenchSpec) -> Result<BenchReport> {
    if spec.reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let truth_spec = TruthSpec {
        diag_rule: spec.diag_rule,
        ..TruthSpec::new(spec.p, spec.density)
    };
    let truth = generate_truth(&truth_spec, &mut SeededRng::new(spec.seed, streams::TRUTH))?;
    let rows: Vec<RepRow> = (0..spec.reps)
        .into_par_iter()
        .map(|r| {
            run_rep(spec, &truth, r).unwrap_or_else(|e| RepRow {
                rep: r,
                accuracy: None,
                rel_frobenius: None,
                rel_frobenius_refit: None,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let ok: Vec<&RepRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let failed = rows.len() - ok.len();
    let mean = |f: &dyn Fn(&RepRow) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    let acc = |r: &RepRow| r.accuracy.expect("successful rows carry accuracy");
    let report = BenchReport {
        mean_sp: mean(&|r| acc(r).sp),
        mean_se: mean(&|r| acc(r).se),
        mean_mcc: mean(&|r| acc(r).mcc),
        mean_rel_frobenius: mean(&|r| r.rel_frobenius.unwrap_or(f64::NAN)),
        mean_rel_frobenius_refit: (spec.method == Method::BsscRefit)
            .then(|| mean(&|r| r.rel_frobenius_refit.unwrap_or(f64::NAN))),
        failed,
        rows,
    };
    Ok(report)
}
