//! TOML configuration files and their merge with flags (flags win).

use std::path::Path;

use bconcord::bhsc::HorseshoeConfig;
use bconcord::bssc::{DiagMode, GammaHyper, SpikeSlabConfig, ZeroRule};
use bconcord::refit::RefitConfig;
use bconcord::simulate::{BenchSpec, DiagRule, Method};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::args::{DiagModeArg, FitArgs, Prior, RefitArgs, ZeroRuleArg};
use crate::error::CliError;

pub fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, Option<Vec<u8>>), CliError> {
    let Some(path) = path else {
        return Ok((T::default(), None));
    };
    let bytes = crate::io::read_bytes(path)?;
    let text =
        String::from_utf8(bytes.clone()).map_err(|_| CliError::Usage(format!("{}: not UTF-8", path.display())))?;
    let v = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((v, Some(bytes)))
}

/// Sampler options shared by fit files and bench specs.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerFile {
    pub prior: Option<Prior>,
    pub burnin: Option<usize>,
    pub keep: Option<usize>,
    pub q: Option<f64>,
    pub r: Option<f64>,
    pub s: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub fixed: Option<bool>,
    pub zero_rule: Option<ZeroRuleArg>,
    pub tau: Option<usize>,
    pub diag_mode: Option<DiagModeArg>,
    pub threshold: Option<f64>,
    pub ci: Option<f64>,
    pub chains: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSettings {
    pub prior: Prior,
    pub spike_slab: SpikeSlabConfig,
    pub horseshoe: HorseshoeConfig,
    pub threshold: f64,
    pub chains: usize,
    pub seed: u64,
}

fn diag_mode(a: DiagModeArg) -> DiagMode {
    match a {
        DiagModeArg::PointMass => DiagMode::PointMass,
        DiagModeArg::Discretized => DiagMode::Discretized,
    }
}

fn zero_rule(a: ZeroRuleArg) -> ZeroRule {
    match a {
        ZeroRuleArg::Prior => ZeroRule::Prior,
        ZeroRuleArg::Formula => ZeroRule::Formula,
    }
}

impl FitSettings {
    /// `f` holds flag values already merged over file values.
    fn build(f: &SamplerFile) -> FitSettings {
        let base = SpikeSlabConfig::default();
        let h = GammaHyper::default();
        let hyper = GammaHyper {
            r: f.r.unwrap_or(h.r),
            s: f.s.unwrap_or(h.s),
            zero_rule: f.zero_rule.map(zero_rule).unwrap_or(h.zero_rule),
        };
        let dm = f.diag_mode.map(diag_mode).unwrap_or(base.diag_mode);
        let spike_slab = SpikeSlabConfig {
            q: f.q.unwrap_or(base.q),
            lambda: vec![f.lambda.unwrap_or(1.0)],
            gamma: vec![f.gamma.unwrap_or(1.0)],
            hyper: if f.fixed.unwrap_or(false) { None } else { Some(hyper) },
            tau: f.tau,
            burn_in: f.burnin.unwrap_or(base.burn_in),
            keep: f.keep.unwrap_or(base.keep),
            thin: 0,
            diag_mode: dm,
        };
        let hb = HorseshoeConfig::default();
        let horseshoe = HorseshoeConfig {
            gamma: f.gamma.unwrap_or(hb.gamma),
            burn_in: spike_slab.burn_in,
            keep: spike_slab.keep,
            level: f.ci.unwrap_or(hb.level),
            diag_mode: dm,
        };
        FitSettings {
            prior: f.prior.unwrap_or(Prior::SpikeSlab),
            spike_slab,
            horseshoe,
            threshold: f.threshold.unwrap_or(0.5),
            chains: f.chains.unwrap_or(1),
            seed: f.seed.unwrap_or(0),
        }
    }

    pub fn merge(a: &FitArgs, file: SamplerFile) -> FitSettings {
        let merged = SamplerFile {
            prior: a.prior.or(file.prior),
            burnin: a.burnin.or(file.burnin),
            keep: a.keep.or(file.keep),
            q: a.q.or(file.q),
            r: a.r.or(file.r),
            s: a.s.or(file.s),
            lambda: a.lambda.or(file.lambda),
            gamma: a.gamma.or(file.gamma),
            fixed: if a.fixed { Some(true) } else { file.fixed },
            zero_rule: a.zero_rule.or(file.zero_rule),
            tau: a.tau.or(file.tau),
            diag_mode: a.diag_mode.or(file.diag_mode),
            threshold: a.threshold.or(file.threshold),
            ci: a.ci.or(file.ci),
            chains: a.chains.or(file.chains),
            seed: a.seed.or(file.seed),
        };
        FitSettings::build(&merged)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefitFile {
    pub sweeps: Option<usize>,
    pub burnin: Option<usize>,
    pub eps: Option<f64>,
    pub ci: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefitSettings {
    pub refit: RefitConfig,
    pub seed: u64,
}

impl RefitSettings {
    pub fn merge(a: &RefitArgs, f: RefitFile) -> RefitSettings {
        let d = RefitConfig::default();
        RefitSettings {
            refit: RefitConfig {
                sweeps: a.sweeps.or(f.sweeps).unwrap_or(d.sweeps),
                burn_in: a.burnin.or(f.burnin).unwrap_or(d.burn_in),
                level: a.ci.or(f.ci).unwrap_or(d.level),
                eps: a.eps.or(f.eps).unwrap_or(d.eps),
            },
            seed: a.seed.or(f.seed).unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagRuleName {
    Dominance,
    EigenShift,
}

/// A bench spec: problem size, replicate count, method and sampler options.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFile {
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub density: Option<f64>,
    pub reps: Option<usize>,
    pub method: Option<Method>,
    pub diag_rule: Option<DiagRuleName>,
    pub margin: Option<f64>,
    pub refit_sweeps: Option<usize>,
    pub refit_burnin: Option<usize>,
    pub eps: Option<f64>,
    #[serde(flatten)]
    pub sampler: SamplerFile,
}

impl BenchFile {
    pub fn to_spec(&self) -> Result<BenchSpec, CliError> {
        let need = |v: Option<usize>, k: &str| v.ok_or_else(|| CliError::Usage(format!("bench spec: missing `{k}`")));
        let density = self
            .density
            .ok_or_else(|| CliError::Usage("bench spec: missing `density`".into()))?;
        let fit = FitSettings::build(&self.sampler);
        let method = self.method.unwrap_or(if fit.prior == Prior::Horseshoe {
            Method::Bhsc
        } else {
            Method::Bssc
        });
        let diag_rule = match (self.diag_rule, self.margin) {
            (None | Some(DiagRuleName::Dominance), m) => DiagRule::Dominance {
                margin: m.unwrap_or(0.5),
            },
            (Some(DiagRuleName::EigenShift), m) => DiagRule::EigenShift {
                margin: m.unwrap_or(0.1),
            },
        };
        let mut spec = BenchSpec::new(
            need(self.p, "p")?,
            need(self.n, "n")?,
            density,
            need(self.reps, "reps")?,
            method,
            fit.seed,
        );
        spec.diag_rule = diag_rule;
        spec.bssc = fit.spike_slab;
        spec.bhsc = fit.horseshoe;
        spec.threshold = fit.threshold;
        let d = RefitConfig::default();
        spec.refit = RefitConfig {
            sweeps: self.refit_sweeps.unwrap_or(d.sweeps),
            burn_in: self.refit_burnin.unwrap_or(d.burn_in),
            level: spec.bhsc.level,
            eps: self.eps.unwrap_or(d.eps),
        };
        Ok(spec)
    }
}
