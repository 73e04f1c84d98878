//! One function per subcommand; each returns the bytes it wants on stdout.

use std::path::{Path, PathBuf};
use std::time::Instant;

use bconcord::bhsc::{run_chains_bhsc, summarize_bhsc};
use bconcord::bssc::{run_chains, summarize, SpikeSlabConfig};
use bconcord::oracle::{enumerate_patterns, marginal_inclusion, RankedPattern};
use bconcord::refit::{refit_gibbs, EntrySummary, GraphConstraint};
use bconcord::rng::{streams, SeededRng};
use bconcord::simulate::{
    accuracy, generate_truth, relative_frobenius, replicate, sample_mvn, AccuracyReport, BenchReport, DiagRule,
    TruthSpec,
};
use bconcord::{PrecisionState, SampleCovariance};
use serde::Serialize;

use crate::args::{
    BenchArgs, DiagRuleArg, EnumerateArgs, EvalArgs, FitArgs, InputArgs, Prior, RefitArgs, SimulateArgs,
};
use crate::config::{load_toml, BenchFile, FitSettings, RefitFile, RefitSettings, SamplerFile};
use crate::error::CliError;
use crate::io::{
    matrix_csv, pair_table, parse_csv_matrix, read_bytes, read_estimate, read_graph, to_json_bytes, write_file,
    GraphJson, StateJson,
};
use crate::manifest::{report_timing, Manifest, WithManifest};

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(e.to_string()))
}

/// Writes `result` plus manifest to `out`, or returns it for stdout.
fn emit<T: Serialize>(
    result: &T,
    manifest: &mut Manifest,
    started: Instant,
    out: Option<&Path>,
) -> Result<Vec<u8>, CliError> {
    manifest.runtime.wall_seconds = started.elapsed().as_secs_f64();
    let bytes = to_json_bytes(&WithManifest { result, manifest })?;
    match out {
        Some(path) => write_file(path, &bytes).map(|_| Vec::new()),
        None => Ok(bytes),
    }
}

/// Loads the covariance and sample size from `--data` or `--cov --n`.
fn load_input(input: &InputArgs, manifest: &mut Manifest) -> Result<(SampleCovariance, usize), CliError> {
    match (&input.data, &input.cov) {
        (None, None) => Err(CliError::Usage("either --data or --cov required".into())),
        (Some(_), Some(_)) => Err(CliError::Usage("give only one of --data and --cov".into())),
        (Some(path), None) => {
            let bytes = read_bytes(path)?;
            manifest.input("data", &bytes);
            let data = parse_csv_matrix(&bytes, input.header, "data")?;
            let n = data.nrows();
            Ok((SampleCovariance::from_data(&data, true)?, n))
        }
        (None, Some(path)) => {
            let n = input.n.ok_or_else(|| CliError::Usage("--cov requires --n".into()))?;
            let bytes = read_bytes(path)?;
            manifest.input("cov", &bytes);
            let m = parse_csv_matrix(&bytes, false, "cov")?;
            Ok((SampleCovariance::from_matrix(m)?, n))
        }
    }
}

#[derive(Serialize)]
struct SimulateConfig {
    p: usize,
    n: usize,
    density: f64,
    diag_rule: DiagRule,
    magnitude: (f64, f64),
}

pub fn simulate(a: &SimulateArgs) -> Result<Vec<u8>, CliError> {
    let started = Instant::now();
    let diag_rule = match a.diag_rule {
        DiagRuleArg::Dominance => DiagRule::Dominance {
            margin: a.margin.unwrap_or(0.5),
        },
        DiagRuleArg::EigenShift => DiagRule::EigenShift {
            margin: a.margin.unwrap_or(0.1),
        },
    };
    let spec = TruthSpec {
        diag_rule,
        ..TruthSpec::new(a.p, a.density)
    };
    spec.validate()?;
    let truth = generate_truth(&spec, &mut SeededRng::new(a.seed, streams::TRUTH))?;
    let data = sample_mvn(&truth, a.n, &mut SeededRng::new(a.seed, streams::DATA))?;
    let prefix = PathBuf::from(&a.out_prefix);
    let path = |name: &str| PathBuf::from(format!("{}{name}", prefix.display()));
    write_file(&path("truth.csv"), &matrix_csv(&truth.to_dense())?)?;
    write_file(&path("data.csv"), &matrix_csv(&data)?)?;
    let cfg = SimulateConfig {
        p: a.p,
        n: a.n,
        density: a.density,
        diag_rule,
        magnitude: spec.magnitude,
    };
    let mut manifest = Manifest::new("simulate", Some(a.seed), to_value(&cfg)?);
    let graph = GraphJson::from_pattern(&bconcord::pattern_of(&truth, 0.0));
    emit(&graph, &mut manifest, started, Some(&path("truth_pattern.json")))
}

#[derive(Serialize)]
struct FitOutput {
    p: usize,
    n: usize,
    prior: Prior,
    seed: u64,
    /// `(j, k)` of each flat slot.
    pairs: Vec<[usize; 2]>,
    inclusion: Option<Vec<f64>>,
    estimate: StateJson,
    selected: Vec<u8>,
    edges: Vec<[usize; 2]>,
    mean: Option<StateJson>,
    ci_lo: Option<Vec<f64>>,
    ci_hi: Option<Vec<f64>>,
}

pub fn fit(a: &FitArgs) -> Result<Vec<u8>, CliError> {
    let started = Instant::now();
    let (file, file_bytes) = load_toml::<SamplerFile>(a.config.as_deref())?;
    let set = FitSettings::merge(a, file);
    let mut manifest = Manifest::new("fit", Some(set.seed), to_value(&set)?);
    if let Some(b) = file_bytes {
        manifest.input("config", &b);
    }
    let (s, n) = load_input(&a.input, &mut manifest)?;
    let p = s.p();
    let out = match set.prior {
        Prior::SpikeSlab => {
            let (trace, timings) = run_chains(&s, n, &set.spike_slab, None, set.seed, set.chains)?;
            manifest.runtime.sweeps = report_timing(&timings);
            let sm = summarize(&trace, set.threshold)?;
            FitOutput {
                p,
                n,
                prior: set.prior,
                seed: set.seed,
                pairs: pair_table(p),
                inclusion: Some(sm.inclusion),
                estimate: StateJson::from(&sm.estimate),
                selected: sm.selected.to_bools().iter().map(|b| u8::from(*b)).collect(),
                edges: GraphJson::from_pattern(&sm.selected).edges,
                mean: None,
                ci_lo: None,
                ci_hi: None,
            }
        }
        Prior::Horseshoe => {
            set.horseshoe.validate()?;
            let (trace, timings) = run_chains_bhsc(&s, n, &set.horseshoe, None, set.seed, set.chains)?;
            manifest.runtime.sweeps = report_timing(&timings);
            let sm = summarize_bhsc(&trace, set.horseshoe.level)?;
            FitOutput {
                p,
                n,
                prior: set.prior,
                seed: set.seed,
                pairs: pair_table(p),
                inclusion: None,
                estimate: StateJson::from(&sm.mean),
                selected: sm.selected.to_bools().iter().map(|b| u8::from(*b)).collect(),
                edges: GraphJson::from_pattern(&sm.selected).edges,
                mean: Some(StateJson::from(&sm.mean)),
                ci_lo: Some(sm.ci_lo),
                ci_hi: Some(sm.ci_hi),
            }
        }
    };
    emit(&out, &mut manifest, started, a.out.as_deref())
}

#[derive(Serialize)]
struct RefitOutput {
    p: usize,
    n: usize,
    seed: u64,
    edges: Vec<[usize; 2]>,
    graph_degree: usize,
    mode: StateJson,
    mean: StateJson,
    min_eigenvalue: f64,
    projected: Option<StateJson>,
    /// Diagonals first, then edges in canonical order.
    entries: Vec<EntrySummary>,
}

pub fn refit(a: &RefitArgs) -> Result<Vec<u8>, CliError> {
    let started = Instant::now();
    let (file, file_bytes) = load_toml::<RefitFile>(a.config.as_deref())?;
    let set = RefitSettings::merge(a, file);
    let mut manifest = Manifest::new("refit", Some(set.seed), to_value(&set)?);
    if let Some(b) = file_bytes {
        manifest.input("config", &b);
    }
    let (pattern, gbytes) = read_graph(&a.graph)?;
    manifest.input("graph", &gbytes);
    let (s, n) = load_input(&a.input, &mut manifest)?;
    if pattern.p() != s.p() {
        return Err(CliError::Usage(format!(
            "graph has p = {} but the data have p = {}",
            pattern.p(),
            s.p()
        )));
    }
    let g = GraphConstraint::new(pattern);
    let res = refit_gibbs(&s, &g, n, &set.refit, &mut SeededRng::new(set.seed, streams::refit(0)))?;
    let out = RefitOutput {
        p: s.p(),
        n,
        seed: set.seed,
        edges: GraphJson::from_pattern(&g.edges).edges,
        graph_degree: res.graph_degree,
        mode: StateJson::from(&res.mode),
        mean: StateJson::from(&res.mean),
        min_eigenvalue: res.min_eigenvalue,
        projected: res.projected.as_ref().map(StateJson::from),
        entries: res.entries,
    };
    emit(&out, &mut manifest, started, a.out.as_deref())
}

#[derive(Serialize)]
struct EnumerateConfig {
    q: f64,
    lambda: f64,
    tau: Option<usize>,
    top: usize,
}

#[derive(Serialize)]
struct EnumerateOutput {
    p: usize,
    n: usize,
    diag: Vec<f64>,
    log_norm: f64,
    pairs: Vec<[usize; 2]>,
    marginals: Vec<f64>,
    patterns: Vec<RankedPattern>,
}

pub fn enumerate(a: &EnumerateArgs) -> Result<Vec<u8>, CliError> {
    let started = Instant::now();
    let cfg = EnumerateConfig {
        q: a.q,
        lambda: a.lambda,
        tau: a.tau,
        top: a.top,
    };
    let mut manifest = Manifest::new("enumerate", None, to_value(&cfg)?);
    let cbytes = read_bytes(&a.cov)?;
    manifest.input("cov", &cbytes);
    let s = SampleCovariance::from_matrix(parse_csv_matrix(&cbytes, false, "cov")?)?;
    let dbytes = read_bytes(&a.diag)?;
    manifest.input("diag", &dbytes);
    let diag: Vec<f64> = parse_csv_matrix(&dbytes, false, "diag")?.iter().copied().collect();
    if diag.len() != s.p() {
        return Err(CliError::Usage(format!(
            "diag has {} values, expected p = {}",
            diag.len(),
            s.p()
        )));
    }
    let sampler = SpikeSlabConfig {
        q: a.q,
        lambda: vec![a.lambda],
        tau: a.tau,
        hyper: None,
        ..Default::default()
    };
    let post = enumerate_patterns(&s, a.n, &diag, &sampler)?;
    let out = EnumerateOutput {
        p: s.p(),
        n: a.n,
        diag,
        log_norm: post.log_norm,
        pairs: pair_table(s.p()),
        marginals: marginal_inclusion(&post),
        patterns: post.top(a.top).into_iter().map(RankedPattern::from).collect(),
    };
    emit(&out, &mut manifest, started, a.out.as_deref())
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    accuracy: AccuracyReport,
    rel_frobenius: Option<f64>,
}

pub fn eval(a: &EvalArgs) -> Result<Vec<u8>, CliError> {
    let started = Instant::now();
    let mut manifest = Manifest::new("eval", None, serde_json::Value::Object(Default::default()));
    let (sel, sb) = read_graph(&a.selected)?;
    manifest.input("selected", &sb);
    let (truth, tb) = read_graph(&a.truth)?;
    manifest.input("truth", &tb);
    let acc = accuracy(&sel, &truth)?;
    let rel = match (&a.est, &a.truth_matrix) {
        (Some(est), Some(tm)) => {
            let (est, eb) = read_estimate(est)?;
            manifest.input("est", &eb);
            let mb = read_bytes(tm)?;
            manifest.input("truth_matrix", &mb);
            let truth_m = PrecisionState::from_dense(&parse_csv_matrix(&mb, false, "truth matrix")?)?;
            Some(relative_frobenius(&est, &truth_m)?)
        }
        _ => None,
    };
    emit(
        &EvalOutput {
            accuracy: acc,
            rel_frobenius: rel,
        },
        &mut manifest,
        started,
        a.out.as_deref(),
    )
}

pub fn bench(a: &BenchArgs) -> Result<Vec<u8>, CliError> {
    let started = Instant::now();
    let (file, bytes) = load_toml::<BenchFile>(Some(&a.spec))?;
    let spec = file.to_spec()?;
    let mut manifest = Manifest::new("bench", Some(spec.seed), to_value(&spec)?);
    if let Some(b) = bytes {
        manifest.input("spec", &b);
    }
    let report: BenchReport = replicate(&spec)?;
    emit(&report, &mut manifest, started, a.out.as_deref())
}
