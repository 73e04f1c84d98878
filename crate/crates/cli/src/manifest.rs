//! Run manifests embedded in every structured output.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

/// Per-sweep wall-clock summary in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingSummary {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Nearest-rank p50/p95 of the sweep timings; `None` when there are none.
pub fn report_timing(timings: &[f64]) -> Option<TimingSummary> {
    if timings.is_empty() {
        return None;
    }
    let mut sorted = timings.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = |q: f64| sorted[((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
    Some(TimingSummary {
        count: sorted.len(),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p50: rank(0.5),
        p95: rank(0.95),
    })
}

/// Everything that varies between otherwise identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct Runtime {
    pub threads: usize,
    pub wall_seconds: f64,
    pub sweeps: Option<TimingSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// The effective configuration after merging flags, config file and defaults.
    pub config: Value,
    /// SHA-256 of each input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
    pub runtime: Runtime,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            runtime: Runtime {
                threads: rayon::current_num_threads(),
                wall_seconds: 0.0,
                sweeps: None,
            },
        }
    }

    pub fn input(&mut self, role: &str, bytes: &[u8]) {
        self.inputs.insert(role.to_string(), crate::io::sha256_hex(bytes));
    }
}

/// A result payload with its manifest appended as the last field.
#[derive(Serialize)]
pub struct WithManifest<'a, T: Serialize> {
    #[serde(flatten)]
    pub result: &'a T,
    pub manifest: &'a Manifest,
}
