//! File formats: CSV matrices, graph JSON and structured outputs.

use std::fs;
use std::path::Path;

use bconcord::{PairIndex, PrecisionState, SparsityPattern};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Parses a numeric CSV; every row must have the same width.
pub fn parse_csv_matrix(bytes: &[u8], header: bool, what: &str) -> Result<DMatrix<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{what}: {e}")))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f64>().map_err(|_| {
                    CliError::Usage(format!("{what}: row {} column {}: '{f}' is not a number", i + 1, j + 1))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::Usage(format!(
                    "{what}: row {} has {} fields, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{what}: no rows")));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

/// Writes a matrix as CSV with shortest round-trip float formatting.
pub fn matrix_csv(m: &DMatrix<f64>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// `{p, edges: [[j, k], ...]}` with 0-based indices, `j < k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub p: usize,
    pub edges: Vec<[usize; 2]>,
}

impl GraphJson {
    pub fn from_pattern(pattern: &SparsityPattern) -> Self {
        GraphJson {
            p: pattern.p(),
            edges: pattern.edges().map(|ix| [ix.j, ix.k]).collect(),
        }
    }

    pub fn to_pattern(&self) -> Result<SparsityPattern, CliError> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        SparsityPattern::from_edges(self.p, &edges).map_err(|e| CliError::Usage(format!("graph: {e}")))
    }
}

/// Reads `p` and `edges` from any JSON object carrying them (graph files and fit outputs).
pub fn read_graph(path: &Path) -> Result<(SparsityPattern, Vec<u8>), CliError> {
    let bytes = read_bytes(path)?;
    let g: GraphJson = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("{}: expected {{\"p\", \"edges\"}}: {e}", path.display())))?;
    Ok((g.to_pattern()?, bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateJson {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl From<&PrecisionState> for StateJson {
    fn from(s: &PrecisionState) -> Self {
        StateJson {
            diag: s.diag().to_vec(),
            offdiag: s.offdiag().to_vec(),
        }
    }
}

impl StateJson {
    pub fn to_state(&self) -> Result<PrecisionState, CliError> {
        PrecisionState::new(self.diag.clone(), self.offdiag.clone())
            .map_err(|e| CliError::Usage(format!("estimate: {e}")))
    }
}

/// The estimate inside a fit or refit output: `projected` when present, else `mean`, else `estimate`.
pub fn read_estimate(path: &Path) -> Result<(PrecisionState, Vec<u8>), CliError> {
    let bytes = read_bytes(path)?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let field = ["projected", "mean", "estimate"]
        .iter()
        .find_map(|k| v.get(*k).filter(|x| !x.is_null()))
        .ok_or_else(|| CliError::Usage(format!("{}: no projected, mean or estimate field", path.display())))?;
    let st: StateJson =
        serde_json::from_value(field.clone()).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((st.to_state()?, bytes))
}

/// `(j, k)` for every flat slot, so flat arrays can be read without the index formula.
pub fn pair_table(p: usize) -> Vec<[usize; 2]> {
    bconcord::pairs(p).map(|PairIndex { j, k, .. }| [j, k]).collect()
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}
