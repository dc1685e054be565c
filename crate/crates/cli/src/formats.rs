//! On-disk formats: JSON count and process files, CSV tables.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use qpt_core::metrics::ScatterTable;
use qpt_core::process::{basis_by_name, ProcessMatrix};
use qpt_core::recon::Histogram;
use qpt_core::tomo::{CountNoise, CountRecord, CountSet, NoiseSpec, N_SETTINGS};
use qpt_core::CMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

const TWO_QUBIT_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountFile {
    pub dimension: usize,
    pub total_pairs: f64,
    pub seed: Option<u64>,
    pub noise: Option<NoiseEntry>,
    pub records: Vec<RecordEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    pub depolarizing: f64,
    pub dephasing: f64,
    pub count_noise: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub input: String,
    pub analyzer: String,
    pub counts: u64,
}

impl CountFile {
    pub fn from_counts(set: &CountSet) -> Self {
        Self {
            dimension: TWO_QUBIT_DIM,
            total_pairs: set.total_pairs(),
            seed: set.seed,
            noise: set.noise.map(|n| NoiseEntry {
                depolarizing: n.depolarizing,
                dephasing: n.dephasing,
                count_noise: n.count_noise.as_str().to_string(),
            }),
            records: set
                .records()
                .iter()
                .map(|r| RecordEntry { input: r.input.clone(), analyzer: r.analyzer.clone(), counts: r.counts })
                .collect(),
        }
    }

    pub fn to_counts(&self) -> Result<CountSet, CliError> {
        if self.dimension != TWO_QUBIT_DIM {
            return Err(CliError::Input(format!("dimension: expected 4, got {}", self.dimension)));
        }
        if self.records.len() != N_SETTINGS {
            return Err(CliError::Input(format!("records: expected {N_SETTINGS} entries, got {}", self.records.len())));
        }
        let records = self
            .records
            .iter()
            .map(|r| CountRecord { input: r.input.clone(), analyzer: r.analyzer.clone(), counts: r.counts })
            .collect();
        let mut set = CountSet::new(records, self.total_pairs).map_err(|e| CliError::Input(format!("records: {e}")))?;
        set.seed = self.seed;
        set.noise = match &self.noise {
            None => None,
            Some(n) => {
                let count_noise: CountNoise =
                    n.count_noise.parse().map_err(|e| CliError::Input(format!("noise.count_noise: {e}")))?;
                Some(
                    NoiseSpec::new(n.depolarizing, n.dephasing, count_noise)
                        .map_err(|e| CliError::Input(format!("noise: {e}")))?,
                )
            }
        };
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiFile {
    pub dimension: usize,
    pub basis: String,
    pub flags: Vec<String>,
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
}

impl ChiFile {
    pub fn from_process(chi: &ProcessMatrix) -> Self {
        let m = chi.chi();
        let rows = |f: fn(&qpt_core::C64) -> f64| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        Self {
            dimension: chi.dim(),
            basis: chi.basis().name().to_string(),
            flags: vec![chi.constraint().as_str().to_string()],
            real: rows(|z| z.re),
            imag: rows(|z| z.im),
        }
    }

    /// Rebuilds the process; a `physical` flag is re-verified, never trusted.
    pub fn to_process(&self) -> Result<ProcessMatrix, CliError> {
        let basis = basis_by_name(&self.basis).map_err(|e| CliError::Input(format!("basis: {e}")))?;
        if self.dimension != basis.dim() {
            return Err(CliError::Input(format!(
                "dimension: basis {} has dimension {}, file says {}",
                self.basis,
                basis.dim(),
                self.dimension
            )));
        }
        let n = basis.len();
        for (name, m) in [("real", &self.real), ("imag", &self.imag)] {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(CliError::Input(format!("{name}: expected a {n}x{n} array")));
            }
        }
        let chi = CMatrix::from_fn(n, n, |i, j| qpt_core::qcore::c(self.real[i][j], self.imag[i][j]));
        let physical = match self.flags.as_slice() {
            [f] if f == "physical" => true,
            [f] if f == "unconstrained" => false,
            other => {
                return Err(CliError::Input(format!(
                    "flags: expected [\"physical\"] or [\"unconstrained\"], got {other:?}"
                )))
            }
        };
        let built = if physical {
            ProcessMatrix::physical(chi, basis)
        } else {
            ProcessMatrix::unconstrained(chi, basis)
        };
        built.map_err(|e| CliError::Input(format!("chi: {e}")))
    }
}

/// Reads JSON from `path`, or from `stdin` when `path` is `None` or `-`.
pub fn read_json<T: DeserializeOwned>(path: Option<&Path>, stdin: &mut dyn Read) -> Result<T, CliError> {
    let (source, text) = match path {
        Some(p) if p != Path::new("-") => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
            (p.display().to_string(), text)
        }
        _ => {
            let mut text = String::new();
            stdin.read_to_string(&mut text).map_err(|e| CliError::Input(format!("cannot read stdin: {e}")))?;
            ("<stdin>".to_string(), text)
        }
    };
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        CliError::Input(format!("{source}: field `{field}`: {}", e.inner()))
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    text
}

/// Writes `text` to `path`, or to `stdout` when `path` is `None` or `-`.
pub fn write_text(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))
        }
        _ => stdout.write_all(text.as_bytes()).map_err(|e| CliError::Input(format!("cannot write stdout: {e}"))),
    }
}

/// Fixed nine-decimal rendering used by every CSV table; negative zero prints as zero.
pub fn csv_number(x: f64) -> String {
    let s = format!("{x:.9}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub const SCATTER_HEADER: &str = "input_tangle,output_tangle,delta_tangle,fidelity,entropy_added";

pub fn scatter_csv(table: &ScatterTable) -> String {
    let mut out = String::with_capacity(64 * (table.rows.len() + 1));
    out.push_str(SCATTER_HEADER);
    out.push('\n');
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_number(r.input_tangle),
            csv_number(r.output_tangle),
            csv_number(r.delta_tangle),
            csv_number(r.fidelity),
            csv_number(r.entropy_added)
        );
    }
    out
}

pub const HISTOGRAM_HEADER: &str = "center,count";

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from(HISTOGRAM_HEADER);
    out.push('\n');
    for (center, count) in h.centers.iter().zip(&h.counts) {
        let _ = writeln!(out, "{},{count}", csv_number(*center));
    }
    out
}
