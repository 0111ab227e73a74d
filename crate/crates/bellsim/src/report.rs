//! Report emission: a schema-versioned JSON document for machines and a
//! plain table for humans.
//!
//! JSON output is byte-stable for equal reports: field order is fixed by
//! the struct definitions and floats are serialized in shortest
//! round-trip form, which preserves every bit of the value. Reports carry
//! no timestamps; the only run-to-run variation possible is the seed and
//! the config itself, both of which are part of the document.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bell::{BellKind, SignVariant};
use crate::measure::{BellEstimate, Method};
use crate::stats::CrossoverScan;
use crate::{Error, Result};

/// Version of the report document layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Output flavor for [`emit_report`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            other => Err(Error::Usage(format!(
                "unknown format `{other}` (expected json or table)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub method: Method,
    pub sign: SignVariant,
    pub value: f64,
    pub std_error: f64,
    /// 0 marks an exact (infinite-pair) evaluation.
    pub pairs_used: u64,
}

impl From<BellEstimate> for EstimateEntry {
    fn from(e: BellEstimate) -> Self {
        Self {
            method: e.method,
            sign: e.sign,
            value: e.value,
            std_error: e.std_error,
            pairs_used: e.pairs_used,
        }
    }
}

/// Bell-state discrimination from the (S'+, S'-) sign pattern.
/// `state: None` means unclassified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEntry {
    pub s_plus: f64,
    pub s_minus: f64,
    pub tol: f64,
    pub state: Option<BellKind>,
}

/// Variance comparison for one (method, sign) pair: the closed-form
/// prediction, the first-order propagation value, and the Monte Carlo
/// measurement. `note` flags a material disagreement between the two
/// predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEntry {
    pub method: Method,
    pub sign: SignVariant,
    pub n_total: u64,
    pub trials: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s_magnitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predicted_closed_form: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predicted_propagation: Option<f64>,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    pub empirical_variance_stderr: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// The report document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub generator: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// SHA-256 over the canonical JSON of the experiment configuration
    /// (or the analysis inputs), for provenance.
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub estimates: Vec<EstimateEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classification: Option<ClassificationEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub variances: Vec<VarianceEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub crossover: Option<CrossoverScan>,
}

impl Report {
    pub fn new(seed: Option<u64>, config_sha256: String) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            generator: format!("bellsim {}", env!("CARGO_PKG_VERSION")),
            seed,
            config_sha256,
            estimates: Vec::new(),
            classification: None,
            variances: Vec::new(),
            crossover: None,
        }
    }
}

/// SHA-256 of a serializable value's canonical JSON, hex-encoded.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(value)?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

fn classification_label(c: &ClassificationEntry) -> String {
    match c.state {
        Some(kind) => format!("{kind} (HV)"),
        None => "unclassified".to_string(),
    }
}

fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "bellsim report (schema v{})", report.schema_version);
    if let Some(seed) = report.seed {
        let _ = writeln!(out, "seed: {seed}");
    }
    let _ = writeln!(out, "config: {}", report.config_sha256);

    if !report.estimates.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:<5} {:>14} {:>14} {:>10}",
            "method", "sign", "value", "std error", "pairs"
        );
        for e in &report.estimates {
            let _ = writeln!(
                out,
                "{:<12} {:<5} {:>14.9} {:>14.9} {:>10}",
                e.method.to_string(),
                e.sign.to_string(),
                e.value,
                e.std_error,
                e.pairs_used
            );
        }
    }

    if let Some(c) = &report.classification {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "classification: {}   [S'+ = {:.9}, S'- = {:.9}, tol = {}]",
            classification_label(c),
            c.s_plus,
            c.s_minus,
            c.tol
        );
    }

    if !report.variances.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:<5} {:>13} {:>13} {:>13} {:>12} {:>8}",
            "variance of", "sign", "closed form", "propagation", "empirical", "stderr", "trials"
        );
        for v in &report.variances {
            let opt = |x: Option<f64>| match x {
                Some(x) => format!("{x:.6e}"),
                None => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<12} {:<5} {:>13} {:>13} {:>13.6e} {:>12.4e} {:>8}",
                v.method.to_string(),
                v.sign.to_string(),
                opt(v.predicted_closed_form),
                opt(v.predicted_propagation),
                v.empirical_variance,
                v.empirical_variance_stderr,
                v.trials
            );
            if let Some(note) = &v.note {
                let _ = writeln!(out, "    note: {note}");
            }
        }
    }

    if let Some(scan) = &report.crossover {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "crossover scan (N = {}, trials = {})",
            scan.n_total, scan.trials
        );
        let _ = writeln!(
            out,
            "{:>6} {:>10} {:>13} {:>12} {:>13} {:>12}",
            "p", "S'", "var(chsh)", "stderr", "var(simpl)", "stderr"
        );
        for r in &scan.rows {
            let _ = writeln!(
                out,
                "{:>6.3} {:>10.6} {:>13.6e} {:>12.4e} {:>13.6e} {:>12.4e}",
                r.werner_p,
                r.s_value,
                r.chsh_variance,
                r.chsh_variance_stderr,
                r.simplified_variance,
                r.simplified_variance_stderr
            );
        }
        match scan.empirical_crossover_p {
            Some(p) => {
                let _ = writeln!(out, "empirical crossover: p* = {p} (first grid point where the two-setting variance is lower)");
            }
            None => {
                let _ = writeln!(out, "empirical crossover: not reached on this grid");
            }
        }
        let _ = writeln!(
            out,
            "closed-form crossover: |S'| = {:.6} (p = {:.4});  propagation crossover: |S'| = {:.6} (p = {:.4})",
            scan.quoted_crossover_s,
            scan.quoted_crossover_p,
            scan.propagation_crossover_s,
            scan.propagation_crossover_p
        );
    }

    out
}

/// Renders a report in the requested format. JSON round-trips through
/// [`read_report`] without losing a digit.
pub fn render_report(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Table => Ok(render_table(report)),
    }
}

/// Writes a report to a file, or to stdout when `path` is None.
pub fn emit_report(report: &Report, format: ReportFormat, path: Option<&Path>) -> Result<()> {
    let text = render_report(report, format)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Reads a JSON report back.
pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
