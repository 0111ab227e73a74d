//! Ingestion of external coincidence-count tables.
//!
//! The format is a flat comma-separated table so lab spreadsheets export
//! directly:
//!
//! ```text
//! alpha,beta,n_pp,n_pm,n_mp,n_mm
//! 0.0,0.0,5000,0,0,5000
//! 0.7853981633974483,0.7853981633974483,5000,0,0,5000
//! ```
//!
//! Angles are analysis angles in radians by default. With
//! [`AngleUnit::Waveplate`] they are half-wave-plate settings in degrees
//! and are converted on ingestion (analysis angle = twice the wave-plate
//! angle). Counts are non-negative integers. Errors cite the offending
//! line, counting the header as line 1.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::measure::{AnalyzerSetting, CoincidenceRecord};
use crate::{Error, Result};

/// The exact header a counts file must carry.
pub const COUNTS_HEADER: &str = "alpha,beta,n_pp,n_pm,n_mp,n_mm";

/// Unit of the angle columns in a counts file.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    /// Analysis angles in radians.
    Analysis,
    /// Half-wave-plate settings in degrees; analysis angle = 2x, in radians.
    Waveplate,
}

impl AngleUnit {
    fn to_analysis_radians(self, x: f64) -> f64 {
        match self {
            AngleUnit::Analysis => x,
            AngleUnit::Waveplate => 2.0 * x.to_radians(),
        }
    }
}

impl std::str::FromStr for AngleUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analysis" => Ok(AngleUnit::Analysis),
            "waveplate" => Ok(AngleUnit::Waveplate),
            other => Err(Error::Usage(format!(
                "unknown angle unit `{other}` (expected analysis or waveplate)"
            ))),
        }
    }
}

fn parse_angle(field: &str, name: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{name} `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{name} must be finite"),
        });
    }
    Ok(v)
}

fn parse_count(field: &str, name: &str, line: usize) -> Result<u64> {
    let v: i64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{name} `{field}` is not an integer"),
    })?;
    u64::try_from(v).map_err(|_| Error::Parse {
        line,
        message: format!("{name} must be non-negative, got {v}"),
    })
}

/// Parses a counts table from a string. Blank lines are skipped; the
/// header must match [`COUNTS_HEADER`] exactly (modulo surrounding
/// whitespace).
pub fn parse_counts(text: &str, unit: AngleUnit) -> Result<Vec<CoincidenceRecord>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((i, l)) if !l.trim().is_empty() => break (i + 1, l.trim()),
            Some(_) => continue,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty file, expected a header row".into(),
                })
            }
        }
    };
    if header.1 != COUNTS_HEADER {
        return Err(Error::Parse {
            line: header.0,
            message: format!(
                "header must be exactly `{COUNTS_HEADER}`, got `{}`",
                header.1
            ),
        });
    }

    let mut records = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 comma-separated fields, got {}", fields.len()),
            });
        }
        let alpha = unit.to_analysis_radians(parse_angle(fields[0], "alpha", line)?);
        let beta = unit.to_analysis_radians(parse_angle(fields[1], "beta", line)?);
        let setting = AnalyzerSetting::new(alpha, beta).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        records.push(CoincidenceRecord {
            setting,
            n_pp: parse_count(fields[2], "n_pp", line)?,
            n_pm: parse_count(fields[3], "n_pm", line)?,
            n_mp: parse_count(fields[4], "n_mp", line)?,
            n_mm: parse_count(fields[5], "n_mm", line)?,
        });
    }
    Ok(records)
}

/// Reads and parses a counts file.
pub fn ingest_counts(path: &Path, unit: AngleUnit) -> Result<Vec<CoincidenceRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_counts(&text, unit)
}

/// Renders records back into the table format, angles in analysis radians
/// with full round-trip precision.
pub fn format_counts(records: &[CoincidenceRecord]) -> String {
    let mut out = String::from(COUNTS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.setting.alpha, r.setting.beta, r.n_pp, r.n_pm, r.n_mp, r.n_mm
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn parses_two_row_file() {
        let text = "alpha,beta,n_pp,n_pm,n_mp,n_mm\n0.0,0.0,5000,0,0,5000\n0.7853981633974483,0.7853981633974483,5000,0,0,5000\n";
        let recs = parse_counts(text, AngleUnit::Analysis).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].n_pp, 5000);
        assert!((recs[1].setting.alpha - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "a,b,c,d,e,f\n0,0,1,1,1,1\n";
        let err = parse_counts(text, AngleUnit::Analysis).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rejects_negative_count_with_line_number() {
        let text = "alpha,beta,n_pp,n_pm,n_mp,n_mm\n0.0,0.0,10,0,0,10\n0.0,0.5,10,-3,0,10\n";
        let err = parse_counts(text, AngleUnit::Analysis).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("n_pm"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rejects_non_numeric_field() {
        let text = "alpha,beta,n_pp,n_pm,n_mp,n_mm\nzero,0.0,1,1,1,1\n";
        let err = parse_counts(text, AngleUnit::Analysis).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("alpha"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn waveplate_degrees_convert_to_analysis_radians() {
        // A wave plate at 22.5 degrees analyzes at pi/4.
        let text = "alpha,beta,n_pp,n_pm,n_mp,n_mm\n22.5,22.5,1,2,3,4\n";
        let recs = parse_counts(text, AngleUnit::Waveplate).unwrap();
        assert!((recs[0].setting.alpha - FRAC_PI_4).abs() < 1e-12);
        assert!((recs[0].setting.beta - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn format_round_trips() {
        let text = "alpha,beta,n_pp,n_pm,n_mp,n_mm\n0.0,0.39269908169872414,4268,732,732,4268\n";
        let recs = parse_counts(text, AngleUnit::Analysis).unwrap();
        let again = parse_counts(&format_counts(&recs), AngleUnit::Analysis).unwrap();
        assert_eq!(recs, again);
    }
}
