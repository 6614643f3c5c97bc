//! Result rows and serialization to CSV and JSON.
//!
//! Every simulation or analysis run reduces to a flat list of [`ResultRow`]
//! values — one per (sweep point, receiver) pair — plus optional per-row
//! distribution quantiles. The CSV column set and header text are part of
//! the tool's interface contract and must not drift: downstream plotting
//! scripts key on them byte-for-byte.

use crate::scenario::Scenario;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

/// Exact header of the main results CSV.
pub const CSV_HEADER: &str =
    "sweep_var,sweep_value,receiver,mc_mean_db,ci_lo_db,ci_hi_db,deq_thm2_db,deq_fp_db,fp_iters,trials,seed";

/// Exact header of the distribution-quantile CSV.
pub const CDF_CSV_HEADER: &str = "sweep_var,sweep_value,receiver,p,sinr_db";

/// One empirical distribution quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    /// Cumulative probability in (0, 1).
    pub p: f64,
    /// SINR quantile in dB.
    pub sinr_db: f64,
}

/// One output row: a receiver evaluated at one sweep point.
///
/// Monte Carlo fields are `None` for analysis-only runs; the
/// deterministic-equivalent fields are `None` except on rows of the
/// `proposed` receiver with a matched aging coefficient; `error` carries a
/// marker name (for example `InfeasibleBudget`) when the sweep point could
/// not be evaluated at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Swept parameter label, `"none"` when nothing is swept.
    pub sweep_var: String,
    /// Swept value, 0 when nothing is swept.
    pub sweep_value: f64,
    /// Receiver name.
    pub receiver: String,
    /// Monte Carlo mean SINR in dB (mean taken in linear units).
    pub mc_mean_db: Option<f64>,
    /// Lower edge of the 95% confidence interval, in dB.
    pub ci_lo_db: Option<f64>,
    /// Upper edge of the 95% confidence interval, in dB.
    pub ci_hi_db: Option<f64>,
    /// Closed-form deterministic equivalent, in dB.
    pub deq_thm2_db: Option<f64>,
    /// Fixed-point deterministic equivalent, in dB.
    pub deq_fp_db: Option<f64>,
    /// Iterations the fixed point took to converge.
    pub fp_iters: Option<u64>,
    /// Monte Carlo trials behind the row (0 for analysis-only rows).
    pub trials: u64,
    /// Master seed of the run.
    pub seed: u64,
    /// Error marker name when the point was not evaluable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Distribution quantiles, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdf: Option<Vec<CdfPoint>>,
}

/// Formats a float with 9 significant digits, dropping the exponent form
/// where plain notation is exact enough to round-trip the digits.
pub fn fmt_sig9(v: f64) -> String {
    if !v.is_finite() {
        // Rare (for example a non-positive CI edge in linear units); keep
        // the cell parseable rather than inventing a number.
        return String::new();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exponent = v.abs().log10().floor() as i32;
    if (-3..9).contains(&exponent) {
        let decimals = (8 - exponent).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // Trim trailing zeros (and a dangling point) for stable, compact
        // cells; the significant digits are already fixed above.
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() || s == "-" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_default()
}

/// Writes the main results CSV (header plus one line per row).
///
/// Rows with an error marker put `ERR:<name>` in the `mc_mean_db` column and
/// leave the other numeric columns empty.
///
/// # Errors
///
/// [`Error::Io`] on write failures.
pub fn emit_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        let mc_mean = match &row.error {
            Some(name) => format!("ERR:{name}"),
            None => opt_cell(row.mc_mean_db),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.sweep_var,
            fmt_sig9(row.sweep_value),
            row.receiver,
            mc_mean,
            opt_cell(if row.error.is_some() { None } else { row.ci_lo_db }),
            opt_cell(if row.error.is_some() { None } else { row.ci_hi_db }),
            opt_cell(if row.error.is_some() { None } else { row.deq_thm2_db }),
            opt_cell(if row.error.is_some() { None } else { row.deq_fp_db }),
            row.fp_iters.map(|i| i.to_string()).unwrap_or_default(),
            row.trials,
            row.seed,
        )?;
    }
    Ok(())
}

/// Writes the distribution-quantile CSV for every row that carries one.
///
/// # Errors
///
/// [`Error::Io`] on write failures.
pub fn emit_cdf_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{CDF_CSV_HEADER}")?;
    for row in rows {
        let Some(cdf) = &row.cdf else { continue };
        for point in cdf {
            writeln!(
                out,
                "{},{},{},{},{}",
                row.sweep_var,
                fmt_sig9(row.sweep_value),
                row.receiver,
                fmt_sig9(point.p),
                fmt_sig9(point.sinr_db),
            )?;
        }
    }
    Ok(())
}

/// Identifying run metadata attached to JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// Producing tool name.
    pub tool: String,
    /// Producing tool version.
    pub version: String,
    /// Free-form note (for presets: what the figure shows).
    pub note: String,
    /// The scenario that produced the rows.
    pub scenario: Scenario,
}

/// Writes `{"metadata": ..., "rows": [...]}` as pretty JSON.
///
/// # Errors
///
/// [`Error::Io`] on write or serialization failures.
pub fn emit_json<W: Write>(metadata: &Metadata, rows: &[ResultRow], mut out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        metadata: &'a Metadata,
        rows: &'a [ResultRow],
    }
    let doc = Doc { metadata, rows };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes rows in the requested format.
///
/// # Errors
///
/// [`Error::Io`] on write failures.
pub fn emit<W: Write>(
    format: OutputFormat,
    metadata: &Metadata,
    rows: &[ResultRow],
    out: W,
) -> Result<()> {
    match format {
        OutputFormat::Csv => emit_csv(rows, out),
        OutputFormat::Json => emit_json(metadata, rows, out),
    }
}

/// Supported output encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    /// Flat CSV with the pinned header.
    Csv,
    /// JSON document with metadata.
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!(
                "unknown output format '{other}' (expected csv or json)"
            ))),
        }
    }
}

impl std::fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

/// Renders rows to an in-memory CSV string (convenience for callers that
/// need bytes rather than a writer).
pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    emit_csv(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is ASCII")
}

/// Renders the quantile CSV to an in-memory string.
pub fn cdf_csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    emit_cdf_csv(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is ASCII")
}

/// Builds a short human-readable summary line for a row (used for logs).
pub fn describe_row(row: &ResultRow) -> String {
    let mut s = format!("{}={} {}", row.sweep_var, row.sweep_value, row.receiver);
    if let Some(err) = &row.error {
        let _ = write!(s, " ERR:{err}");
    } else if let Some(mc) = row.mc_mean_db {
        let _ = write!(s, " mc={mc:.3} dB");
    } else if let Some(deq) = row.deq_thm2_db {
        let _ = write!(s, " deq={deq:.3} dB");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> ResultRow {
        ResultRow {
            sweep_var: "P_p".into(),
            sweep_value: 40.0,
            receiver: "proposed".into(),
            mc_mean_db: Some(8.87654321),
            ci_lo_db: Some(8.80000001),
            ci_hi_db: Some(8.95313131),
            deq_thm2_db: Some(8.9),
            deq_fp_db: Some(8.9),
            fp_iters: Some(6),
            trials: 10_000,
            seed: 42,
            error: None,
            cdf: None,
        }
    }

    #[test]
    fn header_is_pinned() {
        assert_eq!(
            CSV_HEADER,
            "sweep_var,sweep_value,receiver,mc_mean_db,ci_lo_db,ci_hi_db,deq_thm2_db,deq_fp_db,fp_iters,trials,seed"
        );
        let text = csv_string(&[sample_row()]);
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(8.87654321), "8.87654321");
        assert_eq!(fmt_sig9(-8.87654321987), "-8.87654322");
        assert_eq!(fmt_sig9(0.000123456789123), "1.23456789e-4");
        assert_eq!(fmt_sig9(123456789.123), "123456789");
        assert_eq!(fmt_sig9(1234567891.23), "1.23456789e9");
        assert_eq!(fmt_sig9(100.0), "100");
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(-0.5), "-0.5");
        assert_eq!(fmt_sig9(f64::NAN), "");
        // Round-trip within 9 significant digits.
        for &v in &[
            1.0 / 3.0,
            -273.1500001,
            9.999999994e8,
            2.5e-3,
            86.03963788366272,
        ] {
            let parsed: f64 = fmt_sig9(v).parse().unwrap();
            assert!(
                (parsed - v).abs() <= 5e-9 * v.abs(),
                "{v} -> {} -> {parsed}",
                fmt_sig9(v)
            );
        }
    }

    #[test]
    fn error_rows_use_the_marker_cell() {
        let mut row = sample_row();
        row.error = Some("InfeasibleBudget".into());
        row.mc_mean_db = None;
        row.ci_lo_db = None;
        row.ci_hi_db = None;
        row.deq_thm2_db = None;
        row.deq_fp_db = None;
        row.fp_iters = None;
        let text = csv_string(&[row]);
        let line = text.lines().nth(1).unwrap();
        assert_eq!(line, "P_p,40,proposed,ERR:InfeasibleBudget,,,,,,10000,42");
    }

    #[test]
    fn analysis_rows_leave_mc_cells_empty() {
        let mut row = sample_row();
        row.mc_mean_db = None;
        row.ci_lo_db = None;
        row.ci_hi_db = None;
        row.trials = 0;
        let text = csv_string(&[row]);
        let line = text.lines().nth(1).unwrap();
        assert_eq!(line, "P_p,40,proposed,,,,8.9,8.9,6,0,42");
    }

    #[test]
    fn cdf_csv_lists_quantiles_per_row() {
        let mut row = sample_row();
        row.cdf = Some(vec![
            CdfPoint {
                p: 0.0025,
                sinr_db: 1.5,
            },
            CdfPoint {
                p: 0.9975,
                sinr_db: 12.25,
            },
        ]);
        let text = cdf_csv_string(&[row.clone(), sample_row()]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CDF_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "P_p,40,proposed,0.0025,1.5");
        assert_eq!(lines[2], "P_p,40,proposed,0.9975,12.25");
    }

    #[test]
    fn json_document_round_trips() {
        let scenario = Scenario::from_toml_str(
            r#"
            trials = 10
            receivers = ["proposed"]
            [system]
            k = 1
            n_r = 2
            tau_p = 1
            tau_d = 11
            p_tot = 250.0
            sigma_p2 = 1e-7
            sigma_d2 = 1e-7
            [user]
            alpha_db = 90.0
            a = 0.5
            c = 1.0
            p_p = 100.0
            "#,
        )
        .unwrap();
        let metadata = Metadata {
            tool: "aging-mimo".into(),
            version: "0.1.0".into(),
            note: "test".into(),
            scenario,
        };
        let mut buf = Vec::new();
        emit_json(&metadata, &[sample_row()], &mut buf).unwrap();
        let doc: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(doc["metadata"]["tool"], "aging-mimo");
        assert_eq!(doc["rows"][0]["receiver"], "proposed");
        assert_eq!(doc["rows"][0]["trials"], 10_000);
        assert!(doc["rows"][0].get("error").is_none());
    }

    #[test]
    fn output_format_parses() {
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("yaml".parse::<OutputFormat>().is_err());
        assert_eq!(OutputFormat::Csv.to_string(), "csv");
    }
}
