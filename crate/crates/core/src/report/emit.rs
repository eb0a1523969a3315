//! Serialization of reports and estimates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::combine::{PasaEstimate, WaldInterval};
use crate::error::{PasaError, Result};
use crate::report::replicate::ReplicationReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportDocument {
    schema_version: u32,
    reports: Vec<ReplicationReport>,
}

fn check_version(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(PasaError::Schema(format!(
            "schema_version {found} is not supported (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

pub fn emit_reports(reports: &[ReplicationReport], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let doc = ReportDocument { schema_version: SCHEMA_VERSION, reports: reports.to_vec() };
            Ok(serde_json::to_string_pretty(&doc)?)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "family", "strategy", "K", "Q", "N", "p", "reps", "failed", "a_bias", "ase", "ese", "cp",
                "c_time_s", "r_time_s",
            ])?;
            for r in reports {
                w.write_record([
                    r.family.clone(),
                    r.strategy.name().to_string(),
                    r.k.to_string(),
                    r.q.to_string(),
                    r.n.to_string(),
                    r.p.to_string(),
                    r.reps.to_string(),
                    r.failed.to_string(),
                    r.a_bias.to_string(),
                    r.ase.to_string(),
                    r.ese.to_string(),
                    r.cp.to_string(),
                    r.c_time_s.to_string(),
                    r.r_time_s.to_string(),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| PasaError::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Table => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "{:<10} {:<10} {:>5} {:>4} {:>9} {:>10} {:>10} {:>10} {:>6} {:>10} {:>10}",
                "family", "strategy", "K", "Q", "N", "A.bias", "ASE", "ESE", "CP", "C.Time(s)", "R.Time(s)"
            );
            for r in reports {
                let _ = writeln!(
                    out,
                    "{:<10} {:<10} {:>5} {:>4} {:>9} {:>10.3e} {:>10.3e} {:>10.3e} {:>6.3} {:>10.4} {:>10.4}",
                    r.family,
                    r.strategy.name(),
                    r.k,
                    r.q,
                    r.n,
                    r.a_bias,
                    r.ase,
                    r.ese,
                    r.cp,
                    r.c_time_s,
                    r.r_time_s
                );
            }
            Ok(out)
        }
    }
}

/// Parses the JSON produced by [`emit_reports`].
pub fn parse_reports(text: &str) -> Result<Vec<ReplicationReport>> {
    let doc: ReportDocument = serde_json::from_str(text)?;
    check_version(doc.schema_version)?;
    Ok(doc.reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingMs {
    pub r_time: f64,
    pub c_time: f64,
    pub combine: f64,
}

/// Serialized form of a combined estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    pub beta: Vec<f64>,
    /// Row-major `p x p`.
    pub cov: Vec<f64>,
    pub se: Vec<f64>,
    pub level: f64,
    pub intervals: Vec<WaldInterval>,
    pub total_n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub timing_ms: TimingMs,
}

impl EstimateRecord {
    pub fn new(est: &PasaEstimate, level: f64, names: Option<Vec<String>>) -> Result<Self> {
        let p = est.p();
        if let Some(n) = &names {
            if n.len() != p {
                return Err(PasaError::Dimension(format!("{} names for {p} coefficients", n.len())));
            }
        }
        let cov = (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| est.cov[(i, j)]).collect();
        Ok(EstimateRecord {
            schema_version: SCHEMA_VERSION,
            names,
            beta: est.beta.as_slice().to_vec(),
            cov,
            se: est.standard_errors(),
            level,
            intervals: est.wald_intervals(level)?,
            total_n: est.total_n,
            k: est.k_blocks,
            timing_ms: TimingMs {
                r_time: est.timing.r_time_s * 1e3,
                c_time: est.timing.c_time_s * 1e3,
                combine: est.timing.combine_s * 1e3,
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: EstimateRecord = serde_json::from_str(text)?;
        check_version(rec.schema_version)?;
        let p = rec.beta.len();
        if rec.cov.len() != p * p || rec.se.len() != p || rec.intervals.len() != p {
            return Err(PasaError::Schema(format!("estimate arrays are inconsistent with p = {p}")));
        }
        Ok(rec)
    }

    /// Fixed-width coefficient table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:>12} {:>12} {:>12} {:>12}", "term", "estimate", "se", "lower", "upper");
        for (j, iv) in self.intervals.iter().enumerate() {
            let name = self.names.as_ref().map_or_else(|| format!("beta[{j}]"), |n| n[j].clone());
            let _ = writeln!(
                out,
                "{:<20} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
                name, self.beta[j], iv.se, iv.lower, iv.upper
            );
        }
        let _ = writeln!(out, "N = {}, K = {}, level = {}", self.total_n, self.k, self.level);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::Strategy;

    fn sample() -> ReplicationReport {
        ReplicationReport {
            family: "gaussian".into(),
            strategy: Strategy::Pasa,
            k: 10,
            q: 10,
            n: 100_000,
            p: 5,
            reps: 500,
            failed: 0,
            a_bias: 3.0671234e-3,
            ase: 3.8329e-3,
            ese: 0.1 + 0.2,
            cp: 0.9504,
            c_time_s: 0.0123,
            r_time_s: 0.0045,
            per_rep: None,
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let reports = vec![sample(), ReplicationReport { strategy: Strategy::Offline, k: 1, q: 1, ..sample() }];
        let text = emit_reports(&reports, ReportFormat::Json).unwrap();
        assert!(text.contains("\"schema_version\": 1"));
        assert!(text.contains("\"K\": 10"));
        assert_eq!(parse_reports(&text).unwrap(), reports);
    }

    #[test]
    fn wrong_version_rejected() {
        let text = r#"{"schema_version": 2, "reports": []}"#;
        assert!(matches!(parse_reports(text), Err(PasaError::Schema(_))));
    }

    #[test]
    fn csv_and_table_shapes() {
        let csv = emit_reports(&[sample(), sample()], ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("gaussian,pasa,10,10,100000,5,500,0,0.0030671234,"));
        let table = emit_reports(&[sample()], ReportFormat::Table).unwrap();
        assert!(table.lines().next().unwrap().contains("A.bias"));
        assert!(table.contains("3.067e-3"));
    }
}
