use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetricsRow, ReplicateRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    /// Comma-separated, one row per study cell.
    Csv,
    /// JSON array with the full configuration echo.
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "delimited" => Ok(ExportFormat::Csv),
            "json" | "structured" => Ok(ExportFormat::Json),
            other => Err(Error::config("format", format!("unknown format `{other}`"))),
        }
    }
}

/// `v` rounded to 6 significant digits, printed in shortest form.
pub fn format_sig6(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    format!("{r}")
}

fn sig6(v: f64) -> f64 {
    format_sig6(v).parse().unwrap_or(v)
}

/// One CSV row of study metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatMetrics {
    pub family: String,
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
    pub design: String,
    pub method: String,
    pub p: f64,
    pub n: usize,
    #[serde(rename = "S")]
    pub replicates: usize,
    pub level: f64,
    pub master_seed: u64,
    pub true_log_quantile: f64,
    pub mse: Option<f64>,
    pub mse_natural: Option<f64>,
    pub bias: Option<f64>,
    pub mean_ci_width: Option<f64>,
    pub coverage: Option<f64>,
    pub defined: usize,
    pub undefined_count: usize,
    pub unbounded_count: usize,
    pub mean_trials: f64,
    pub classification_rate: Option<f64>,
}

impl FlatMetrics {
    /// Flatten a row, rounding every real to 6 significant digits.
    pub fn from_row(r: &MetricsRow) -> Self {
        let c = &r.config;
        let o = |v: Option<f64>| v.map(sig6);
        Self {
            family: c.model.family.name().to_string(),
            location: sig6(c.model.location),
            scale: sig6(c.model.scale),
            shape: sig6(c.model.shape),
            design: c.design.kind().name().to_string(),
            method: c.estimator.name().to_string(),
            p: sig6(c.p),
            n: c.n,
            replicates: c.replicates,
            level: sig6(c.level),
            master_seed: c.master_seed,
            true_log_quantile: sig6(r.true_log_quantile),
            mse: o(r.mse),
            mse_natural: o(r.mse_natural),
            bias: o(r.bias),
            mean_ci_width: o(r.mean_ci_width),
            coverage: o(r.coverage),
            defined: r.defined,
            undefined_count: r.undefined_count,
            unbounded_count: r.unbounded_count,
            mean_trials: sig6(r.mean_trials),
            classification_rate: o(r.classification_rate),
        }
    }
}

fn write_csv<W: Write>(rows: &[MetricsRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        let f = FlatMetrics::from_row(r);
        let reals = |v: Option<f64>| v.map(format_sig6).unwrap_or_default();
        wtr.write_record([
            f.family.clone(),
            format_sig6(f.location),
            format_sig6(f.scale),
            format_sig6(f.shape),
            f.design.clone(),
            f.method.clone(),
            format_sig6(f.p),
            f.n.to_string(),
            f.replicates.to_string(),
            format_sig6(f.level),
            f.master_seed.to_string(),
            format_sig6(f.true_log_quantile),
            reals(f.mse),
            reals(f.mse_natural),
            reals(f.bias),
            reals(f.mean_ci_width),
            reals(f.coverage),
            f.defined.to_string(),
            f.undefined_count.to_string(),
            f.unbounded_count.to_string(),
            format_sig6(f.mean_trials),
            reals(f.classification_rate),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

const CSV_HEADER: &str = "family,location,scale,shape,design,method,p,n,S,level,master_seed,true_log_quantile,mse,mse_natural,bias,mean_ci_width,coverage,defined,undefined_count,unbounded_count,mean_trials,classification_rate";

/// Write study rows to `dest`.
pub fn export_results(rows: &[MetricsRow], dest: &Path, format: ExportFormat) -> Result<()> {
    if dest.as_os_str().is_empty() {
        return Err(Error::config("destination", "output path is empty"));
    }
    if rows.is_empty() {
        return Err(Error::config("rows", "nothing to export"));
    }
    let mut buf = Vec::new();
    match format {
        ExportFormat::Csv => {
            writeln!(buf, "{CSV_HEADER}").expect("write to memory");
            write_csv(rows, &mut buf)?;
        }
        ExportFormat::Json => {
            serde_json::to_writer_pretty(&mut buf, rows)?;
            buf.push(b'\n');
        }
    }
    std::fs::write(dest, buf).map_err(|e| Error::io(dest, e))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<FlatMetrics>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_results_json(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Per-replicate records as JSON lines.
pub fn write_audit(path: &Path, records: &[ReplicateRecord]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_audit(path: &Path) -> Result<Vec<ReplicateRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, ResponseModel};
    use crate::sim::{run_study, Procedure, StudyConfig};

    #[test]
    fn sig6_rounding() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1234567.0), "1234570");
        assert_eq!(format_sig6(0.000123456789), "0.000123457");
        assert_eq!(format_sig6(-2.5), "-2.5");
        assert_eq!(format_sig6(f64::INFINITY), "inf");
    }

    fn rows() -> Vec<MetricsRow> {
        Procedure::ALL
            .iter()
            .map(|&proc| {
                let c = StudyConfig::for_procedure(ResponseModel::standard(Family::Logistic), proc, 0.25, 30, 40)
                    .with_seed(3);
                run_study(&c).unwrap()
            })
            .collect()
    }

    #[test]
    fn roundtrips() {
        let rows = rows();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        export_results(&rows, &csv, ExportFormat::Csv).unwrap();
        let back = read_results_csv(&csv).unwrap();
        let want: Vec<FlatMetrics> = rows.iter().map(FlatMetrics::from_row).collect();
        assert_eq!(back, want);
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 4);

        let json = dir.path().join("m.json");
        export_results(&rows, &json, ExportFormat::Json).unwrap();
        assert_eq!(read_results_json(&json).unwrap(), rows);
    }

    #[test]
    fn rejects_empty_destination_and_rows() {
        let rows = rows();
        assert!(matches!(
            export_results(&rows, Path::new(""), ExportFormat::Csv),
            Err(Error::Config(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        assert!(export_results(&[], &dir.path().join("x.csv"), ExportFormat::Csv).is_err());
    }
}
