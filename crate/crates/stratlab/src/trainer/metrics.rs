//! Training metrics: one CSV with a fixed header, written incrementally.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

pub const HEADER: &str = "step,return_mean,td_loss,j_mi,j_e,j_m,surprise_mean,eps";

#[derive(Clone, Debug, Default)]
pub struct MetricsRow {
    pub step: u64,
    pub return_mean: f64,
    pub td_loss: f64,
    pub j_mi: f64,
    pub j_e: f64,
    pub j_m: f64,
    pub surprise_mean: f64,
    pub eps: f64,
}

#[derive(Default)]
pub struct MetricsSink {
    rows: Vec<MetricsRow>,
}

impl MetricsSink {
    pub fn new() -> Self {
        MetricsSink { rows: Vec::new() }
    }

    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step, r.return_mean, r.td_loss, r.j_mi, r.j_e, r.j_m, r.surprise_mean, r.eps
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        if let Some(dir) = path.as_ref().parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Parse a metrics CSV back into rows (used by `plot`).
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(crate::error::Error::Config(format!(
                "metrics line {} has {} fields",
                i + 1,
                fields.len()
            )));
        }
        let f = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
        rows.push(MetricsRow {
            step: fields[0].parse().unwrap_or(0),
            return_mean: f(fields[1]),
            td_loss: f(fields[2]),
            j_mi: f(fields[3]),
            j_e: f(fields[4]),
            j_m: f(fields[5]),
            surprise_mean: f(fields[6]),
            eps: f(fields[7]),
        });
    }
    Ok(rows)
}
