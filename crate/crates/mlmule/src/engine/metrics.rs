//! Per-run metrics: accuracy rows and cycle reports, written as CSV.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::protocol::CycleReport;
use crate::worldsim::TimeStep;

pub const CSV_HEADER: &str = "t,round,entity,pre_acc,post_acc,loss,exchanges,method,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub t: TimeStep,
    pub round: u64,
    pub entity: String,
    pub pre_acc: f64,
    pub post_acc: f64,
    pub loss: f64,
    pub exchanges: u64,
    pub method: String,
    pub seed: u64,
}

impl MetricRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.t,
            self.round,
            self.entity,
            self.pre_acc,
            self.post_acc,
            self.loss,
            self.exchanges,
            self.method,
            self.seed
        )
    }

    pub fn from_csv_line(line: &str, path_label: &str, lineno: usize) -> Result<MetricRow> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Parse {
                path: path_label.to_string(),
                line: lineno,
                msg: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let err = |msg: &str| Error::Parse {
            path: path_label.to_string(),
            line: lineno,
            msg: msg.to_string(),
        };
        Ok(MetricRow {
            t: fields[0].parse().map_err(|_| err("bad t"))?,
            round: fields[1].parse().map_err(|_| err("bad round"))?,
            entity: fields[2].to_string(),
            pre_acc: fields[3].parse().map_err(|_| err("bad pre_acc"))?,
            post_acc: fields[4].parse().map_err(|_| err("bad post_acc"))?,
            loss: fields[5].parse().map_err(|_| err("bad loss"))?,
            exchanges: fields[6].parse().map_err(|_| err("bad exchanges"))?,
            method: fields[7].to_string(),
            seed: fields[8].parse().map_err(|_| err("bad seed"))?,
        })
    }
}

/// Time series of evaluation rows plus the protocol's cycle reports.
/// Only the rows go into the CSV; reports stay available in memory.
#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    pub rows: Vec<MetricRow>,
    pub cycle_reports: Vec<CycleReport>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<MetricRow>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let label = path.display().to_string();
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 {
                if line != CSV_HEADER {
                    return Err(Error::Parse {
                        path: label,
                        line: 1,
                        msg: "unexpected CSV header".to_string(),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            rows.push(MetricRow::from_csv_line(line, &label, idx + 1)?);
        }
        Ok(rows)
    }

    /// Mean accuracy over entities at the final evaluation tick.
    pub fn final_mean_accuracy(&self) -> Option<(f64, f64)> {
        let last_t = self.rows.last()?.t;
        let finals: Vec<&MetricRow> = self.rows.iter().filter(|r| r.t == last_t).collect();
        let n = finals.len() as f64;
        let pre = finals.iter().map(|r| r.pre_acc).sum::<f64>() / n;
        let post = finals.iter().map(|r| r.post_acc).sum::<f64>() / n;
        Some((pre, post))
    }
}

/// Trailing mean over the last `window` points (shorter at the start).
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / window.min(i + 1) as f64);
    }
    out
}
