use std::fmt::Write as _;
use std::path::Path;

use crate::error::{LwailError, Result};

pub const CSV_HEADER: &str = "step,mean_return,success,mean_pseudo_reward,dual_gap";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub mean_return: f64,
    pub success: f64,
    /// Mean reward written to the buffer since the previous row.
    pub mean_pseudo_reward: f64,
    /// Critic gap after the latest refresh; NaN without a critic.
    pub dual_gap: f64,
}

/// Evaluation rows of one run. Wall-clock stamps stay out of the CSV so the
/// file is a pure function of config and seed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub config_hash: u64,
    pub rows: Vec<MetricRow>,
    /// Seconds since the loop started, one per row.
    pub wall_clock: Vec<f64>,
    /// Environment steps at which the critic was refreshed.
    pub refresh_steps: Vec<u64>,
}

impl RunMetrics {
    pub fn new(config_hash: u64) -> Self {
        Self { config_hash, ..Self::default() }
    }

    /// Appends a row; steps must strictly increase.
    pub fn push(&mut self, row: MetricRow, seconds: f64) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(LwailError::InvalidInput(format!("metric step {} after {}", row.step, last.step)));
            }
        }
        self.rows.push(row);
        self.wall_clock.push(seconds);
        Ok(())
    }

    pub fn final_success(&self) -> Option<f64> {
        self.rows.last().map(|r| r.success)
    }

    pub fn best_success(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.success).reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# config_hash={:016x}\n{CSV_HEADER}\n", self.config_hash);
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.step, r.mean_return, r.success, r.mean_pseudo_reward, r.dual_gap).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut m = Self::default();
        let mut saw_header = false;
        for (i, line) in text.lines().enumerate() {
            let err = |msg: String| LwailError::Parse { line: i + 1, msg };
            if let Some(h) = line.strip_prefix("# config_hash=") {
                m.config_hash = u64::from_str_radix(h.trim(), 16).map_err(|e| err(e.to_string()))?;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                if line.trim() != CSV_HEADER {
                    return Err(err(format!("expected header {CSV_HEADER:?}")));
                }
                saw_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", f.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| err(e.to_string()));
            let row = MetricRow {
                step: f[0].trim().parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                mean_return: num(f[1])?,
                success: num(f[2])?,
                mean_pseudo_reward: num(f[3])?,
                dual_gap: num(f[4])?,
            };
            m.push(row, f64::NAN).map_err(|e| err(e.to_string()))?;
        }
        Ok(m)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
