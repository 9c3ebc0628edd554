use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Phase;
use crate::error::{Error, Result};
use crate::losses::{LossReport, LossWeights};

/// One training-log line: the step, every loss term and the weights in
/// force.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub phase: Phase,
    pub report: LossReport,
    pub weights: LossWeights,
}

#[derive(Serialize, Deserialize)]
struct FlatRow {
    step: u64,
    phase: Phase,
    content: f64,
    adv_denoise: f64,
    total_denoise: f64,
    bce: f64,
    adv_sod: f64,
    cyclic: f64,
    total_sod: f64,
    d1: f64,
    d2: f64,
    batch_size: usize,
    w1: f64,
    w2: f64,
    w3: f64,
}

impl LogRow {
    pub fn new(step: u64, phase: Phase, report: &LossReport, weights: &LossWeights) -> Self {
        Self { step, phase, report: *report, weights: *weights }
    }

    fn flat(&self) -> FlatRow {
        let r = &self.report;
        FlatRow {
            step: self.step,
            phase: self.phase,
            content: r.content,
            adv_denoise: r.adv_denoise,
            total_denoise: r.total_denoise,
            bce: r.bce,
            adv_sod: r.adv_sod,
            cyclic: r.cyclic,
            total_sod: r.total_sod,
            d1: r.d1,
            d2: r.d2,
            batch_size: r.batch_size,
            w1: self.weights.w1,
            w2: self.weights.w2,
            w3: self.weights.w3,
        }
    }

    fn from_flat(f: FlatRow) -> Self {
        Self {
            step: f.step,
            phase: f.phase,
            report: LossReport {
                content: f.content,
                adv_denoise: f.adv_denoise,
                total_denoise: f.total_denoise,
                bce: f.bce,
                adv_sod: f.adv_sod,
                cyclic: f.cyclic,
                total_sod: f.total_sod,
                d1: f.d1,
                d2: f.d2,
                batch_size: f.batch_size,
            },
            weights: LossWeights { w1: f.w1, w2: f.w2, w3: f.w3, ..LossWeights::default() },
        }
    }
}

pub fn write_loss_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "step", "phase", "content", "adv_denoise", "total_denoise", "bce", "adv_sod", "cyclic", "total_sod",
            "d1", "d2", "batch_size", "w1", "w2", "w3",
        ])?;
    }
    for row in rows {
        w.serialize(row.flat())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<FlatRow>().map(|row| Ok(LogRow::from_flat(row?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let report = LossReport { content: 0.25, bce: 0.5, total_denoise: 0.3, batch_size: 4, ..Default::default() };
        let rows = vec![LogRow::new(1, Phase::Joint, &report, &LossWeights::default())];
        write_loss_log(&path, &rows).unwrap();
        assert_eq!(read_loss_log(&path).unwrap(), rows);
        write_loss_log(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,phase,content"));
        assert!(read_loss_log(&path).unwrap().is_empty());
    }
}
