//! Chain growth samples and the size-versus-actions fit.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::ImportedBlock;

pub const MIN_SAMPLES: usize = 30;
pub const MIN_ACTIONS: u64 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub wall_ms: u64,
    pub sim_s: f64,
    pub height: u64,
    pub actions: u64,
    pub bytes: u64,
}

/// Collects one sample per block import, optionally mirrored to a CSV file.
pub struct Recorder {
    samples: Vec<Sample>,
    writer: Option<csv::Writer<File>>,
}

impl Recorder {
    pub fn in_memory() -> Recorder {
        Recorder {
            samples: Vec::new(),
            writer: None,
        }
    }

    pub fn to_file(path: &Path) -> Result<Recorder> {
        Ok(Recorder {
            samples: Vec::new(),
            writer: Some(csv::Writer::from_path(path)?),
        })
    }

    pub fn record(&mut self, sample: Sample) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.serialize(sample)?;
            w.flush()?;
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn record_import(&mut self, block: &ImportedBlock, wall_ms: u64, sim_s: f64) -> Result<()> {
        self.record(Sample {
            wall_ms,
            sim_s,
            height: block.height,
            actions: block.total_events,
            bytes: block.byte_size,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }
}

pub fn load_csv(path: &Path) -> Result<Vec<Sample>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(LinearFit { slope, intercept, r2 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub slope_bytes_per_action: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Bytes per wall second.
    pub slope_time: f64,
}

pub fn analyze(samples: &[Sample]) -> Result<Report> {
    let actions = samples.iter().map(|s| s.actions).max().unwrap_or(0);
    if samples.len() < MIN_SAMPLES || actions < MIN_ACTIONS {
        return Err(Error::InsufficientData(format!(
            "need {MIN_SAMPLES} samples and {MIN_ACTIONS} actions, got {} samples and {actions} actions",
            samples.len()
        )));
    }
    let by_actions: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (s.actions as f64, s.bytes as f64))
        .collect();
    let by_time: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (s.wall_ms as f64 / 1000.0, s.bytes as f64))
        .collect();
    let fit = fit_line(&by_actions)
        .ok_or_else(|| Error::InsufficientData("action counts do not vary".into()))?;
    let time = fit_line(&by_time)
        .ok_or_else(|| Error::InsufficientData("sample times do not vary".into()))?;
    Ok(Report {
        slope_bytes_per_action: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        slope_time: time.slope,
    })
}
