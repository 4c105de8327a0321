use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One logged training step. Branch components are absent in stage 1, where
/// their weights are zero and they are not evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub stage: u8,
    #[serde(rename = "L_det")]
    pub l_det: f64,
    #[serde(rename = "L_text")]
    pub l_text: Option<f64>,
    #[serde(rename = "L_OM")]
    pub l_om: Option<f64>,
    #[serde(rename = "L_ang")]
    pub l_ang: Option<f64>,
    pub total: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if rows.is_empty() {
        w.write_record(["step", "stage", "L_det", "L_text", "L_OM", "L_ang", "total"])
            .map_err(|e| csv_err(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Plain `step,loss` curve, used for the type classifier.
pub fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["step", "loss"]).map_err(|e| csv_err(path, e))?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Flags a plateau when the mean of the latest `window` values improves on
/// the mean of the window before it by less than `min_improvement`
/// (relative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauDetector {
    pub window: usize,
    pub min_improvement: f64,
}

impl PlateauDetector {
    pub fn is_plateau(&self, values: &[f64]) -> bool {
        let w = self.window;
        if w == 0 || values.len() < 2 * w {
            return false;
        }
        let n = values.len();
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let prev = mean(&values[n - 2 * w..n - w]);
        let cur = mean(&values[n - w..]);
        prev > 0.0 && (prev - cur) / prev < self.min_improvement
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let rows = vec![
            HistoryRow {
                step: 0,
                stage: 1,
                l_det: 0.1 + 0.2,
                l_text: None,
                l_om: None,
                l_ang: None,
                total: 0.1 + 0.2,
            },
            HistoryRow {
                step: 1,
                stage: 2,
                l_det: 1.0 / 3.0,
                l_text: Some(std::f64::consts::PI),
                l_om: Some(1e-300),
                l_ang: None,
                total: 7.25,
            },
        ];
        write_history(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("step,stage,L_det,L_text,L_OM,L_ang,total\n"));
        assert_eq!(read_history(&p).unwrap(), rows);
    }

    #[test]
    fn plateau_needs_two_windows() {
        let d = PlateauDetector {
            window: 3,
            min_improvement: 0.01,
        };
        assert!(!d.is_plateau(&[1.0; 5]));
        assert!(d.is_plateau(&[1.0; 6]));
        assert!(!d.is_plateau(&[2.0, 2.0, 2.0, 1.0, 1.0, 1.0]));
    }
}
