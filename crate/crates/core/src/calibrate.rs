//! Success-threshold calibration against human match judgments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{position_distance, rotation_distance, Pose, SUCCESS_SLACK};

pub const DEFAULT_POSITION_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_ROTATION_GRID: [f64; 3] = [30.0, 60.0, 90.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanLabel {
    Match,
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub estimate: Pose,
    pub target: Pose,
    pub label: HumanLabel,
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("no calibration records")]
    Empty,
    #[error("threshold grid is empty")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub position_m: f64,
    pub rotation_deg: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl CalibrationRow {
    fn from_counts(position_m: f64, rotation_deg: f64, tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self {
            position_m,
            rotation_deg,
            precision,
            recall,
            f1: f1(precision, recall),
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            tp,
            fp,
            tn,
            fn_,
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    /// Position-major order, ascending on both axes.
    pub rows: Vec<CalibrationRow>,
    pub best: usize,
    /// Set when labels are all one class, so precision or recall is
    /// degenerate.
    pub single_class_labels: bool,
}

impl CalibrationTable {
    pub fn best_row(&self) -> &CalibrationRow {
        &self.rows[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("position_m,rotation_deg,precision,recall,f1,accuracy,tp,fp,tn,fn\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}\n",
                r.position_m, r.rotation_deg, r.precision, r.recall, r.f1, r.accuracy, r.tp, r.fp, r.tn, r.fn_
            ));
        }
        s
    }

    /// Plain-text table, one row per cell; the best row is starred.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:>13} {:>13} {:>9} {:>6} {:>5} {:>8}\n",
            "Position thr.", "Rotation thr.", "Precision", "Recall", "F1", "Accuracy"
        );
        for (i, r) in self.rows.iter().enumerate() {
            let mark = if i == self.best { " *" } else { "" };
            s.push_str(&format_row(r));
            s.push_str(mark);
            s.push('\n');
        }
        s
    }
}

pub fn format_row(r: &CalibrationRow) -> String {
    format!(
        "{:>11.2} m {:>12}° {:>9.3} {:>6.3} {:>5.3} {:>8.3}",
        r.position_m, r.rotation_deg, r.precision, r.recall, r.f1, r.accuracy
    )
}

/// Scores the rule `d_pos ≤ β_t ∧ d_rot ≤ β_r` against human labels for
/// every grid cell. F1 ties go to the smaller thresholds.
pub fn calibrate_thresholds(
    records: &[CalibrationRecord],
    position_grid: &[f64],
    rotation_grid: &[f64],
) -> Result<CalibrationTable, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::Empty);
    }
    if position_grid.is_empty() || rotation_grid.is_empty() {
        return Err(CalibrationError::EmptyGrid);
    }
    let mut pg = position_grid.to_vec();
    let mut rg = rotation_grid.to_vec();
    pg.sort_by(f64::total_cmp);
    rg.sort_by(f64::total_cmp);
    let dists: Vec<(f64, f64, bool)> = records
        .iter()
        .map(|r| {
            (
                position_distance(&r.estimate, &r.target),
                rotation_distance(&r.estimate, &r.target),
                r.label == HumanLabel::Match,
            )
        })
        .collect();
    let positives = dists.iter().filter(|d| d.2).count();
    let mut rows: Vec<CalibrationRow> = Vec::with_capacity(pg.len() * rg.len());
    let mut best = 0;
    for &bt in &pg {
        for &br in &rg {
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for &(dp, dr, label) in &dists {
                let pred = dp <= bt + SUCCESS_SLACK && dr <= br + SUCCESS_SLACK;
                match (pred, label) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fn_ += 1,
                }
            }
            let row = CalibrationRow::from_counts(bt, br, tp, fp, tn, fn_);
            if !rows.is_empty() && row.f1 > rows[best].f1 {
                best = rows.len();
            }
            rows.push(row);
        }
    }
    Ok(CalibrationTable {
        rows,
        best,
        single_class_labels: positives == 0 || positives == dists.len(),
    })
}
