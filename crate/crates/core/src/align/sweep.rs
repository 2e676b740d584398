use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::TfidfModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub simple: String,
    pub regular: String,
    pub aligned: bool,
}

/// Reads `simple<TAB>regular<TAB>label` rows; label is `1`/`0` or
/// `aligned`/`unaligned`. A header row starting with `simple` is skipped.
pub fn load_labeled(path: &Path) -> Result<Vec<LabeledPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("simple\t")) {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(err(format!("expected 3 columns, found {}", cols.len())));
        }
        let aligned = match cols[2].trim() {
            "1" | "aligned" | "true" => true,
            "0" | "unaligned" | "false" => false,
            other => return Err(err(format!("bad label {other:?}"))),
        };
        out.push(LabeledPair {
            simple: cols[0].to_string(),
            regular: cols[1].to_string(),
            aligned,
        });
    }
    Ok(out)
}

/// Parses `lo:hi:step` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("bad grid {spec:?}: {e}")))?;
    let [lo, hi, step] = parts[..] else {
        return Err(Error::InvalidInput(format!("grid must be lo:hi:step, got {spec:?}")));
    };
    if !(step > 0.0) || hi < lo {
        return Err(Error::InvalidInput(format!("grid {spec:?} is empty or has a nonpositive step")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    // round away accumulated binary noise such as 0.30000000000000004
    Ok((0..=n)
        .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall,f1,accuracy\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.threshold, r.precision, r.recall, r.f1, r.accuracy
            ));
        }
        s
    }
}

/// Precision, recall, F1 and accuracy of "aligned iff distance <= t" for each
/// threshold. Precision is 0 when nothing is predicted aligned.
pub fn threshold_sweep(labeled: &[LabeledPair], model: &TfidfModel, grid: &[f64]) -> Result<SweepResult> {
    let positives = labeled.iter().filter(|p| p.aligned).count();
    if positives == 0 || positives == labeled.len() {
        return Err(Error::InsufficientData(
            "threshold sweep needs both aligned and unaligned examples".into(),
        ));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("sweep grid must be nonempty and strictly increasing".into()));
    }
    let distances: Vec<f64> = labeled
        .iter()
        .map(|p| model.distance(&p.simple, &p.regular))
        .collect();
    let rows = grid
        .iter()
        .map(|&t| {
            let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
            for (p, &d) in labeled.iter().zip(&distances) {
                match (d <= t, p.aligned) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fneg += 1,
                }
            }
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = tp as f64 / (tp + fneg) as f64;
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            SweepRow {
                threshold: t,
                precision,
                recall,
                f1,
                accuracy: (tp + tn) as f64 / labeled.len() as f64,
            }
        })
        .collect();
    Ok(SweepResult { rows })
}
