use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratings on a 1..=5 scale: rows are annotators, columns are items.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RatingTable {
    pub rows: Vec<Vec<Option<u8>>>,
}

impl RatingTable {
    pub fn new(rows: Vec<Vec<Option<u8>>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Shape("rating rows differ in length".into()));
        }
        if let Some(v) = rows.iter().flatten().flatten().find(|v| !(1..=5).contains(*v)) {
            return Err(Error::InvalidInput(format!("rating {v} outside 1..=5")));
        }
        Ok(RatingTable { rows })
    }

    pub fn items(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Present ratings of item `j`.
    pub fn column(&self, j: usize) -> Vec<u8> {
        self.rows.iter().filter_map(|r| r[j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifferenceMetric {
    #[default]
    Interval,
    Ordinal,
}

const VALUES: usize = 5;

/// Krippendorff's alpha from the coincidence matrix.
///
/// Items with fewer than two ratings are not pairable and are ignored; at
/// least two pairable items are required. A table with a single value
/// throughout has no expected disagreement and gets alpha 1.
pub fn krippendorff_alpha(table: &RatingTable, metric: DifferenceMetric) -> Result<f64> {
    let mut o = [[0.0f64; VALUES]; VALUES];
    let mut pairable = 0;
    for j in 0..table.items() {
        let col = table.column(j);
        let m = col.len();
        if m < 2 {
            continue;
        }
        pairable += 1;
        for (a, &x) in col.iter().enumerate() {
            for (b, &y) in col.iter().enumerate() {
                if a != b {
                    o[x as usize - 1][y as usize - 1] += 1.0 / (m - 1) as f64;
                }
            }
        }
    }
    if pairable < 2 {
        return Err(Error::InsufficientData(
            "Krippendorff's alpha needs at least two items with two or more ratings".into(),
        ));
    }
    let nc: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = nc.iter().sum();
    let delta = |c: usize, k: usize| -> f64 {
        match metric {
            DifferenceMetric::Interval => ((c as f64) - (k as f64)).powi(2),
            DifferenceMetric::Ordinal => {
                let (lo, hi) = (c.min(k), c.max(k));
                let s: f64 = nc[lo..=hi].iter().sum::<f64>() - (nc[c] + nc[k]) / 2.0;
                s * s
            }
        }
    };
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..VALUES {
        for k in 0..VALUES {
            let d = delta(c, k);
            d_o += o[c][k] * d;
            d_e += nc[c] * nc[k] * d;
        }
    }
    d_o /= n;
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - d_o / d_e)
}
