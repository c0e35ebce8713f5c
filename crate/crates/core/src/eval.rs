//! Distortion-type recognition in the embedded space: per-block 1NN
//! classification, per-image majority voting, and confusion matrices.

use nalgebra::{DMatrix, DVectorView};
use serde::Serialize;

use crate::error::{Error, Result};

/// Number of distortion classes (original plus six families).
pub const NUM_LABELS: usize = 7;

/// Index of the nearest reference row by Euclidean distance; ties broken by
/// smaller index. `exclude` skips one reference (leave-one-out).
pub fn nearest_index(
    query: DVectorView<f64>,
    references: &DMatrix<f64>,
    exclude: Option<usize>,
) -> Result<usize> {
    let m = references.nrows();
    let usable = m - usize::from(exclude.map(|e| e < m).unwrap_or(false));
    if usable == 0 {
        return Err(Error::InvalidInput(
            "1NN needs at least one reference after exclusion".into(),
        ));
    }
    let mut best = None;
    for r in 0..m {
        if exclude == Some(r) {
            continue;
        }
        let mut d = 0.0;
        for c in 0..references.ncols() {
            let diff = query[c] - references[(r, c)];
            d += diff * diff;
        }
        best = match best {
            None => Some((r, d)),
            Some((_, bd)) if d < bd => Some((r, d)),
            other => other,
        };
    }
    Ok(best.expect("nonempty reference set").0)
}

/// Label of the nearest reference row.
pub fn classify_block_1nn(
    query: DVectorView<f64>,
    references: &DMatrix<f64>,
    labels: &[u8],
    exclude: Option<usize>,
) -> Result<u8> {
    if labels.len() != references.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} references",
            labels.len(),
            references.nrows()
        )));
    }
    Ok(labels[nearest_index(query, references, exclude)?])
}

/// Labels ranked by block-vote fraction, descending; ties by label id.
pub fn vote_image(block_labels: &[u8]) -> Result<Vec<(u8, f64)>> {
    if block_labels.is_empty() {
        return Err(Error::InvalidInput("vote over an empty block list".into()));
    }
    let mut counts = [0usize; NUM_LABELS];
    for &l in block_labels {
        if (l as usize) >= NUM_LABELS {
            return Err(Error::InvalidInput(format!("label {l} out of 0..=6")));
        }
        counts[l as usize] += 1;
    }
    let total = block_labels.len() as f64;
    let mut ranked: Vec<(u8, f64)> = counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(l, &c)| (l as u8, c as f64 / total))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(ranked)
}

/// 7x7 confusion counts; rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_LABELS]; NUM_LABELS],
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[u8], predicted: &[u8]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut counts = [[0u64; NUM_LABELS]; NUM_LABELS];
        for (&t, &p) in truth.iter().zip(predicted) {
            if (t as usize) >= NUM_LABELS || (p as usize) >= NUM_LABELS {
                return Err(Error::InvalidInput(format!(
                    "label pair ({t}, {p}) out of 0..=6"
                )));
            }
            counts[t as usize][p as usize] += 1;
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[[u64; NUM_LABELS]; NUM_LABELS] {
        &self.counts
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    /// Per-row rates; rows with no samples stay zero.
    pub fn row_normalized(&self) -> [[f64; NUM_LABELS]; NUM_LABELS] {
        let mut rates = [[0.0; NUM_LABELS]; NUM_LABELS];
        for (t, row) in self.counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total > 0 {
                for (p, &c) in row.iter().enumerate() {
                    rates[t][p] = c as f64 / total as f64;
                }
            }
        }
        rates
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..NUM_LABELS).map(|i| self.counts[i][i]).sum();
        correct as f64 / self.total().max(1) as f64
    }

    /// CSV with a header row of predicted labels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred,0,1,2,3,4,5,6\n");
        for (t, row) in self.counts.iter().enumerate() {
            out.push_str(&t.to_string());
            for &c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}
