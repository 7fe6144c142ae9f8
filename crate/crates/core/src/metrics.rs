//! Confusion-matrix accumulation and mean intersection over union.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{CovotError, Result};

/// counts[g][p] = number of pixels with ground truth g predicted as p.
/// Integer accumulation; merging disjoint pixel sets is entrywise addition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
}

/// Treatment of classes whose union is empty (never labeled, never
/// predicted): drop them from the mean or score them as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ZeroUnionPolicy {
    #[default]
    Exclude,
    CountAsZero,
}

#[derive(Debug, Clone)]
pub struct MiouResult {
    /// Mean IoU over classes, per the zero-union policy.
    pub miou: f64,
    /// IoU per class; None where the union is empty.
    pub per_class: Vec<Option<f64>>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(CovotError::invalid("class_count", "must be positive"));
        }
        Ok(Self {
            counts: Array2::zeros((class_count, class_count)),
        })
    }

    /// Wraps raw counts; must be square.
    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        let (g, p) = counts.dim();
        if g == 0 || g != p {
            return Err(CovotError::ShapeMismatch {
                expected: (g, g),
                got: (g, p),
            });
        }
        Ok(Self { counts })
    }

    pub fn class_count(&self) -> usize {
        self.counts.nrows()
    }

    pub fn counts(&self) -> ArrayView2<'_, u64> {
        self.counts.view()
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    /// Adds one (ground truth, prediction) observation.
    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        let n = self.class_count();
        if truth >= n {
            return Err(CovotError::OutOfRange {
                what: "label",
                got: truth,
                bound: n,
            });
        }
        if pred >= n {
            return Err(CovotError::OutOfRange {
                what: "prediction",
                got: pred,
                bound: n,
            });
        }
        self.counts[[truth, pred]] += 1;
        Ok(())
    }

    /// Entrywise merge of counts from a disjoint pixel set.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.class_count() != other.class_count() {
            return Err(CovotError::ShapeMismatch {
                expected: self.counts.dim(),
                got: other.counts.dim(),
            });
        }
        self.counts += &other.counts;
        Ok(())
    }
}

/// Accumulates a confusion matrix over two equally-shaped label grids.
pub fn confusion(
    labels: &Array2<usize>,
    preds: &Array2<usize>,
    class_count: usize,
) -> Result<ConfusionMatrix> {
    if labels.dim() != preds.dim() {
        return Err(CovotError::ShapeMismatch {
            expected: labels.dim(),
            got: preds.dim(),
        });
    }
    let mut cm = ConfusionMatrix::new(class_count)?;
    for (&t, &p) in labels.iter().zip(preds.iter()) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

/// As `confusion` over flat label slices (row-major pixel order).
pub fn confusion_flat(
    labels: ArrayView1<usize>,
    preds: ArrayView1<usize>,
    class_count: usize,
) -> Result<ConfusionMatrix> {
    if labels.len() != preds.len() {
        return Err(CovotError::LengthMismatch {
            expected: labels.len(),
            got: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(class_count)?;
    for (&t, &p) in labels.iter().zip(preds.iter()) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

/// Per-class IoU_n = cm[n][n] / (row_n + col_n − cm[n][n]) and its mean.
/// Zero-union classes are excluded from the mean or counted as zero per
/// the policy; if every class has zero union the metric is undefined.
pub fn miou(cm: &ConfusionMatrix, policy: ZeroUnionPolicy) -> Result<MiouResult> {
    let n = cm.class_count();
    let counts = cm.counts();
    let mut per_class = Vec::with_capacity(n);
    let mut sum = 0.0f64;
    let mut denom = 0usize;
    for k in 0..n {
        let diag = counts[[k, k]];
        let row: u64 = (0..n).map(|j| counts[[k, j]]).sum();
        let col: u64 = (0..n).map(|i| counts[[i, k]]).sum();
        let union = row + col - diag;
        if union == 0 {
            per_class.push(None);
            if matches!(policy, ZeroUnionPolicy::CountAsZero) {
                denom += 1;
            }
        } else {
            let iou = diag as f64 / union as f64;
            per_class.push(Some(iou));
            sum += iou;
            denom += 1;
        }
    }
    if per_class.iter().all(Option::is_none) {
        return Err(CovotError::AllEmpty);
    }
    Ok(MiouResult {
        miou: sum / denom as f64,
        per_class,
    })
}
