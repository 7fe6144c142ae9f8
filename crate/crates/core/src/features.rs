//! Feature sets, probability vectors, and the cosine cost volume.
//!
//! A cost volume holds the cosine similarity between every visual feature
//! and every textual feature; the transport cost matrix is one minus it,
//! so costs land in [0, 2].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{CovotError, Result};

/// Norms at or below this are treated as zero vectors.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Probability entries must sum to 1 within this tolerance.
pub const PROB_SUM_EPS: f64 = 1e-9;

/// Which side of the alignment a feature set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Visual,
    Textual,
}

/// An ordered collection of same-dimension real vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    vectors: Array2<f64>,
    role: Role,
}

impl FeatureSet {
    /// Builds a feature set from an M×d matrix. Requires M ≥ 1, d ≥ 1,
    /// and finite entries.
    pub fn new(vectors: Array2<f64>, role: Role) -> Result<Self> {
        let (m, d) = vectors.dim();
        if m == 0 || d == 0 {
            return Err(CovotError::invalid(
                "vectors",
                format!("feature set must be non-empty, got {m}×{d}"),
            ));
        }
        if let Some(bad) = vectors.iter().position(|x| !x.is_finite()) {
            return Err(CovotError::invalid(
                "vectors",
                format!("non-finite entry at flat index {bad}"),
            ));
        }
        Ok(Self { vectors, role })
    }

    /// Builds a feature set from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], role: Role) -> Result<Self> {
        if rows.is_empty() {
            return Err(CovotError::invalid("rows", "feature set must be non-empty"));
        }
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(CovotError::DimensionMismatch {
                    left: d,
                    right: rows[i].len(),
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let vectors = Array2::from_shape_vec((rows.len(), d), flat)
            .expect("row-major layout matches shape");
        Self::new(vectors, role)
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    /// Euclidean norm of each vector.
    pub fn norms(&self) -> Array1<f64> {
        self.vectors
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .collect()
    }

    /// Returns a copy with every vector scaled to unit Euclidean norm.
    /// Order is preserved.
    pub fn normalize(&self) -> Result<Self> {
        let mut out = self.vectors.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm <= ZERO_NORM_EPS {
                return Err(CovotError::ZeroVector { index: i, norm });
            }
            row.mapv_inplace(|x| x / norm);
        }
        Ok(Self {
            vectors: out,
            role: self.role,
        })
    }
}

/// Nonnegative weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    weights: Array1<f64>,
}

impl ProbabilityVector {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CovotError::invalid("weights", "must be non-empty"));
        }
        if let Some(i) = weights.iter().position(|&w| !w.is_finite() || w < 0.0) {
            return Err(CovotError::invalid(
                "weights",
                format!("entry {i} is negative or non-finite: {}", weights[i]),
            ));
        }
        let sum: f64 = weights.sum();
        if (sum - 1.0).abs() > PROB_SUM_EPS {
            return Err(CovotError::invalid(
                "weights",
                format!("entries sum to {sum}, not 1 within {PROB_SUM_EPS:.0e}"),
            ));
        }
        Ok(Self { weights })
    }

    /// The uniform distribution over `k` outcomes.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(CovotError::invalid("k", "must be positive"));
        }
        Ok(Self {
            weights: Array1::from_elem(k, 1.0 / k as f64),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }
}

/// M×N cosine similarities between a visual and a textual feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    sim: Array2<f64>,
}

impl CostVolume {
    /// Wraps a similarity matrix; entries must be finite and in [−1, 1]
    /// (up to 1e-9, then clamped).
    pub fn new(sim: Array2<f64>) -> Result<Self> {
        if sim.is_empty() {
            return Err(CovotError::invalid("sim", "must be non-empty"));
        }
        for (i, &s) in sim.iter().enumerate() {
            if !s.is_finite() || s.abs() > 1.0 + 1e-9 {
                return Err(CovotError::invalid(
                    "sim",
                    format!("entry at flat index {i} is not a cosine: {s}"),
                ));
            }
        }
        Ok(Self {
            sim: sim.mapv(|s| s.clamp(-1.0, 1.0)),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.sim.dim()
    }

    pub fn sim(&self) -> ArrayView2<'_, f64> {
        self.sim.view()
    }
}

/// M×N nonnegative transport costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    cost: Array2<f64>,
}

impl CostMatrix {
    /// Wraps a general cost matrix; entries must be finite and ≥ 0.
    pub fn new(cost: Array2<f64>) -> Result<Self> {
        if cost.is_empty() {
            return Err(CovotError::invalid("cost", "must be non-empty"));
        }
        for (i, &c) in cost.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(CovotError::invalid(
                    "cost",
                    format!("entry at flat index {i} is negative or non-finite: {c}"),
                ));
            }
        }
        Ok(Self { cost })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.cost.dim()
    }

    pub fn cost(&self) -> ArrayView2<'_, f64> {
        self.cost.view()
    }

    /// Largest entry; 0 for the all-zero matrix.
    pub fn max_entry(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }
}

/// Cosine similarity volume between two feature sets sharing dimension d:
/// sim[i][n] = ⟨visual_i, textual_n⟩ / (‖visual_i‖·‖textual_n‖).
pub fn build_cost_volume(visual: &FeatureSet, textual: &FeatureSet) -> Result<CostVolume> {
    if visual.dim() != textual.dim() {
        return Err(CovotError::DimensionMismatch {
            left: visual.dim(),
            right: textual.dim(),
        });
    }
    let vn = visual.norms();
    for (i, &n) in vn.iter().enumerate() {
        if n <= ZERO_NORM_EPS {
            return Err(CovotError::ZeroVector { index: i, norm: n });
        }
    }
    let tn = textual.norms();
    for (i, &n) in tn.iter().enumerate() {
        if n <= ZERO_NORM_EPS {
            return Err(CovotError::ZeroVector { index: i, norm: n });
        }
    }
    let raw = visual.vectors().dot(&textual.vectors().t());
    let mut sim = raw;
    for ((i, n), s) in sim.indexed_iter_mut() {
        *s /= vn[i] * tn[n];
    }
    CostVolume::new(sim)
}

/// Transport costs from similarities: cost = 1 − sim, entries in [0, 2].
pub fn cost_matrix_from_volume(cv: &CostVolume) -> CostMatrix {
    let cost = cv.sim().mapv(|s| 1.0 - s);
    CostMatrix { cost }
}
