//! Ground-truth optimal transport on small instances.
//!
//! Two independent solvers: exhaustive permutation search for square
//! uniform-marginal instances (the LP optimum sits at a vertex of the
//! Birkhoff polytope, i.e. a scaled permutation matrix), and a
//! transportation simplex for general marginals. They exist to verify the
//! Sinkhorn solver and each other.

use itertools::Itertools;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CovotError, Result};
use crate::features::{CostMatrix, ProbabilityVector};
use crate::sinkhorn::TransportPlan;

/// Hard cap for exhaustive permutation search (8! = 40320 candidates).
pub const PERMUTATION_CAP: usize = 8;

/// Hard cap per side for the transportation simplex.
pub const SIMPLEX_CAP: usize = 32;

/// Entering-variable tolerance: reduced costs above −1e-12 count as
/// nonnegative, which bounds the optimality error well below 1e-9.
const REDUCED_COST_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMethod {
    Permutation,
    Simplex,
}

/// Exact minimum of the transport LP and an optimal vertex attaining it.
#[derive(Debug, Clone)]
pub struct ExactOTResult {
    pub value: f64,
    pub plan: TransportPlan,
    pub method: OracleMethod,
}

/// Minimizes (1/n)·Σ_i C[i][σ(i)] over all permutations σ by exhaustive
/// search; marginals are implicitly uniform 1/n. Among equal-cost optima
/// the lexicographically smallest permutation wins, which keeps golden
/// outputs deterministic.
pub fn exact_ot_permutation(c: &CostMatrix) -> Result<ExactOTResult> {
    let (m, n) = c.shape();
    if m != n {
        return Err(CovotError::ShapeMismatch {
            expected: (m, m),
            got: (m, n),
        });
    }
    if n > PERMUTATION_CAP {
        return Err(CovotError::TooLarge {
            what: "permutation oracle",
            limit: PERMUTATION_CAP,
            got: n,
        });
    }
    let cost = c.cost();
    let mut best_sum = f64::INFINITY;
    let mut best_perm: Vec<usize> = Vec::new();
    // Lexicographic iteration; strict < keeps the first optimum found.
    for perm in (0..n).permutations(n) {
        let s: f64 = perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
        if s < best_sum {
            best_sum = s;
            best_perm = perm;
        }
    }
    let w = 1.0 / n as f64;
    let mut plan = Array2::<f64>::zeros((n, n));
    for (i, &j) in best_perm.iter().enumerate() {
        plan[[i, j]] = w;
    }
    let uniform = ProbabilityVector::uniform(n)?;
    let plan = TransportPlan::new(plan, uniform.clone(), uniform)?;
    Ok(ExactOTResult {
        value: best_sum / n as f64,
        plan,
        method: OracleMethod::Permutation,
    })
}

/// Solves the transportation LP for general marginals: northwest-corner
/// start, then u-v dual pivoting with Bland's rule (smallest-index entering
/// cell and leaving donor) to rule out degenerate cycling.
pub fn exact_ot_simplex(
    c: &CostMatrix,
    u: &ProbabilityVector,
    v: &ProbabilityVector,
) -> Result<ExactOTResult> {
    let (m, n) = c.shape();
    if m > SIMPLEX_CAP || n > SIMPLEX_CAP {
        return Err(CovotError::TooLarge {
            what: "transportation simplex",
            limit: SIMPLEX_CAP,
            got: m.max(n),
        });
    }
    if u.len() != m {
        return Err(CovotError::LengthMismatch {
            expected: m,
            got: u.len(),
        });
    }
    if v.len() != n {
        return Err(CovotError::LengthMismatch {
            expected: n,
            got: v.len(),
        });
    }

    let mut tableau = Tableau::northwest_corner(c, u, v);
    let mut pivots = 0usize;
    loop {
        let (du, dv) = tableau.duals();
        let Some(entering) = tableau.entering_cell(&du, &dv) else {
            break;
        };
        tableau.pivot(entering);
        pivots += 1;
        if pivots > 100_000 {
            return Err(CovotError::Numerical {
                context: "transportation simplex pivot limit",
            });
        }
    }

    let value = tableau
        .alloc
        .iter()
        .zip(c.cost().iter())
        .map(|(t, c)| t * c)
        .sum();
    let plan = TransportPlan::new(tableau.alloc, u.clone(), v.clone())?;
    Ok(ExactOTResult {
        value,
        plan,
        method: OracleMethod::Simplex,
    })
}

/// Basic feasible solution with exactly M+N−1 basic cells; the basis graph
/// (rows and columns as nodes, basic cells as edges) is a spanning tree.
struct Tableau {
    m: usize,
    n: usize,
    cost: Array2<f64>,
    alloc: Array2<f64>,
    basic: Vec<bool>,
}

impl Tableau {
    fn northwest_corner(c: &CostMatrix, u: &ProbabilityVector, v: &ProbabilityVector) -> Self {
        let (m, n) = c.shape();
        let mut supply: Vec<f64> = u.weights().to_vec();
        let mut demand: Vec<f64> = v.weights().to_vec();
        let mut alloc = Array2::<f64>::zeros((m, n));
        let mut basic = vec![false; m * n];
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let q = supply[i].min(demand[j]);
            alloc[[i, j]] = q;
            basic[i * n + j] = true;
            supply[i] -= q;
            demand[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            // Advance exactly one index per step so the basis ends with
            // M+N−1 cells; ties advance the row, leaving a zero basic.
            if (supply[i] <= demand[j] && i + 1 < m) || j + 1 == n {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(basic.iter().filter(|&&b| b).count(), m + n - 1);
        Tableau {
            m,
            n,
            cost: c.cost().to_owned(),
            alloc,
            basic,
        }
    }

    fn is_basic(&self, i: usize, j: usize) -> bool {
        self.basic[i * self.n + j]
    }

    /// Dual potentials from u_i + v_j = C_ij on basic cells, anchored at
    /// u_0 = 0; well-defined because the basis is a spanning tree.
    fn duals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut du = vec![f64::NAN; self.m];
        let mut dv = vec![f64::NAN; self.n];
        du[0] = 0.0;
        let mut queue = std::collections::VecDeque::from([Node::Row(0)]);
        while let Some(node) = queue.pop_front() {
            match node {
                Node::Row(i) => {
                    for (j, dual) in dv.iter_mut().enumerate() {
                        if self.is_basic(i, j) && dual.is_nan() {
                            *dual = self.cost[[i, j]] - du[i];
                            queue.push_back(Node::Col(j));
                        }
                    }
                }
                Node::Col(j) => {
                    for (i, dual) in du.iter_mut().enumerate() {
                        if self.is_basic(i, j) && dual.is_nan() {
                            *dual = self.cost[[i, j]] - dv[j];
                            queue.push_back(Node::Row(i));
                        }
                    }
                }
            }
        }
        debug_assert!(du.iter().chain(dv.iter()).all(|x| !x.is_nan()));
        (du, dv)
    }

    /// First nonbasic cell in row-major order whose reduced cost is
    /// negative (Bland's entering rule), or None at optimality.
    fn entering_cell(&self, du: &[f64], dv: &[f64]) -> Option<(usize, usize)> {
        for (i, &ui) in du.iter().enumerate() {
            for (j, &vj) in dv.iter().enumerate() {
                if !self.is_basic(i, j) && self.cost[[i, j]] - ui - vj < -REDUCED_COST_EPS {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Unique path of basic cells from row i0 to column j0; together with
    /// the entering cell it closes the pivot cycle. Cells along the path
    /// alternate donor (−θ), receiver (+θ), ..., donor.
    fn tree_path(&self, i0: usize, j0: usize) -> Vec<(usize, usize)> {
        let start = Node::Row(i0);
        let goal = Node::Col(j0);
        let idx = |node: Node| match node {
            Node::Row(i) => i,
            Node::Col(j) => self.m + j,
        };
        let mut prev: Vec<Option<Node>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[idx(start)] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        'bfs: while let Some(node) = queue.pop_front() {
            match node {
                Node::Row(i) => {
                    for j in 0..self.n {
                        if self.is_basic(i, j) && !seen[idx(Node::Col(j))] {
                            seen[idx(Node::Col(j))] = true;
                            prev[idx(Node::Col(j))] = Some(node);
                            if Node::Col(j) == goal {
                                break 'bfs;
                            }
                            queue.push_back(Node::Col(j));
                        }
                    }
                }
                Node::Col(j) => {
                    for i in 0..self.m {
                        if self.is_basic(i, j) && !seen[idx(Node::Row(i))] {
                            seen[idx(Node::Row(i))] = true;
                            prev[idx(Node::Row(i))] = Some(node);
                            queue.push_back(Node::Row(i));
                        }
                    }
                }
            }
        }
        // Walk back from j0 to i0, emitting the cell for each tree edge.
        let mut cells = Vec::new();
        let mut node = goal;
        while node != start {
            let p = prev[idx(node)].expect("basis tree is connected");
            let cell = match (p, node) {
                (Node::Row(i), Node::Col(j)) | (Node::Col(j), Node::Row(i)) => (i, j),
                _ => unreachable!("basis edges join a row and a column"),
            };
            cells.push(cell);
            node = p;
        }
        cells.reverse();
        cells
    }

    fn pivot(&mut self, entering: (usize, usize)) {
        let path = self.tree_path(entering.0, entering.1);
        // Donors are the even-position path cells (path starts on the
        // entering cell's row, which must give back what the row gains).
        let donors: Vec<(usize, usize)> = path.iter().copied().step_by(2).collect();
        let theta = donors
            .iter()
            .map(|&(i, j)| self.alloc[[i, j]])
            .fold(f64::INFINITY, f64::min);
        // Bland's leaving rule: lexicographically smallest donor attaining θ.
        let leaving = donors
            .iter()
            .copied()
            .filter(|&(i, j)| self.alloc[[i, j]] == theta)
            .min()
            .expect("cycle has at least one donor");

        self.alloc[[entering.0, entering.1]] += theta;
        for (pos, &(i, j)) in path.iter().enumerate() {
            if pos % 2 == 0 {
                // Subtraction of the exact minimum stays ≥ 0; clamp the
                // last-ulp negatives from near-ties.
                self.alloc[[i, j]] = (self.alloc[[i, j]] - theta).max(0.0);
            } else {
                self.alloc[[i, j]] += theta;
            }
        }
        self.alloc[[leaving.0, leaving.1]] = 0.0;
        self.basic[leaving.0 * self.n + leaving.1] = false;
        self.basic[entering.0 * self.n + entering.1] = true;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Row(usize),
    Col(usize),
}
