//! Entropic optimal transport by Sinkhorn iteration.
//!
//! The solver alternates the scaling updates a ← u ⊘ (K·b), b ← v ⊘ (Kᵀ·a)
//! over the Gibbs kernel K = exp(−C/λ) and stops when Δv, the max absolute
//! entrywise change in the column scaling b between successive iterations,
//! falls below a threshold. The returned plan is diag(a)·K·diag(b), the
//! fixed-point form of the entropic optimum.
//!
//! The log-domain path runs the same recursion on log a, log b with
//! log-sum-exp reductions, which keeps small-λ solves clear of underflow.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{CovotError, Result};
use crate::features::{CostMatrix, ProbabilityVector};

/// Solver settings. `delta_v_threshold` defaults to 0.01, a coarse stop
/// that favors speed; `log_domain` defaults on so small-λ runs stay stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub lambda: f64,
    pub delta_v_threshold: f64,
    pub max_iters: usize,
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            delta_v_threshold: 0.01,
            max_iters: 1000,
            log_domain: true,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(CovotError::invalid(
                "lambda",
                format!("must be a positive real, got {}", self.lambda),
            ));
        }
        if !(self.delta_v_threshold > 0.0 && self.delta_v_threshold.is_finite()) {
            return Err(CovotError::invalid(
                "delta_v_threshold",
                format!("must be a positive real, got {}", self.delta_v_threshold),
            ));
        }
        if self.max_iters == 0 {
            return Err(CovotError::invalid("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// Gibbs kernel exp(−C/λ). `underflowed` flags entries that rounded to
/// zero, which only matters on the linear-domain path.
#[derive(Debug, Clone)]
pub struct GibbsKernel {
    pub k: Array2<f64>,
    pub underflowed: bool,
}

/// K[m][n] = exp(−C[m][n]/λ); entries in (0, 1] for nonnegative costs
/// unless they underflow.
pub fn gibbs_kernel(c: &CostMatrix, lambda: f64) -> Result<GibbsKernel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CovotError::invalid(
            "lambda",
            format!("must be a positive real, got {lambda}"),
        ));
    }
    let k = c.cost().mapv(|x| (-x / lambda).exp());
    let underflowed = k.iter().any(|&x| x == 0.0);
    Ok(GibbsKernel { k, underflowed })
}

/// Nonnegative coupling with prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    plan: Array2<f64>,
    row_marginal: ProbabilityVector,
    col_marginal: ProbabilityVector,
}

impl TransportPlan {
    /// Wraps a plan matrix; entries must be nonnegative and finite, shape
    /// must match the marginals, and total mass must be 1 within 1e-9.
    pub fn new(
        plan: Array2<f64>,
        row_marginal: ProbabilityVector,
        col_marginal: ProbabilityVector,
    ) -> Result<Self> {
        let (m, n) = plan.dim();
        if m != row_marginal.len() || n != col_marginal.len() {
            return Err(CovotError::ShapeMismatch {
                expected: (row_marginal.len(), col_marginal.len()),
                got: (m, n),
            });
        }
        for (i, &t) in plan.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(CovotError::invalid(
                    "plan",
                    format!("entry at flat index {i} is negative or non-finite: {t}"),
                ));
            }
        }
        let mass: f64 = plan.sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(CovotError::invalid(
                "plan",
                format!("total mass {mass} is not 1 within 1e-9"),
            ));
        }
        Ok(Self {
            plan,
            row_marginal,
            col_marginal,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.plan.dim()
    }

    pub fn plan(&self) -> ndarray::ArrayView2<'_, f64> {
        self.plan.view()
    }

    pub fn row_marginal(&self) -> &ProbabilityVector {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &ProbabilityVector {
        &self.col_marginal
    }

    /// Row sums of the plan.
    pub fn row_sums(&self) -> Array1<f64> {
        self.plan.sum_axis(ndarray::Axis(1))
    }

    /// Column sums of the plan.
    pub fn col_sums(&self) -> Array1<f64> {
        self.plan.sum_axis(ndarray::Axis(0))
    }

    /// Largest absolute deviation of row and column sums from the
    /// prescribed marginals.
    pub fn marginal_errors(&self) -> (f64, f64) {
        let row = self
            .row_sums()
            .iter()
            .zip(self.row_marginal.weights())
            .map(|(s, u)| (s - u).abs())
            .fold(0.0, f64::max);
        let col = self
            .col_sums()
            .iter()
            .zip(self.col_marginal.weights())
            .map(|(s, v)| (s - v).abs())
            .fold(0.0, f64::max);
        (row, col)
    }
}

/// Solver output. The scaling vectors are kept in log form so the
/// diag(a)·K·diag(b) factorization stays checkable even when the linear
/// scalings overflow.
#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub plan: TransportPlan,
    pub distance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta_v: f64,
    pub log_scaling_a: Array1<f64>,
    pub log_scaling_b: Array1<f64>,
}

/// Structured record of a solve, the serializable summary form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SinkhornRecord {
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta_v: f64,
    pub distance: f64,
}

impl SinkhornResult {
    pub fn record(&self, lambda: f64) -> SinkhornRecord {
        let (m, n) = self.plan.shape();
        SinkhornRecord {
            m,
            n,
            lambda,
            iterations: self.iterations,
            converged: self.converged,
            final_delta_v: self.final_delta_v,
            distance: self.distance,
        }
    }
}

/// One iteration of a convergence trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub delta_v: f64,
    pub distance: f64,
}

/// Total transport cost ⟨T,C⟩ = Σ_{m,n} T[m][n]·C[m][n].
pub fn ot_distance(plan: &TransportPlan, c: &CostMatrix) -> Result<f64> {
    if plan.shape() != c.shape() {
        return Err(CovotError::ShapeMismatch {
            expected: plan.shape(),
            got: c.shape(),
        });
    }
    Ok(inner_product(&plan.plan(), &c.cost()))
}

fn inner_product(t: &ndarray::ArrayView2<f64>, c: &ndarray::ArrayView2<f64>) -> f64 {
    t.iter().zip(c.iter()).map(|(a, b)| a * b).sum()
}

/// Max absolute entrywise change between successive column scalings.
pub fn delta_v(v_prev: ArrayView1<f64>, v_next: ArrayView1<f64>) -> Result<f64> {
    if v_prev.len() != v_next.len() {
        return Err(CovotError::LengthMismatch {
            expected: v_prev.len(),
            got: v_next.len(),
        });
    }
    Ok(v_prev
        .iter()
        .zip(v_next.iter())
        .map(|(p, n)| (p - n).abs())
        .fold(0.0, f64::max))
}

/// Solves entropic OT for the given marginals and returns the plan in
/// fixed-point form. Non-convergence is not an error here: the result
/// comes back with `converged = false` and the last iterate.
pub fn sinkhorn_solve(
    c: &CostMatrix,
    u: &ProbabilityVector,
    v: &ProbabilityVector,
    cfg: &SinkhornConfig,
) -> Result<SinkhornResult> {
    solve_impl(c, u, v, cfg, None)
}

/// As `sinkhorn_solve`, additionally recording (iteration, Δv, ⟨T,C⟩)
/// after every iteration. Building the plan each iteration costs O(MN),
/// so use the untraced entry point when the trace is not needed.
pub fn sinkhorn_solve_traced(
    c: &CostMatrix,
    u: &ProbabilityVector,
    v: &ProbabilityVector,
    cfg: &SinkhornConfig,
) -> Result<(SinkhornResult, Vec<TraceRow>)> {
    let mut trace = Vec::new();
    let result = solve_impl(c, u, v, cfg, Some(&mut trace))?;
    Ok((result, trace))
}

fn solve_impl(
    c: &CostMatrix,
    u: &ProbabilityVector,
    v: &ProbabilityVector,
    cfg: &SinkhornConfig,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<SinkhornResult> {
    cfg.validate()?;
    let (m, n) = c.shape();
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
    if cfg.log_domain {
        solve_log(c, u, v, cfg, trace)
    } else {
        solve_linear(c, u, v, cfg, trace)
    }
}

fn solve_linear(
    c: &CostMatrix,
    u: &ProbabilityVector,
    v: &ProbabilityVector,
    cfg: &SinkhornConfig,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<SinkhornResult> {
    let (m, n) = c.shape();
    let k = gibbs_kernel(c, cfg.lambda)?.k;
    let uw = u.weights();
    let vw = v.weights();

    let mut a = Array1::<f64>::ones(m);
    let mut b = Array1::<f64>::ones(n);
    let mut iterations = 0usize;
    let mut final_dv = f64::INFINITY;
    let mut converged = false;

    while iterations < cfg.max_iters {
        iterations += 1;
        // a ← u ⊘ (K·b); rows with zero marginal carry no mass.
        let kb = k.dot(&b);
        for i in 0..m {
            if uw[i] == 0.0 {
                a[i] = 0.0;
            } else if kb[i] == 0.0 {
                return Err(CovotError::MarginalMismatch {
                    axis: "row",
                    index: i,
                });
            } else {
                a[i] = uw[i] / kb[i];
            }
        }
        // b ← v ⊘ (Kᵀ·a), then Δv against the previous column scaling.
        let ka = k.t().dot(&a);
        let mut dv = 0.0f64;
        for j in 0..n {
            let next = if vw[j] == 0.0 {
                0.0
            } else if ka[j] == 0.0 {
                return Err(CovotError::MarginalMismatch {
                    axis: "column",
                    index: j,
                });
            } else {
                vw[j] / ka[j]
            };
            dv = dv.max((next - b[j]).abs());
            b[j] = next;
        }
        final_dv = dv;
        if let Some(rows) = trace.as_deref_mut() {
            let t = scaled_plan(&a, &k, &b);
            rows.push(TraceRow {
                iteration: iterations,
                delta_v: dv,
                distance: inner_product(&t.view(), &c.cost()),
            });
        }
        if dv < cfg.delta_v_threshold {
            converged = true;
            break;
        }
    }

    let t = scaled_plan(&a, &k, &b);
    let distance = inner_product(&t.view(), &c.cost());
    let plan = TransportPlan::new(t, u.clone(), v.clone())?;
    Ok(SinkhornResult {
        plan,
        distance,
        iterations,
        converged,
        final_delta_v: final_dv,
        log_scaling_a: a.mapv(f64::ln),
        log_scaling_b: b.mapv(f64::ln),
    })
}

fn scaled_plan(a: &Array1<f64>, k: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut t = k.clone();
    for ((i, j), x) in t.indexed_iter_mut() {
        *x *= a[i] * b[j];
    }
    t
}

fn solve_log(
    c: &CostMatrix,
    u: &ProbabilityVector,
    v: &ProbabilityVector,
    cfg: &SinkhornConfig,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<SinkhornResult> {
    let (m, n) = c.shape();
    let log_k = c.cost().mapv(|x| -x / cfg.lambda);
    let log_u = u.weights().mapv(f64::ln); // zero weights become −inf
    let log_v = v.weights().mapv(f64::ln);

    let mut la = Array1::<f64>::zeros(m);
    let mut lb = Array1::<f64>::zeros(n);
    let mut b_prev = Array1::<f64>::ones(n);
    let mut iterations = 0usize;
    let mut final_dv = f64::INFINITY;
    let mut converged = false;

    while iterations < cfg.max_iters {
        iterations += 1;
        for i in 0..m {
            if log_u[i] == f64::NEG_INFINITY {
                la[i] = f64::NEG_INFINITY;
            } else {
                let lse = log_sum_exp((0..n).map(|j| log_k[[i, j]] + lb[j]));
                if lse == f64::NEG_INFINITY {
                    return Err(CovotError::MarginalMismatch {
                        axis: "row",
                        index: i,
                    });
                }
                la[i] = log_u[i] - lse;
            }
        }
        let mut dv = 0.0f64;
        for j in 0..n {
            if log_v[j] == f64::NEG_INFINITY {
                lb[j] = f64::NEG_INFINITY;
            } else {
                let lse = log_sum_exp((0..m).map(|i| log_k[[i, j]] + la[i]));
                if lse == f64::NEG_INFINITY {
                    return Err(CovotError::MarginalMismatch {
                        axis: "column",
                        index: j,
                    });
                }
                lb[j] = log_v[j] - lse;
            }
            let next = lb[j].exp();
            dv = dv.max((next - b_prev[j]).abs());
            b_prev[j] = next;
        }
        final_dv = dv;
        if let Some(rows) = trace.as_deref_mut() {
            let t = log_plan(&la, &log_k, &lb);
            rows.push(TraceRow {
                iteration: iterations,
                delta_v: dv,
                distance: inner_product(&t.view(), &c.cost()),
            });
        }
        if dv < cfg.delta_v_threshold {
            converged = true;
            break;
        }
    }

    let t = log_plan(&la, &log_k, &lb);
    let distance = inner_product(&t.view(), &c.cost());
    let plan = TransportPlan::new(t, u.clone(), v.clone())?;
    Ok(SinkhornResult {
        plan,
        distance,
        iterations,
        converged,
        final_delta_v: final_dv,
        log_scaling_a: la,
        log_scaling_b: lb,
    })
}

fn log_plan(la: &Array1<f64>, log_k: &Array2<f64>, lb: &Array1<f64>) -> Array2<f64> {
    let mut t = log_k.clone();
    for ((i, j), x) in t.indexed_iter_mut() {
        // −inf + inf cannot arise: scalings are −inf only on zero-marginal
        // rows/columns, where the plan entry is exactly zero.
        let e = la[i] + *x + lb[j];
        *x = if e == f64::NEG_INFINITY { 0.0 } else { e.exp() };
    }
    t
}

/// Log-sum-exp with −inf terms skipped; returns −inf for an empty or
/// all-(−inf) input.
fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn cm(rows: Array2<f64>) -> CostMatrix {
        CostMatrix::new(rows).unwrap()
    }

    #[test]
    fn gibbs_kernel_examples() {
        let k = gibbs_kernel(&cm(array![[0.0]]), 1.0).unwrap();
        assert_eq!(k.k[[0, 0]], 1.0);
        assert!(!k.underflowed);

        let k = gibbs_kernel(&cm(array![[2.0]]), 2.0).unwrap();
        assert_abs_diff_eq!(k.k[[0, 0]], 0.36787944, epsilon = 1e-8);

        let k = gibbs_kernel(&cm(array![[0.0, 2.0], [2.0, 0.0]]), 0.1).unwrap();
        assert_eq!(k.k[[0, 0]], 1.0);
        assert_abs_diff_eq!(k.k[[0, 1]], (-20.0f64).exp(), epsilon = 1e-24);
    }

    #[test]
    fn solve_one_by_one_is_forced() {
        let u = ProbabilityVector::uniform(1).unwrap();
        let v = ProbabilityVector::uniform(1).unwrap();
        for log_domain in [false, true] {
            let cfg = SinkhornConfig {
                log_domain,
                ..Default::default()
            };
            let r = sinkhorn_solve(&cm(array![[0.5]]), &u, &v, &cfg).unwrap();
            assert!(r.converged);
            assert_abs_diff_eq!(r.plan.plan()[[0, 0]], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.distance, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_antisymmetric_two_by_two() {
        // Exact OT is the diagonal permutation / 2 with zero cost.
        let u = ProbabilityVector::uniform(2).unwrap();
        let v = ProbabilityVector::uniform(2).unwrap();
        let c = cm(array![[0.0, 1.0], [1.0, 0.0]]);
        for log_domain in [false, true] {
            let cfg = SinkhornConfig {
                lambda: 0.05,
                delta_v_threshold: 1e-9,
                max_iters: 10_000,
                log_domain,
            };
            let r = sinkhorn_solve(&c, &u, &v, &cfg).unwrap();
            assert!(r.converged);
            assert!(r.distance <= 1e-6);
            assert_abs_diff_eq!(r.plan.plan()[[0, 0]], 0.5, epsilon = 1e-6);
            assert_abs_diff_eq!(r.plan.plan()[[1, 1]], 0.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn solve_constant_cost_gives_product_coupling() {
        let u = ProbabilityVector::uniform(2).unwrap();
        let v = ProbabilityVector::uniform(2).unwrap();
        let c = cm(array![[0.7, 0.7], [0.7, 0.7]]);
        let cfg = SinkhornConfig {
            lambda: 1.0,
            ..Default::default()
        };
        let r = sinkhorn_solve(&c, &u, &v, &cfg).unwrap();
        assert!(r.converged);
        for t in r.plan.plan() {
            assert_abs_diff_eq!(*t, 0.25, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(r.distance, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn ot_distance_examples() {
        let u = ProbabilityVector::uniform(1).unwrap();
        let p = TransportPlan::new(array![[1.0]], u.clone(), u).unwrap();
        assert_eq!(ot_distance(&p, &cm(array![[0.5]])).unwrap(), 0.5);

        let u2 = ProbabilityVector::uniform(2).unwrap();
        let p = TransportPlan::new(
            array![[0.25, 0.25], [0.25, 0.25]],
            u2.clone(),
            u2.clone(),
        )
        .unwrap();
        assert_eq!(
            ot_distance(&p, &cm(array![[0.0, 1.0], [1.0, 0.0]])).unwrap(),
            0.5
        );

        let p = TransportPlan::new(array![[0.5, 0.0], [0.0, 0.5]], u2.clone(), u2).unwrap();
        let c = cm(array![
            [0.29289322, 1.70710678],
            [1.70710678, 0.29289322]
        ]);
        assert_abs_diff_eq!(ot_distance(&p, &c).unwrap(), 0.29289322, epsilon = 1e-12);
    }

    #[test]
    fn delta_v_examples() {
        let v1 = array![1.0, 1.0];
        assert_eq!(delta_v(v1.view(), v1.view()).unwrap(), 0.0);
        let v2 = array![1.0, 1.5];
        assert_eq!(delta_v(v1.view(), v2.view()).unwrap(), 0.5);
        let v3 = array![1.0, 1.0, 1.0];
        assert!(delta_v(v1.view(), v3.view()).is_err());
    }

    #[test]
    fn trace_rows_are_positive_until_convergence() {
        let u = ProbabilityVector::uniform(2).unwrap();
        let c = cm(array![[0.0, 1.0], [1.0, 0.0]]);
        let cfg = SinkhornConfig {
            lambda: 0.05,
            delta_v_threshold: 1e-9,
            max_iters: 10_000,
            log_domain: false,
        };
        let (r, trace) = sinkhorn_solve_traced(&c, &u, &u, &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(trace.len(), r.iterations);
        // Every Δv before the stopping iteration is strictly positive.
        for row in &trace[..trace.len() - 1] {
            assert!(row.delta_v > 0.0);
        }
        assert!(trace.last().unwrap().delta_v < 1e-9);
    }

    #[test]
    fn nonconvergence_is_reported_not_raised() {
        // Asymmetric costs keep the first-iteration Δv well above threshold.
        let u = ProbabilityVector::uniform(2).unwrap();
        let c = cm(array![[0.1, 0.9], [0.7, 0.2]]);
        let cfg = SinkhornConfig {
            lambda: 0.05,
            delta_v_threshold: 1e-12,
            max_iters: 1,
            log_domain: false,
        };
        let r = sinkhorn_solve(&c, &u, &u, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.final_delta_v >= 1e-12);
    }

    #[test]
    fn converged_flag_matches_threshold() {
        let u = ProbabilityVector::uniform(3).unwrap();
        let c = cm(array![[0.1, 0.9, 0.4], [0.8, 0.2, 0.5], [0.3, 0.6, 0.7]]);
        let cfg = SinkhornConfig {
            lambda: 0.1,
            delta_v_threshold: 1e-8,
            max_iters: 100_000,
            log_domain: false,
        };
        let r = sinkhorn_solve(&c, &u, &u, &cfg).unwrap();
        assert_eq!(r.converged, r.final_delta_v < cfg.delta_v_threshold);
    }
}
