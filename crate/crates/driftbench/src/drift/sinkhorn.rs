//! Debiased entropic optimal transport between point sets.
//!
//! `S(X, Y) = OT_eps(X, Y) - (OT_eps(X, X) + OT_eps(Y, Y)) / 2` with
//! squared-Euclidean cost and uniform weights. The raw entropic cost is
//! biased (`OT_eps(X, X) > 0`); the debiased form is ~0 at X = Y, which
//! makes distance matrices readable. Iterations run in the log domain, so
//! small epsilon stays stable.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::parallel;

/// Hard cap on point-set size; the dense cost matrix is quadratic.
pub const MAX_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    /// Entropic regularization strength, on the scale of the squared
    /// distances (standardize features first).
    pub epsilon: f64,
    pub max_iters: usize,
    /// L1 row-marginal error at which iteration stops.
    pub tol: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            epsilon: 0.05,
            max_iters: 5_000,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornResult {
    pub value: f64,
    /// False when any of the three solves hit `max_iters` before reaching
    /// `tol`; the value is still usable, just flagged.
    pub converged: bool,
    /// Worst achieved L1 row-marginal error among the solves.
    pub marginal_error: f64,
    pub iterations: usize,
}

/// Pairwise squared Euclidean costs, computed as
/// `|x|^2 + |y|^2 - 2 x.y` with a clamp against negative round-off.
fn squared_cost(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Array2<f64> {
    let x_norms: Array1<f64> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
    let y_norms: Array1<f64> = y.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut cost = x.dot(&y.t());
    for (i, mut row) in cost.rows_mut().into_iter().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = (x_norms[i] + y_norms[j] - 2.0 * *c).max(0.0);
        }
    }
    cost
}

/// Row update `f_i = -eps LSE_j((g_j - C_ij)/eps + log_w)` computed with
/// a two-pass max/sum log-sum-exp; `transpose` flips the roles.
fn potential_update(
    cost: &Array2<f64>,
    other: &Array1<f64>,
    eps: f64,
    log_w: f64,
    transpose: bool,
) -> Array1<f64> {
    let len = if transpose { cost.ncols() } else { cost.nrows() };
    let inner = if transpose { cost.nrows() } else { cost.ncols() };
    let values: Vec<f64> = parallel::map_range(len, |i| {
        let at = |j: usize| {
            let c = if transpose { cost[[j, i]] } else { cost[[i, j]] };
            (other[j] - c) / eps
        };
        let mut max = f64::NEG_INFINITY;
        for j in 0..inner {
            max = max.max(at(j));
        }
        let mut sum = 0.0;
        for j in 0..inner {
            sum += (at(j) - max).exp();
        }
        -eps * (max + sum.ln() + log_w)
    });
    Array1::from(values)
}

/// L1 violation of the row marginals under the current potentials.
fn row_marginal_error(
    cost: &Array2<f64>,
    f: &Array1<f64>,
    g: &Array1<f64>,
    eps: f64,
    log_a: f64,
    log_b: f64,
) -> f64 {
    let n = cost.nrows();
    let m = cost.ncols();
    let errs: Vec<f64> = parallel::map_range(n, |i| {
        let mut max = f64::NEG_INFINITY;
        for j in 0..m {
            max = max.max((f[i] + g[j] - cost[[i, j]]) / eps);
        }
        let mut sum = 0.0;
        for j in 0..m {
            sum += ((f[i] + g[j] - cost[[i, j]]) / eps - max).exp();
        }
        let row = max + sum.ln() + log_b + log_a;
        (row.exp() - log_a.exp()).abs()
    });
    errs.iter().sum()
}

/// Entropic transport cost `sum P_ij C_ij` between uniform measures, via
/// log-domain potential updates with epsilon scaling: iterations start at
/// the cost scale and halve the regularizer down to the target, warm-
/// starting the potentials, which is what keeps small epsilon usable.
fn entropic_cost(cost: &Array2<f64>, params: &SinkhornParams) -> (f64, bool, f64, usize) {
    let (n, m) = cost.dim();
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let max_cost = cost.iter().cloned().fold(0.0f64, f64::max);
    let mut levels = Vec::new();
    let mut level = max_cost.max(params.epsilon);
    while level > params.epsilon * 1.5 {
        levels.push(level);
        level *= 0.5;
    }
    levels.push(params.epsilon);

    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut err = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let warm_budget = 100usize;
    for (li, eps) in levels.iter().enumerate() {
        let eps = *eps;
        let last = li == levels.len() - 1;
        let budget = if last {
            params.max_iters.saturating_sub(iterations).max(1)
        } else {
            warm_budget.min(params.max_iters.saturating_sub(iterations))
        };
        let tol = if last { params.tol } else { params.tol.max(1e-3) };
        for it in 0..budget {
            iterations += 1;
            f = potential_update(cost, &g, eps, log_b, false);
            g = potential_update(cost, &f, eps, log_a, true);
            // Column marginals are exact after the g update; convergence
            // is measured on the rows, every few sweeps.
            if it % 5 == 4 || it == budget - 1 {
                err = row_marginal_error(cost, &f, &g, eps, log_a, log_b);
                if err < tol {
                    if last {
                        converged = true;
                    }
                    break;
                }
            }
        }
        if last {
            break;
        }
    }
    let eps = params.epsilon;
    let transported: Vec<f64> = parallel::map_range(n, |i| {
        (0..m)
            .map(|j| {
                let log_p = (f[i] + g[j] - cost[[i, j]]) / eps + log_a + log_b;
                log_p.exp() * cost[[i, j]]
            })
            .sum()
    });
    (transported.iter().sum(), converged, err, iterations)
}

/// Debiased Sinkhorn divergence between two point sets of equal dimension.
pub fn sinkhorn_divergence(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    params: &SinkhornParams,
) -> Result<SinkhornResult> {
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::EmptyInput("sinkhorn needs non-empty point sets"));
    }
    if x.nrows() > MAX_POINTS || y.nrows() > MAX_POINTS {
        return Err(Error::TooManyPoints(x.nrows().max(y.nrows()), MAX_POINTS));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::InvalidConfig(format!(
            "point dimensions differ: {} vs {}",
            x.ncols(),
            y.ncols()
        )));
    }
    if !(params.epsilon > 0.0) || params.max_iters == 0 || !(params.tol > 0.0) {
        return Err(Error::InvalidConfig(
            "epsilon, tol and max_iters must be positive".into(),
        ));
    }
    let (xy, xy_ok, xy_err, xy_it) = entropic_cost(&squared_cost(&x, &y), params);
    let (xx, xx_ok, xx_err, xx_it) = entropic_cost(&squared_cost(&x, &x), params);
    let (yy, yy_ok, yy_err, yy_it) = entropic_cost(&squared_cost(&y, &y), params);
    Ok(SinkhornResult {
        value: xy - 0.5 * (xx + yy),
        converged: xy_ok && xx_ok && yy_ok,
        marginal_error: xy_err.max(xx_err).max(yy_err),
        iterations: xy_it.max(xx_it).max(yy_it),
    })
}

#[cfg(test)]
pub mod oracle {
    //! Exact small-instance OT: with equal-size uniform measures an
    //! optimal plan is a permutation, so brute force over all of them.

    use ndarray::ArrayView2;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for rest in permutations(n - 1) {
            for slot in 0..n {
                let mut perm = rest.clone();
                perm.insert(slot, n - 1);
                out.push(perm);
            }
        }
        out
    }

    pub fn exact_ot_cost(x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        let n = x.nrows();
        assert_eq!(n, y.nrows());
        let mut best = f64::INFINITY;
        for perm in permutations(n) {
            let mut total = 0.0;
            for (i, j) in perm.iter().enumerate() {
                let diff = &x.row(i) - &y.row(*j);
                total += diff.dot(&diff);
            }
            best = best.min(total / n as f64);
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tight() -> SinkhornParams {
        SinkhornParams {
            epsilon: 1e-3,
            max_iters: 20_000,
            tol: 1e-6,
        }
    }

    #[test]
    fn self_divergence_is_zero() {
        let x = array![[0.0, 1.0], [2.0, 0.5], [1.0, 1.0]];
        let r = sinkhorn_divergence(x.view(), x.view(), &SinkhornParams::default()).unwrap();
        assert!(r.value.abs() < 1e-6, "self divergence {}", r.value);
    }

    #[test]
    fn singleton_pair_recovers_squared_distance() {
        let x = array![[1.0, 2.0, 3.0]];
        let y = array![[2.0, 0.0, 3.5]];
        let expected = 1.0 + 4.0 + 0.25;
        let r = sinkhorn_divergence(x.view(), y.view(), &SinkhornParams::default()).unwrap();
        assert!((r.value - expected).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn matches_exact_assignment_oracle_on_small_sets() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for case in 0..20 {
            let x = Array2::from_shape_fn((6, 2), |_| rng.gen::<f64>());
            let y = Array2::from_shape_fn((6, 2), |_| rng.gen::<f64>());
            let exact = oracle::exact_ot_cost(x.view(), y.view());
            let approx = sinkhorn_divergence(x.view(), y.view(), &tight()).unwrap();
            let rel = (approx.value - exact).abs() / exact;
            assert!(rel < 0.05, "case {case}: {} vs {exact} (rel {rel})", approx.value);
            assert!(approx.marginal_error < 1e-4, "case {case}: err {}", approx.marginal_error);
        }
    }

    #[test]
    fn marginals_match_within_tolerance() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 3.0]];
        let y = array![[0.5, 0.5], [2.0, 2.0], [1.0, 1.5]];
        let r = sinkhorn_divergence(x.view(), y.view(), &SinkhornParams::default()).unwrap();
        assert!(r.converged);
        assert!(r.marginal_error < SinkhornParams::default().tol);
        assert!(r.value > -1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[0.0, 1.0]];
        let y3 = array![[0.0, 1.0, 2.0]];
        assert!(sinkhorn_divergence(x.view(), y3.view(), &SinkhornParams::default()).is_err());
        let empty: Array2<f64> = Array2::zeros((0, 2));
        assert!(
            sinkhorn_divergence(empty.view(), x.view(), &SinkhornParams::default()).is_err()
        );
        let bad = SinkhornParams {
            epsilon: 0.0,
            ..SinkhornParams::default()
        };
        assert!(sinkhorn_divergence(x.view(), x.view(), &bad).is_err());
    }

    #[test]
    fn flags_non_convergence_but_returns_value() {
        let x = array![[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let y = array![[5.0, 5.0], [1.0, 2.0], [8.0, 1.0]];
        let starved = SinkhornParams {
            epsilon: 1e-4,
            max_iters: 2,
            tol: 1e-12,
        };
        let r = sinkhorn_divergence(x.view(), y.view(), &starved).unwrap();
        assert!(!r.converged);
        assert!(r.marginal_error > 0.0);
        assert!(r.value.is_finite());
    }
}
