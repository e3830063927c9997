//! Principal-component projection by power iteration with deflation.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

const MAX_POWER_ITERS: usize = 10_000;
const EIGENVALUE_TOL: f64 = 1e-13;
/// Components with eigenvalue below this fraction of the leading one (or
/// below absolute 1e-12) count as rank-exhausted.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// Unit-norm principal directions, possibly fewer than requested when
    /// the covariance is rank-deficient.
    pub components: Vec<Array1<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Mean-centered data projected onto the components, one row per
    /// input point.
    pub coords: Array2<f64>,
    pub mean: Array1<f64>,
    /// Trace of the sample covariance: total variance of the input.
    pub total_variance: f64,
}

/// Project points onto the top-k principal directions. Components come
/// out of iterated power steps with Gram-Schmidt deflation; the sign is
/// fixed so the largest-magnitude loading is positive. A rank-deficient
/// covariance yields however many components exist.
pub fn pca_project(points: ArrayView2<f64>, k: usize) -> Result<PcaResult> {
    let n = points.nrows();
    let d = points.ncols();
    if k == 0 || d == 0 {
        return Err(Error::InvalidConfig("k and dimension must be positive".into()));
    }
    if n < k + 1 {
        return Err(Error::TooFewPoints { have: n, need: k + 1 });
    }
    let mean = points.mean_axis(ndarray::Axis(0)).expect("n > 0");
    let centered = &points - &mean.view().insert_axis(ndarray::Axis(0));
    let scale = (n - 1) as f64;
    let total_variance = centered.iter().map(|x| x * x).sum::<f64>() / scale;

    // Implicit covariance product: C v = X^T (X v) / (n - 1).
    let cov_mul = |v: &Array1<f64>| -> Array1<f64> {
        let xv = centered.dot(v);
        centered.t().dot(&xv) / scale
    };

    let mut components: Vec<Array1<f64>> = Vec::new();
    let mut eigenvalues: Vec<f64> = Vec::new();
    // Below this, a deflated product is rounding noise of the leading
    // directions, not signal: the residual spectrum is exhausted.
    let variance_floor = total_variance.max(1e-300) * 1e-12;
    'comps: for _ in 0..k.min(d) {
        // Deterministic start: a ramp, orthogonalized against what we
        // already found.
        let mut v = Array1::from_shape_fn(d, |i| 1.0 + 1e-3 * (i + 1) as f64);
        deflate(&mut v, &components);
        let norm = v.dot(&v).sqrt();
        if norm < 1e-300 {
            break;
        }
        v /= norm;

        let mut eigenvalue = 0.0;
        for _ in 0..MAX_POWER_ITERS {
            let mut w = cov_mul(&v);
            deflate(&mut w, &components);
            let norm = w.dot(&w).sqrt();
            if norm <= variance_floor {
                break 'comps;
            }
            w /= norm;
            let mut cw = cov_mul(&w);
            deflate(&mut cw, &components);
            let next = w.dot(&cw);
            v = w;
            if (next - eigenvalue).abs() <= EIGENVALUE_TOL * next.abs().max(1.0) {
                eigenvalue = next;
                break;
            }
            eigenvalue = next;
        }

        let leading = eigenvalues.first().copied().unwrap_or(eigenvalue);
        if eigenvalue <= RANK_TOL * leading.max(1e-12) || eigenvalue <= 1e-12 {
            break;
        }
        fix_sign(&mut v);
        components.push(v);
        eigenvalues.push(eigenvalue);
    }

    let mut coords = Array2::zeros((n, components.len()));
    for (j, component) in components.iter().enumerate() {
        let proj = centered.dot(component);
        coords.column_mut(j).assign(&proj);
    }
    Ok(PcaResult {
        components,
        eigenvalues,
        coords,
        mean,
        total_variance,
    })
}

/// Remove the span of `basis` from `v`. Two Gram-Schmidt passes keep the
/// residual orthogonal even when it is many orders of magnitude smaller
/// than the removed part.
fn deflate(v: &mut Array1<f64>, basis: &[Array1<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let proj = v.dot(b);
            *v -= &(b * proj);
        }
    }
}

/// Largest-magnitude loading positive; earliest index breaks magnitude
/// ties so the convention stays deterministic.
fn fix_sign(v: &mut Array1<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        *v *= -1.0;
    }
}

#[cfg(test)]
pub mod oracle {
    //! Dense symmetric eigensolver by cyclic Jacobi rotations, independent
    //! of the power-iteration path.

    use ndarray::Array2;

    pub fn jacobi_eigenvalues(matrix: &Array2<f64>) -> Vec<f64> {
        let n = matrix.nrows();
        let mut a = matrix.clone();
        for _ in 0..200 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[[i, j]] * a[[i, j]];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[[p, q]].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[[k, p]];
                        let akq = a[[k, q]];
                        a[[k, p]] = c * akp - s * akq;
                        a[[k, q]] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[[p, k]];
                        let aqk = a[[q, k]];
                        a[[p, k]] = c * apk - s * aqk;
                        a[[q, k]] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eigs: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
        eigs.sort_by(|x, y| y.total_cmp(x));
        eigs
    }
}
