//! Coherent point drift: the EM loop and the radial-basis displacement
//! field it estimates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::{voxel_downsample, PointCloud};

/// Registration parameters.
///
/// `beta` sets the width of the Gaussian smoothing kernel (larger means
/// more rigid deformation), `lambda` trades point-fit against smoothness,
/// `mu` is the expected outlier fraction.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CpdParams {
    pub beta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub sigma2_floor: f64,
    /// Voxel step applied to both clouds before registration; `None`
    /// registers the raw clouds.
    pub voxel_step: Option<f64>,
}

impl Default for CpdParams {
    fn default() -> Self {
        CpdParams {
            beta: 2.0,
            lambda: 3.0,
            mu: 0.1,
            max_iters: 150,
            tol: 1e-8,
            sigma2_floor: 1e-10,
            voxel_step: Some(0.005),
        }
    }
}

impl CpdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::input("beta must be > 0"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::input("lambda must be > 0"));
        }
        if !(self.mu >= 0.0 && self.mu < 1.0) {
            return Err(Error::input("mu must lie in [0, 1)"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::input("tol must be > 0"));
        }
        if !(self.sigma2_floor > 0.0) {
            return Err(Error::input("sigma2_floor must be > 0"));
        }
        if let Some(s) = self.voxel_step {
            if !(s > 0.0) {
                return Err(Error::input("voxel_step must be > 0"));
            }
        }
        Ok(())
    }
}

/// A fitted displacement field `T(z) = z + sum_n W_n g(z - s_n)` with
/// Gaussian kernel `g`.
#[derive(Debug, Clone)]
pub struct NonRigidTransform {
    /// The N kernel centroids (the registered source cloud).
    pub source: PointCloud,
    pub beta: f64,
    /// Kernel weights, N x D.
    pub w: DMatrix<f64>,
    /// Gramian of the source points under the Gaussian kernel.
    pub gram: DMatrix<f64>,
    /// Final mixture variance.
    pub sigma2: f64,
    /// Regularized negative log-likelihood after each EM iteration.
    pub objective_trace: Vec<f64>,
    /// False when the iteration cap was reached before the tolerance.
    pub converged: bool,
}

impl NonRigidTransform {
    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// The identity field anchored at `source` (zero kernel weights).
    pub fn identity(source: PointCloud, beta: f64) -> Self {
        let n = source.len();
        let d = source.dim();
        let gram = gaussian_gram(&source, beta);
        NonRigidTransform {
            source,
            beta,
            w: DMatrix::zeros(n, d),
            gram,
            sigma2: 0.0,
            objective_trace: Vec::new(),
            converged: true,
        }
    }
}

/// Gaussian kernel matrix between the rows of `a` (K x D) and `b` (N x D):
/// entry (i, j) = exp(-||a_i - b_j||^2 / (2 beta^2)).
fn kernel_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let inv = 1.0 / (2.0 * beta * beta);
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let mut s = 0.0;
        for c in 0..a.ncols() {
            let diff = a[(i, c)] - b[(j, c)];
            s += diff * diff;
        }
        (-s * inv).exp()
    })
}

/// Gramian of a cloud under the Gaussian kernel: symmetric, unit
/// diagonal, positive semidefinite.
pub fn gaussian_gram(cloud: &PointCloud, beta: f64) -> DMatrix<f64> {
    kernel_matrix(cloud.points(), cloud.points(), beta)
}

/// Soft-correspondence posteriors: entry (n, m) is the probability that
/// target point m was generated by (warped) source centroid n, with a
/// uniform outlier component weighted by `mu`.
pub fn cpd_e_step(
    source_warped: &DMatrix<f64>,
    target: &PointCloud,
    sigma2: f64,
    mu: f64,
) -> DMatrix<f64> {
    let n = source_warped.nrows();
    let m = target.len();
    let d = target.dim() as f64;
    let x = target.points();
    let inv = 1.0 / (2.0 * sigma2);
    let mut p = DMatrix::zeros(n, m);
    let outlier = if mu > 0.0 {
        (2.0 * std::f64::consts::PI * sigma2).powf(d / 2.0) * mu / (1.0 - mu) * n as f64
            / m as f64
    } else {
        0.0
    };
    let mut exps = vec![0.0; n];
    for col in 0..m {
        let mut amax = f64::NEG_INFINITY;
        for row in 0..n {
            let mut s = 0.0;
            for c in 0..x.ncols() {
                let diff = x[(col, c)] - source_warped[(row, c)];
                s += diff * diff;
            }
            let a = -s * inv;
            exps[row] = a;
            amax = amax.max(a);
        }
        let mut denom = 0.0;
        for row in 0..n {
            exps[row] = (exps[row] - amax).exp();
            denom += exps[row];
        }
        if outlier > 0.0 {
            // The uniform component, rescaled by the shared exp(-amax).
            let log_out = outlier.ln() - amax;
            if log_out > 700.0 {
                // Outlier mass dominates beyond representable range.
                continue;
            }
            denom += log_out.exp();
        }
        for row in 0..n {
            p[(row, col)] = exps[row] / denom;
        }
    }
    p
}

/// Closed-form M-step: solves
/// `(diag(P 1) G + lambda sigma2_prev I) W = P X - diag(P 1) Y`
/// for the kernel weights and refreshes the mixture variance (clamped at
/// `sigma2_floor`).
pub fn cpd_m_step(
    p: &DMatrix<f64>,
    source: &PointCloud,
    target: &PointCloud,
    gram: &DMatrix<f64>,
    lambda: f64,
    sigma2_prev: f64,
    sigma2_floor: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let n = source.len();
    let m = target.len();
    let d = source.dim();
    let y = source.points();
    let x = target.points();

    let row_sums = DVector::from_fn(n, |i, _| p.row(i).sum());
    let col_sums = DVector::from_fn(m, |j, _| p.column(j).sum());
    let np: f64 = row_sums.sum();

    // System matrix diag(P1) G + lambda sigma2 I.
    let mut a = gram.clone();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= row_sums[i];
        }
    }
    for i in 0..n {
        a[(i, i)] += lambda * sigma2_prev;
    }
    let mut rhs = p * x;
    for i in 0..n {
        for c in 0..d {
            rhs[(i, c)] -= row_sums[i] * y[(i, c)];
        }
    }
    let lu = a.lu();
    let mut w = DMatrix::zeros(n, d);
    for c in 0..d {
        let col = rhs.column(c).into_owned();
        let sol = lu.solve(&col).ok_or_else(|| {
            Error::Numerical("singular linear system in registration M-step".into())
        })?;
        w.set_column(c, &sol);
    }

    // Variance update with the warped source T = Y + G W.
    let t = y + gram * &w;
    let mut term1 = 0.0;
    for j in 0..m {
        let mut s = 0.0;
        for c in 0..d {
            s += x[(j, c)] * x[(j, c)];
        }
        term1 += col_sums[j] * s;
    }
    let px = p * x;
    let mut term2 = 0.0;
    for i in 0..n {
        for c in 0..d {
            term2 += px[(i, c)] * t[(i, c)];
        }
    }
    let mut term3 = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for c in 0..d {
            s += t[(i, c)] * t[(i, c)];
        }
        term3 += row_sums[i] * s;
    }
    let mut sigma2 = (term1 - 2.0 * term2 + term3) / (np * d as f64);
    if !sigma2.is_finite() || sigma2 < sigma2_floor {
        sigma2 = sigma2_floor;
    }
    Ok((w, sigma2))
}

/// Regularized negative log-likelihood of the Gaussian mixture with the
/// uniform outlier component; this is the quantity traced across EM
/// iterations.
fn objective(
    warped: &DMatrix<f64>,
    target: &PointCloud,
    w: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    sigma2: f64,
    lambda: f64,
    mu: f64,
) -> f64 {
    let n = warped.nrows() as f64;
    let m = target.len();
    let d = target.dim() as f64;
    let x = target.points();
    let inv = 1.0 / (2.0 * sigma2);
    let log_norm = ((1.0 - mu) / n).ln() - 0.5 * d * (2.0 * std::f64::consts::PI * sigma2).ln();
    let log_uniform = if mu > 0.0 {
        (mu / m as f64).ln()
    } else {
        f64::NEG_INFINITY
    };
    let mut nll = 0.0;
    for col in 0..m {
        let mut amax = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(warped.nrows());
        for row in 0..warped.nrows() {
            let mut s = 0.0;
            for c in 0..x.ncols() {
                let diff = x[(col, c)] - warped[(row, c)];
                s += diff * diff;
            }
            let a = -s * inv;
            terms.push(a);
            amax = amax.max(a);
        }
        let sum: f64 = terms.iter().map(|a| (a - amax).exp()).sum();
        let log_mix = log_norm + amax + sum.ln();
        let log_density = if mu > 0.0 {
            let hi = log_mix.max(log_uniform);
            let lo = log_mix.min(log_uniform);
            hi + (lo - hi).exp().ln_1p()
        } else {
            log_mix
        };
        nll -= log_density;
    }
    let reg = (w.transpose() * gram * w).trace();
    nll + 0.5 * lambda * reg
}

/// Register `source` onto `target`, alternating the E- and M-steps until
/// the objective change drops below `params.tol` or the iteration cap is
/// reached (in which case the transform is returned with
/// `converged = false`).
pub fn cpd_register(
    source: &PointCloud,
    target: &PointCloud,
    params: &CpdParams,
) -> Result<NonRigidTransform> {
    params.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::input(format!(
            "source dimension {} does not match target dimension {}",
            source.dim(),
            target.dim()
        )));
    }
    let (src, tgt) = match params.voxel_step {
        Some(step) => (
            voxel_downsample(source, step)?,
            voxel_downsample(target, step)?,
        ),
        None => (source.clone(), target.clone()),
    };
    let n = src.len();
    let m = tgt.len();
    let d = src.dim();
    let y = src.points().clone();
    let x = tgt.points();

    let gram = gaussian_gram(&src, params.beta);
    // Scale-adaptive initialization: mean squared inter-cloud distance.
    let mut sigma2 = 0.0;
    for i in 0..n {
        for j in 0..m {
            for c in 0..d {
                let diff = y[(i, c)] - x[(j, c)];
                sigma2 += diff * diff;
            }
        }
    }
    sigma2 /= (n * m * d) as f64;
    sigma2 = sigma2.max(params.sigma2_floor);

    let mut w = DMatrix::zeros(n, d);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut prev_obj = f64::INFINITY;
    for _ in 0..params.max_iters {
        let warped = &y + &gram * &w;
        let p = cpd_e_step(&warped, &tgt, sigma2, params.mu);
        let (w_new, sigma2_new) = cpd_m_step(
            &p,
            &src,
            &tgt,
            &gram,
            params.lambda,
            sigma2,
            params.sigma2_floor,
        )?;
        w = w_new;
        sigma2 = sigma2_new;
        let warped = &y + &gram * &w;
        let obj = objective(&warped, &tgt, &w, &gram, sigma2, params.lambda, params.mu);
        trace.push(obj);
        if (prev_obj - obj).abs() < params.tol {
            converged = true;
            break;
        }
        prev_obj = obj;
    }

    Ok(NonRigidTransform {
        source: src,
        beta: params.beta,
        w,
        gram,
        sigma2,
        objective_trace: trace,
        converged,
    })
}

/// Apply the displacement field to arbitrary points (rows of `pts`).
/// Applying to `tf.source` reproduces `source + G W` exactly.
pub fn apply_transform(tf: &NonRigidTransform, pts: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if pts.ncols() != tf.dim() {
        return Err(Error::input("point dimension does not match transform"));
    }
    let k = kernel_matrix(pts, tf.source.points(), tf.beta);
    Ok(pts + k * &tf.w)
}

/// Jacobian of the displacement field at `z`:
/// `I - (1/beta^2) sum_n g(z - s_n) W_n (z - s_n)^T`.
pub fn transform_gradient(tf: &NonRigidTransform, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = tf.dim();
    if z.len() != d {
        return Err(Error::input("point dimension does not match transform"));
    }
    let s = tf.source.points();
    let inv_b2 = 1.0 / (tf.beta * tf.beta);
    let mut jac = DMatrix::identity(d, d);
    for nrow in 0..s.nrows() {
        let mut dist2 = 0.0;
        for c in 0..d {
            let diff = z[c] - s[(nrow, c)];
            dist2 += diff * diff;
        }
        let g = (-dist2 * 0.5 * inv_b2).exp();
        for i in 0..d {
            for j in 0..d {
                jac[(i, j)] -= inv_b2 * g * tf.w[(nrow, i)] * (z[j] - s[(nrow, j)]);
            }
        }
    }
    Ok(jac)
}
