//! Dense convex quadratic programming by operator splitting.
//!
//! Solves
//! ```text
//!     minimize    1/2 x' H x + f' x
//!     subject to  A_ineq x <= b_ineq
//!                 A_eq   x  = b_eq
//! ```
//! with an ADMM iteration on the canonical form `l <= C x <= u`,
//! Ruiz diagonal equilibration, and an active-set polish step that
//! refines the splitting iterate to KKT accuracy. The solver is fully
//! deterministic: no randomization, fixed iteration order.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Termination and algorithm parameters.
#[derive(Debug, Clone)]
pub struct QpSettings {
    /// Primal/dual residual tolerance (unscaled, absolute and relative).
    pub tol: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Initial ADMM step size for inequality rows.
    pub rho: f64,
    /// Equality rows use `rho * rho_eq_scale`.
    pub rho_eq_scale: f64,
    /// Proximal regularization added to H.
    pub sigma: f64,
    /// Over-relaxation parameter.
    pub alpha: f64,
    /// Ruiz equilibration passes (0 disables scaling).
    pub scaling_iters: usize,
    /// Threshold for the primal infeasibility certificate.
    pub eps_infeasible: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-8,
            max_iters: 20_000,
            rho: 0.1,
            rho_eq_scale: 1e3,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 10,
            eps_infeasible: 1e-10,
        }
    }
}

/// Solver outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    /// Residuals below tolerance; KKT conditions certified.
    Solved,
    /// Iteration cap reached before the tolerance was met.
    MaxIterations,
    /// A primal infeasibility certificate was found.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers for the inequality rows (nonnegative at optimality).
    pub duals_ineq: DVector<f64>,
    /// Multipliers for the equality rows (sign-free).
    pub duals_eq: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// Unscaled infinity-norm primal residual at exit.
    pub primal_residual: f64,
    /// Unscaled infinity-norm dual residual at exit.
    pub dual_residual: f64,
    /// Residual of the infeasibility certificate when status is
    /// `Infeasible`; how close ||C' v|| is to zero for the returned ray.
    pub certificate_residual: f64,
}

/// Solve a dense convex QP. `H` must be symmetric positive semidefinite.
///
/// Pass empty (0-row) matrices for absent constraint blocks. Returns an
/// error for dimension mismatches or non-finite data; infeasibility is
/// reported through [`QpStatus::Infeasible`], not as an error.
pub fn solve_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a_ineq: &DMatrix<f64>,
    b_ineq: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    settings: &QpSettings,
) -> Result<QpSolution> {
    let n = f.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::input(format!(
            "H is {}x{}, expected {}x{}",
            h.nrows(),
            h.ncols(),
            n,
            n
        )));
    }
    if a_ineq.nrows() != b_ineq.len() || (a_ineq.nrows() > 0 && a_ineq.ncols() != n) {
        return Err(Error::input("inequality block dimension mismatch"));
    }
    if a_eq.nrows() != b_eq.len() || (a_eq.nrows() > 0 && a_eq.ncols() != n) {
        return Err(Error::input("equality block dimension mismatch"));
    }
    let finite = h.iter().all(|v| v.is_finite())
        && f.iter().all(|v| v.is_finite())
        && a_ineq.iter().all(|v| v.is_finite())
        && b_ineq.iter().all(|v| v.is_finite())
        && a_eq.iter().all(|v| v.is_finite())
        && b_eq.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::input("non-finite entry in QP data"));
    }

    let m_eq = a_eq.nrows();
    let m_in = a_ineq.nrows();
    let m = m_eq + m_in;

    // Canonical form l <= Cx <= u, equalities first.
    let mut c = DMatrix::zeros(m, n);
    let mut l = DVector::from_element(m, f64::NEG_INFINITY);
    let mut u = DVector::zeros(m);
    for i in 0..m_eq {
        for j in 0..n {
            c[(i, j)] = a_eq[(i, j)];
        }
        l[i] = b_eq[i];
        u[i] = b_eq[i];
    }
    for i in 0..m_in {
        for j in 0..n {
            c[(m_eq + i, j)] = a_ineq[(i, j)];
        }
        u[m_eq + i] = b_ineq[i];
    }

    let sol = admm_solve(h, f, &c, &l, &u, m_eq, settings)?;
    Ok(sol)
}

struct Scaling {
    d: DVector<f64>,
    e: DVector<f64>,
    cost: f64,
}

/// Modified Ruiz equilibration of the KKT block matrix.
fn ruiz_scale(
    p: &mut DMatrix<f64>,
    q: &mut DVector<f64>,
    c: &mut DMatrix<f64>,
    l: &mut DVector<f64>,
    u: &mut DVector<f64>,
    iters: usize,
) -> Scaling {
    let n = q.len();
    let m = c.nrows();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut cost = 1.0;

    for _ in 0..iters {
        // Column norms of [P; C] give the x-block scalers, row norms of C
        // give the constraint scalers.
        let mut sx = DVector::from_element(n, 1.0);
        for j in 0..n {
            let mut nrm: f64 = 0.0;
            for i in 0..n {
                nrm = nrm.max(p[(i, j)].abs());
            }
            for i in 0..m {
                nrm = nrm.max(c[(i, j)].abs());
            }
            if nrm > 0.0 {
                sx[j] = 1.0 / nrm.sqrt();
            }
        }
        let mut se = DVector::from_element(m, 1.0);
        for i in 0..m {
            let mut nrm: f64 = 0.0;
            for j in 0..n {
                nrm = nrm.max(c[(i, j)].abs());
            }
            if nrm > 0.0 {
                se[i] = 1.0 / nrm.sqrt();
            }
        }
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] *= sx[i] * sx[j];
            }
        }
        for i in 0..m {
            for j in 0..n {
                c[(i, j)] *= se[i] * sx[j];
            }
        }
        for j in 0..n {
            q[j] *= sx[j];
            d[j] *= sx[j];
        }
        for i in 0..m {
            if l[i].is_finite() {
                l[i] *= se[i];
            }
            if u[i].is_finite() {
                u[i] *= se[i];
            }
            e[i] *= se[i];
        }
        // Cost normalization.
        let mut col_mean = 0.0;
        for j in 0..n {
            let mut nrm: f64 = 0.0;
            for i in 0..n {
                nrm = nrm.max(p[(i, j)].abs());
            }
            col_mean += nrm;
        }
        col_mean /= n.max(1) as f64;
        let qn = q.amax();
        let gamma = 1.0 / col_mean.max(qn).max(1e-12);
        if gamma.is_finite() && gamma > 0.0 {
            *p *= gamma;
            *q *= gamma;
            cost *= gamma;
        }
    }
    Scaling { d, e, cost }
}

fn factorize(
    p: &DMatrix<f64>,
    c: &DMatrix<f64>,
    rho: &DVector<f64>,
    sigma: f64,
) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = p.ncols();
    let mut k = p.clone();
    for i in 0..n {
        k[(i, i)] += sigma;
    }
    // K = P + sigma I + C' diag(rho) C
    if c.nrows() > 0 {
        let mut scaled = c.clone();
        for i in 0..c.nrows() {
            for j in 0..n {
                scaled[(i, j)] *= rho[i];
            }
        }
        k += c.transpose() * scaled;
    }
    Cholesky::new(k).ok_or_else(|| Error::Numerical("ADMM KKT factorization failed".into()))
}

#[allow(clippy::too_many_arguments)]
fn admm_solve(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    c0: &DMatrix<f64>,
    l0: &DVector<f64>,
    u0: &DVector<f64>,
    m_eq: usize,
    settings: &QpSettings,
) -> Result<QpSolution> {
    let n = f.len();
    let m = c0.nrows();

    // Unconstrained problems reduce to one positive definite solve.
    if m == 0 {
        let chol = Cholesky::new(h.clone())
            .ok_or_else(|| Error::Numerical("unconstrained QP requires positive definite H".into()))?;
        let x = chol.solve(&(-f));
        let dual_res = (h * &x + f).amax();
        return Ok(QpSolution {
            x,
            duals_ineq: DVector::zeros(0),
            duals_eq: DVector::zeros(0),
            status: QpStatus::Solved,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: dual_res,
            certificate_residual: f64::NAN,
        });
    }

    let mut p = h.clone();
    let mut q = f.clone();
    let mut c = c0.clone();
    let mut l = l0.clone();
    let mut u = u0.clone();
    let scal = ruiz_scale(&mut p, &mut q, &mut c, &mut l, &mut u, settings.scaling_iters);

    let mut rho_vec = DVector::from_element(m, settings.rho);
    for i in 0..m_eq {
        rho_vec[i] = settings.rho * settings.rho_eq_scale;
    }
    let mut chol = factorize(&p, &c, &rho_vec, settings.sigma)?;

    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y: DVector<f64> = DVector::zeros(m);

    let mut status = QpStatus::MaxIterations;
    let mut iterations = settings.max_iters;
    let mut pri_res = f64::INFINITY;
    let mut dua_res = f64::INFINITY;
    let mut cert_res = f64::NAN;
    let check_every = 25;

    for iter in 1..=settings.max_iters {
        // x-update
        let mut rhs = settings.sigma * &x - &q;
        let mut w = DVector::zeros(m);
        for i in 0..m {
            w[i] = rho_vec[i] * z[i] - y[i];
        }
        rhs += c.transpose() * &w;
        let x_tilde = chol.solve(&rhs);
        let z_tilde = &c * &x_tilde;

        let x_next = settings.alpha * &x_tilde + (1.0 - settings.alpha) * &x;
        let mut z_next = DVector::zeros(m);
        let mut y_next = DVector::zeros(m);
        let mut dy = DVector::zeros(m);
        for i in 0..m {
            let zr: f64 = settings.alpha * z_tilde[i] + (1.0 - settings.alpha) * z[i];
            let cand = zr + y[i] / rho_vec[i];
            let proj = cand.clamp(l[i], u[i]);
            z_next[i] = proj;
            y_next[i] = y[i] + rho_vec[i] * (zr - proj);
            dy[i] = y_next[i] - y[i];
        }
        x = x_next;
        z = z_next;
        y = y_next;

        if iter % check_every == 0 || iter == settings.max_iters {
            // Unscaled residuals.
            let cx = &c * &x;
            let mut rp: f64 = 0.0;
            let mut cx_n: f64 = 0.0;
            let mut z_n: f64 = 0.0;
            for i in 0..m {
                let s = 1.0 / scal.e[i];
                rp = rp.max(((cx[i] - z[i]) * s).abs());
                cx_n = cx_n.max((cx[i] * s).abs());
                z_n = z_n.max((z[i] * s).abs());
            }
            let grad = &p * &x + &q + c.transpose() * &y;
            let px = &p * &x;
            let cty = c.transpose() * &y;
            let mut rd: f64 = 0.0;
            let mut px_n: f64 = 0.0;
            let mut q_n: f64 = 0.0;
            let mut cty_n: f64 = 0.0;
            for j in 0..n {
                let s = 1.0 / (scal.d[j] * scal.cost);
                rd = rd.max((grad[j] * s).abs());
                px_n = px_n.max((px[j] * s).abs());
                q_n = q_n.max((q[j] * s).abs());
                cty_n = cty_n.max((cty[j] * s).abs());
            }
            pri_res = rp;
            dua_res = rd;

            let eps_p = settings.tol + settings.tol * cx_n.max(z_n);
            let eps_d = settings.tol + settings.tol * px_n.max(q_n).max(cty_n);
            if rp <= eps_p && rd <= eps_d {
                status = QpStatus::Solved;
                iterations = iter;
                break;
            }

            // Primal infeasibility certificate from the dual increment.
            let mut v = DVector::zeros(m);
            for i in 0..m {
                v[i] = dy[i] * scal.e[i] / scal.cost;
            }
            let v_norm = v.amax();
            if v_norm > settings.tol {
                let ctv = c0.transpose() * &v;
                let mut support = 0.0;
                let mut valid = true;
                for i in 0..m {
                    if v[i] > 0.0 {
                        if u0[i].is_finite() {
                            support += u0[i] * v[i];
                        } else if v[i] > settings.eps_infeasible * v_norm {
                            valid = false;
                        }
                    } else if v[i] < 0.0 {
                        if l0[i].is_finite() {
                            support += l0[i] * v[i];
                        } else if -v[i] > settings.eps_infeasible * v_norm {
                            valid = false;
                        }
                    }
                }
                let ctv_norm = ctv.amax();
                if valid
                    && ctv_norm <= settings.eps_infeasible.max(1e-12) * v_norm.max(1.0)
                    && support < -settings.eps_infeasible * v_norm
                {
                    status = QpStatus::Infeasible;
                    iterations = iter;
                    cert_res = ctv_norm;
                    break;
                }
            }

            // Step-size adaptation keyed to the residual balance.
            if iter % 100 == 0 && rd > 0.0 {
                let rp_rel = rp / cx_n.max(z_n).max(1e-10);
                let rd_rel = rd / px_n.max(q_n).max(cty_n).max(1e-10);
                let ratio = (rp_rel / rd_rel.max(1e-16)).sqrt();
                if ratio > 5.0 || ratio < 0.2 {
                    let new_rho = (settings.rho * ratio).clamp(1e-6, 1e6);
                    if (new_rho / (rho_vec[m_eq.min(m - 1)] / 1.0) - 1.0).abs() > 1e-9 {
                        for i in 0..m {
                            rho_vec[i] = if i < m_eq {
                                new_rho * settings.rho_eq_scale
                            } else {
                                new_rho
                            };
                        }
                        chol = factorize(&p, &c, &rho_vec, settings.sigma)?;
                    }
                }
            }
        }
    }

    // Unscale.
    let mut x_out = DVector::zeros(n);
    for j in 0..n {
        x_out[j] = x[j] * scal.d[j];
    }
    let mut y_out = DVector::zeros(m);
    for i in 0..m {
        y_out[i] = y[i] * scal.e[i] / scal.cost;
    }

    if status != QpStatus::Infeasible {
        if let Some((xp, yp)) = polish(h, f, c0, l0, u0, m_eq, &x_out, &y_out) {
            let (rp0, rd0) = kkt_residuals(h, f, c0, l0, u0, &x_out, &y_out);
            let (rp1, rd1) = kkt_residuals(h, f, c0, l0, u0, &xp, &yp);
            if rp1.max(rd1) < rp0.max(rd0) {
                x_out = xp;
                y_out = yp;
                pri_res = rp1;
                dua_res = rd1;
                if rp1 <= settings.tol && rd1 <= settings.tol {
                    status = QpStatus::Solved;
                }
            }
        }
    }

    let duals_eq = DVector::from_fn(m_eq, |i, _| y_out[i]);
    let duals_ineq = DVector::from_fn(m - m_eq, |i, _| y_out[m_eq + i]);
    Ok(QpSolution {
        x: x_out,
        duals_ineq,
        duals_eq,
        status,
        iterations,
        primal_residual: pri_res,
        dual_residual: dua_res,
        certificate_residual: cert_res,
    })
}

/// Unscaled KKT residuals (primal violation, stationarity).
fn kkt_residuals(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    c: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> (f64, f64) {
    let cx = c * x;
    let mut rp: f64 = 0.0;
    for i in 0..c.nrows() {
        let over = if u[i].is_finite() { (cx[i] - u[i]).max(0.0) } else { 0.0 };
        let under = if l[i].is_finite() { (l[i] - cx[i]).max(0.0) } else { 0.0 };
        rp = rp.max(over).max(under);
    }
    let grad = h * x + f + c.transpose() * y;
    (rp, grad.amax())
}

/// Active-set refinement of the splitting iterate. Returns the refined
/// primal/dual pair, or `None` when the reduced KKT system is singular.
fn polish(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    c: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    m_eq: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = f.len();
    let m = c.nrows();
    let cx = c * x;
    let mut active: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        if i < m_eq {
            active.push((i, u[i]));
        } else if y[i] > 1e-9 || (u[i].is_finite() && cx[i] > u[i] - 1e-7) {
            active.push((i, u[i]));
        } else if y[i] < -1e-9 || (l[i].is_finite() && cx[i] < l[i] + 1e-7) {
            active.push((i, l[i]));
        }
    }
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = h[(i, j)];
        }
        // Tikhonov terms keep the saddle system factorizable when the
        // active rows are dependent.
        kkt[(i, i)] += 1e-12;
    }
    for (a, &(row, _)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + a, j)] = c[(row, j)];
            kkt[(j, n + a)] = c[(row, j)];
        }
        kkt[(n + a, n + a)] = -1e-12;
    }
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -f[j];
    }
    for (a, &(_, bnd)) in active.iter().enumerate() {
        rhs[n + a] = bnd;
    }
    let lu = kkt.clone().lu();
    let mut sol = lu.solve(&rhs)?;
    // One step of iterative refinement against the unregularized system.
    let mut kkt0 = kkt.clone();
    for i in 0..n {
        kkt0[(i, i)] -= 1e-12;
    }
    for a in 0..k {
        kkt0[(n + a, n + a)] += 1e-12;
    }
    for _ in 0..2 {
        let resid = &rhs - &kkt0 * &sol;
        let corr = lu.solve(&resid)?;
        sol += corr;
    }
    let xp = DVector::from_fn(n, |j, _| sol[j]);
    let mut yp = DVector::zeros(m);
    for (a, &(row, bnd)) in active.iter().enumerate() {
        let mut mult = sol[n + a];
        // Keep inequality multipliers on the correct side.
        if row >= m_eq {
            let upper = (bnd - u[row]).abs() < (bnd - l[row]).abs() || !l[row].is_finite();
            if upper {
                mult = mult.max(0.0);
            } else {
                mult = mult.min(0.0);
            }
        }
        yp[row] = mult;
    }
    Some((xp, yp))
}
