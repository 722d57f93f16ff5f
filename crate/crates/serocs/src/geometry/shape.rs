//! Convex collision shapes and exact signed distance queries.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qp::{solve_qp, QpSettings, QpStatus};

const UNIT_TOL: f64 = 1e-9;

/// A convex obstacle piece: sphere (circle), capsule, or bounded
/// halfspace-intersection polytope. Dimension is 2 or 3.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexShape {
    Sphere {
        center: DVector<f64>,
        radius: f64,
    },
    Capsule {
        start: DVector<f64>,
        end: DVector<f64>,
        radius: f64,
    },
    /// Intersection of halfspaces `normals[i] . x <= offsets[i]` with
    /// unit-length normals. Must be nonempty and bounded.
    Polytope {
        normals: DMatrix<f64>,
        offsets: DVector<f64>,
    },
}

/// Metadata attached to a gradient query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradientInfo {
    /// True when the query point sat on a nondifferentiable locus and
    /// the documented tie-break (first canonical basis direction) was
    /// applied.
    pub degenerate: bool,
}

impl ConvexShape {
    pub fn sphere(center: DVector<f64>, radius: f64) -> Result<Self> {
        check_dim(center.len())?;
        check_finite(center.iter().copied())?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::input("sphere radius must be >= 0"));
        }
        Ok(ConvexShape::Sphere { center, radius })
    }

    pub fn capsule(start: DVector<f64>, end: DVector<f64>, radius: f64) -> Result<Self> {
        check_dim(start.len())?;
        if start.len() != end.len() {
            return Err(Error::input("capsule endpoints differ in dimension"));
        }
        check_finite(start.iter().chain(end.iter()).copied())?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::input("capsule radius must be >= 0"));
        }
        Ok(ConvexShape::Capsule { start, end, radius })
    }

    /// Build a polytope from `(normal, offset)` halfspaces. Normals must
    /// be unit-length within 1e-9; the intersection must be nonempty and
    /// bounded.
    pub fn polytope(halfspaces: &[(DVector<f64>, f64)]) -> Result<Self> {
        if halfspaces.is_empty() {
            return Err(Error::input("polytope needs at least one halfspace"));
        }
        let dim = halfspaces[0].0.len();
        check_dim(dim)?;
        for (n, o) in halfspaces {
            if n.len() != dim {
                return Err(Error::input("inconsistent halfspace dimensions"));
            }
            check_finite(n.iter().copied().chain(std::iter::once(*o)))?;
            if (n.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::input(format!(
                    "halfspace normal has norm {}, expected 1",
                    n.norm()
                )));
            }
        }
        let m = halfspaces.len();
        let normals = DMatrix::from_fn(m, dim, |i, j| halfspaces[i].0[j]);
        let offsets = DVector::from_fn(m, |i, _| halfspaces[i].1);
        let shape = ConvexShape::Polytope { normals, offsets };
        shape.validate_polytope()?;
        Ok(shape)
    }

    /// Axis-aligned box helper, mostly for tests and scenario files.
    pub fn aabb(min: &DVector<f64>, max: &DVector<f64>) -> Result<Self> {
        let d = min.len();
        let mut hs = Vec::with_capacity(2 * d);
        for j in 0..d {
            if !(max[j] > min[j]) {
                return Err(Error::input("box must have positive extent"));
            }
            let mut n = DVector::zeros(d);
            n[j] = 1.0;
            hs.push((n.clone(), max[j]));
            n[j] = -1.0;
            hs.push((n, -min[j]));
        }
        ConvexShape::polytope(&hs)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexShape::Sphere { center, .. } => center.len(),
            ConvexShape::Capsule { start, .. } => start.len(),
            ConvexShape::Polytope { normals, .. } => normals.ncols(),
        }
    }

    fn validate_polytope(&self) -> Result<()> {
        let ConvexShape::Polytope { normals, offsets } = self else {
            unreachable!()
        };
        let dim = normals.ncols();
        // Nonempty: minimum-norm feasible point.
        let h = 2.0 * DMatrix::identity(dim, dim);
        let f = DVector::zeros(dim);
        let settings = QpSettings {
            tol: 1e-8,
            max_iters: 5_000,
            ..QpSettings::default()
        };
        let empty_a = DMatrix::zeros(0, dim);
        let empty_b = DVector::zeros(0);
        let sol = solve_qp(&h, &f, normals, offsets, &empty_a, &empty_b, &settings)?;
        if sol.status == QpStatus::Infeasible {
            return Err(Error::input("polytope is empty"));
        }
        // Bounded: the recession cone { d : N d <= 0 } must be trivial.
        if dim == 2 {
            // Exact in the plane: normals positively span R^2 iff the
            // largest angular gap between consecutive normals is < pi.
            let mut angles: Vec<f64> = (0..normals.nrows())
                .map(|i| normals[(i, 1)].atan2(normals[(i, 0)]))
                .collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut max_gap: f64 = 0.0;
            for k in 0..angles.len() {
                let next = if k + 1 == angles.len() {
                    angles[0] + std::f64::consts::TAU
                } else {
                    angles[k + 1]
                };
                max_gap = max_gap.max(next - angles[k]);
            }
            if max_gap >= std::f64::consts::PI - 1e-12 {
                return Err(Error::input("polytope is unbounded"));
            }
        } else {
            // Probe the cone along +/- each axis with a regularized LP.
            let zeros = DVector::zeros(normals.nrows());
            let mut rows = DMatrix::zeros(normals.nrows() + 2 * dim, dim);
            let mut rhs = DVector::zeros(normals.nrows() + 2 * dim);
            rows.view_mut((0, 0), (normals.nrows(), dim)).copy_from(normals);
            rhs.rows_mut(0, normals.nrows()).copy_from(&zeros);
            for j in 0..dim {
                rows[(normals.nrows() + 2 * j, j)] = 1.0;
                rhs[normals.nrows() + 2 * j] = 1.0;
                rows[(normals.nrows() + 2 * j + 1, j)] = -1.0;
                rhs[normals.nrows() + 2 * j + 1] = 1.0;
            }
            let hh = 2e-6 * DMatrix::identity(dim, dim);
            for j in 0..dim {
                for sign in [1.0, -1.0] {
                    let mut ff = DVector::zeros(dim);
                    ff[j] = -sign;
                    let sol =
                        solve_qp(&hh, &ff, &rows, &rhs, &empty_a, &empty_b, &settings)?;
                    let val = 1e-6 * sol.x.norm_squared() - sign * sol.x[j];
                    if val < -1e-3 {
                        return Err(Error::input("polytope is unbounded"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::input(format!("dimension {} not supported (2 or 3)", d)))
    }
}

fn check_finite(values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::input("non-finite coordinate"));
        }
    }
    Ok(())
}

/// Closest point on the segment [a, b] to p, with its parameter t.
pub(crate) fn closest_on_segment(
    p: &DVector<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> (DVector<f64>, f64) {
    let ab = b - a;
    let den = ab.norm_squared();
    if den == 0.0 {
        return (a.clone(), 0.0);
    }
    let t = ((p - a).dot(&ab) / den).clamp(0.0, 1.0);
    (a + t * ab, t)
}

/// Projection of `p` onto the polytope (exact up to solver tolerance,
/// refined by the active-set polish inside the QP).
fn project_to_polytope(
    p: &DVector<f64>,
    normals: &DMatrix<f64>,
    offsets: &DVector<f64>,
) -> Result<DVector<f64>> {
    let dim = p.len();
    let h = 2.0 * DMatrix::identity(dim, dim);
    let f = -2.0 * p;
    let settings = QpSettings {
        tol: 1e-10,
        max_iters: 10_000,
        ..QpSettings::default()
    };
    let empty_a = DMatrix::zeros(0, dim);
    let empty_b = DVector::zeros(0);
    let sol = solve_qp(&h, &f, normals, offsets, &empty_a, &empty_b, &settings)?;
    if sol.status == QpStatus::Infeasible {
        return Err(Error::Numerical("projection onto empty polytope".into()));
    }
    Ok(sol.x)
}

/// Signed distance from `p` to the boundary of `shape`: positive
/// outside, negative inside. Exact for spheres and capsules; exact up
/// to the projection tolerance for polytopes.
pub fn signed_distance(p: &DVector<f64>, shape: &ConvexShape) -> Result<f64> {
    check_finite(p.iter().copied())?;
    if p.len() != shape.dim() {
        return Err(Error::input(format!(
            "point dimension {} does not match shape dimension {}",
            p.len(),
            shape.dim()
        )));
    }
    match shape {
        ConvexShape::Sphere { center, radius } => Ok((p - center).norm() - radius),
        ConvexShape::Capsule { start, end, radius } => {
            let (s, _) = closest_on_segment(p, start, end);
            Ok((p - s).norm() - radius)
        }
        ConvexShape::Polytope { normals, offsets } => {
            let gaps = offsets - normals * p;
            let min_gap = gaps.min();
            if min_gap >= 0.0 {
                // Interior (or boundary): nearest face is the one with the
                // smallest slack; normals are unit length.
                Ok(-min_gap)
            } else {
                let proj = project_to_polytope(p, normals, offsets)?;
                Ok((p - proj).norm())
            }
        }
    }
}

/// Gradient of the signed distance at `p` (unit norm where defined).
/// On nondifferentiable loci the first canonical basis direction is
/// returned and flagged.
pub fn signed_distance_gradient(
    p: &DVector<f64>,
    shape: &ConvexShape,
) -> Result<(DVector<f64>, GradientInfo)> {
    check_finite(p.iter().copied())?;
    if p.len() != shape.dim() {
        return Err(Error::input("point/shape dimension mismatch"));
    }
    let dim = p.len();
    let tie_break = || {
        let mut e = DVector::zeros(dim);
        e[0] = 1.0;
        (e, GradientInfo { degenerate: true })
    };
    match shape {
        ConvexShape::Sphere { center, .. } => {
            let d = p - center;
            let n = d.norm();
            if n < 1e-14 {
                Ok(tie_break())
            } else {
                Ok((d / n, GradientInfo { degenerate: false }))
            }
        }
        ConvexShape::Capsule { start, end, .. } => {
            let (s, _) = closest_on_segment(p, start, end);
            let d = p - s;
            let n = d.norm();
            if n < 1e-14 {
                Ok(tie_break())
            } else {
                Ok((d / n, GradientInfo { degenerate: false }))
            }
        }
        ConvexShape::Polytope { normals, offsets } => {
            let gaps = offsets - normals * p;
            let min_gap = gaps.min();
            if min_gap >= 0.0 {
                // Inside: gradient is the nearest face normal. Flag ties.
                let mut best = 0;
                let mut ties = 0;
                for i in 0..gaps.len() {
                    if gaps[i] < gaps[best] {
                        best = i;
                    }
                }
                for i in 0..gaps.len() {
                    if (gaps[i] - gaps[best]).abs() < 1e-12 {
                        ties += 1;
                    }
                }
                if ties > 1 {
                    Ok(tie_break())
                } else {
                    Ok((
                        normals.row(best).transpose(),
                        GradientInfo { degenerate: false },
                    ))
                }
            } else {
                let proj = project_to_polytope(p, normals, offsets)?;
                let d = p - proj;
                let n = d.norm();
                if n < 1e-12 {
                    Ok(tie_break())
                } else {
                    Ok((d / n, GradientInfo { degenerate: false }))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn unit_square() -> ConvexShape {
        ConvexShape::aabb(&v2(-0.5, -0.5), &v2(0.5, 0.5)).unwrap()
    }

    #[test]
    fn sphere_radial_cases() {
        let s = ConvexShape::sphere(v2(0.0, 0.0), 1.0).unwrap();
        assert_abs_diff_eq!(signed_distance(&v2(2.0, 0.0), &s).unwrap(), 1.0);
        assert_abs_diff_eq!(signed_distance(&v2(0.0, 0.0), &s).unwrap(), -1.0);
    }

    #[test]
    fn square_matches_boundary_sampling() {
        // Brute-force oracle: min distance over 1e5 points sampled on the
        // boundary of the square, signed by interior membership.
        let sq = unit_square();
        let oracle = |p: &DVector<f64>| {
            let per_edge = 25_000;
            let mut best = f64::INFINITY;
            for k in 0..per_edge {
                let t = -0.5 + (k as f64) / (per_edge as f64 - 1.0);
                for q in [
                    v2(t, -0.5),
                    v2(t, 0.5),
                    v2(-0.5, t),
                    v2(0.5, t),
                ] {
                    best = best.min((p - q).norm());
                }
            }
            let inside = p[0].abs() <= 0.5 && p[1].abs() <= 0.5;
            if inside {
                -best
            } else {
                best
            }
        };
        for p in [v2(3.0, 4.0), v2(0.2, 0.1), v2(-1.0, 0.0), v2(0.6, 0.6)] {
            let d = signed_distance(&p, &sq).unwrap();
            assert_abs_diff_eq!(d, oracle(&p), epsilon = 1e-6);
        }
    }

    #[test]
    fn gradient_radial_and_tiebreak() {
        let s = ConvexShape::sphere(v2(0.0, 0.0), 1.0).unwrap();
        let (g, info) = signed_distance_gradient(&v2(2.0, 0.0), &s).unwrap();
        assert!(!info.degenerate);
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-12);

        let (g, info) = signed_distance_gradient(&v2(0.0, 0.0), &s).unwrap();
        assert!(info.degenerate);
        assert_abs_diff_eq!(g[0], 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let shapes = vec![
            ConvexShape::sphere(v2(0.3, -0.2), 0.7).unwrap(),
            ConvexShape::capsule(v2(-0.5, 0.0), v2(0.5, 0.2), 0.3).unwrap(),
            unit_square(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 100 {
            let p = v2(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let shape = &shapes[checked % shapes.len()];
            let d = signed_distance(&p, shape).unwrap();
            if d < 0.05 {
                continue; // stay safely on the exterior, away from kinks
            }
            let (g, info) = signed_distance_gradient(&p, shape).unwrap();
            assert!(!info.degenerate);
            for j in 0..2 {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[j] += h;
                pm[j] -= h;
                let fd = (signed_distance(&pp, shape).unwrap()
                    - signed_distance(&pm, shape).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(g[j], fd, epsilon = 1e-4);
            }
            checked += 1;
        }
    }

    #[test]
    fn lipschitz_and_convexity_sampled() {
        let shapes = vec![
            ConvexShape::sphere(v2(0.0, 0.0), 1.0).unwrap(),
            ConvexShape::capsule(v2(-1.0, 0.0), v2(1.0, 0.0), 0.4).unwrap(),
            unit_square(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for shape in &shapes {
            for _ in 0..200 {
                let a = v2(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let b = v2(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let da = signed_distance(&a, shape).unwrap();
                let db = signed_distance(&b, shape).unwrap();
                // 1-Lipschitz
                assert!((da - db).abs() <= (&a - &b).norm() + 1e-9);
                // Convexity (midpoint inequality)
                let mid = 0.5 * (&a + &b);
                let dm = signed_distance(&mid, shape).unwrap();
                assert!(dm <= 0.5 * (da + db) + 1e-7);
            }
        }
    }

    #[test]
    fn polytope_validation() {
        // Unbounded: a single halfspace.
        let hs = vec![(v2(1.0, 0.0), 1.0)];
        assert!(ConvexShape::polytope(&hs).is_err());
        // Empty: x <= -1 and -x <= -2 (x >= 2).
        let hs = vec![(v2(1.0, 0.0), -1.0), (v2(-1.0, 0.0), -2.0), (v2(0.0, 1.0), 1.0), (v2(0.0, -1.0), 1.0)];
        assert!(ConvexShape::polytope(&hs).is_err());
        // Non-unit normal.
        let hs = vec![(v2(2.0, 0.0), 1.0)];
        assert!(ConvexShape::polytope(&hs).is_err());
        // A valid triangle.
        let s = 1.0 / 2.0_f64.sqrt();
        let hs = vec![
            (v2(-1.0, 0.0), 0.0),
            (v2(0.0, -1.0), 0.0),
            (v2(s, s), 1.0),
        ];
        assert!(ConvexShape::polytope(&hs).is_ok());
    }

    #[test]
    fn interior_corner_tiebreak_flagged() {
        let sq = unit_square();
        // Center of the square is equidistant from all four faces.
        let (g, info) = signed_distance_gradient(&v2(0.0, 0.0), &sq).unwrap();
        assert!(info.degenerate);
        assert_abs_diff_eq!(g[0], 1.0);
    }
}
