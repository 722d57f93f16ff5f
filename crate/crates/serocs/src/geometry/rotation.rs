//! Nearest-rotation projection via the singular value decomposition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Project a square matrix onto SO(D): returns `U V^T` from the SVD of
/// `M`, with the column of `U` paired to the smallest singular value
/// negated when the product has determinant -1. Errors on rank-deficient
/// input (smallest singular value <= 1e-12).
pub fn project_to_rotation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if d != m.ncols() || !(d == 2 || d == 3) {
        return Err(Error::input("expected a square 2x2 or 3x3 matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite matrix entry"));
    }
    let svd = m.clone().svd(true, true);
    let sigma: &DVector<f64> = &svd.singular_values;
    let mut min_idx = 0;
    for i in 0..d {
        if sigma[i] < sigma[min_idx] {
            min_idx = i;
        }
    }
    if sigma[min_idx] <= 1e-12 {
        return Err(Error::degenerate(format!(
            "matrix is rank deficient (sigma_min = {:.3e})",
            sigma[min_idx]
        )));
    }
    let mut u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let r = &u * &v_t;
    if r.determinant() < 0.0 {
        for i in 0..d {
            u[(i, min_idx)] = -u[(i, min_idx)];
        }
        Ok(u * v_t)
    } else {
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rot2(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn identity_and_scaling() {
        let i = DMatrix::identity(2, 2);
        let r = project_to_rotation(&i).unwrap();
        assert_abs_diff_eq!((r - DMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-12);

        let base = rot2(0.7);
        let r = project_to_rotation(&(2.0 * &base)).unwrap();
        assert_abs_diff_eq!((r - base).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn orthonormal_and_optimal_in_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..25 {
            let m: DMatrix<f64> = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
            if m.determinant().abs() < 1e-3 {
                continue;
            }
            let r = project_to_rotation(&m).unwrap();
            assert!(((&r.transpose() * &r) - DMatrix::identity(2, 2)).norm() < 1e-10);
            assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-10);

            // Grid-search oracle over the rotation angle at 1e-4 resolution.
            let cost = |q: &DMatrix<f64>| (&m - q).norm_squared();
            let ours = cost(&r);
            let mut best = f64::INFINITY;
            let steps = 62_832; // 2*pi / 1e-4
            for k in 0..steps {
                let theta = k as f64 * 1e-4;
                best = best.min(cost(&rot2(theta)));
            }
            assert!(ours <= best + 1e-6);
        }
    }

    #[test]
    fn reflection_corrected() {
        // A reflection matrix: nearest rotation must still have det +1.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let r = project_to_rotation(&m).unwrap();
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(project_to_rotation(&m).is_err());
    }
}
