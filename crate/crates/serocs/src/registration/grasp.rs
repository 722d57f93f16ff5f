//! Grasp poses and their transfer through a fitted displacement field.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::project_to_rotation;

use super::{apply_transform, transform_gradient, NonRigidTransform};

const SO_TOL: f64 = 1e-9;

/// A grasp: center point and orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspPose {
    pub t: DVector<f64>,
    pub r: DMatrix<f64>,
}

impl GraspPose {
    pub fn new(t: DVector<f64>, r: DMatrix<f64>) -> Result<Self> {
        let d = t.len();
        if r.nrows() != d || r.ncols() != d {
            return Err(Error::input("rotation size does not match grasp center"));
        }
        if t.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite grasp pose"));
        }
        let gram = r.transpose() * &r;
        if (gram - DMatrix::identity(d, d)).amax() > SO_TOL {
            return Err(Error::input("grasp orientation is not orthonormal"));
        }
        if r.determinant() < 0.0 {
            return Err(Error::input("grasp orientation is a reflection"));
        }
        Ok(GraspPose { t, r })
    }

    pub fn dim(&self) -> usize {
        self.t.len()
    }
}

/// Carry a grasp through the displacement field: the center maps through
/// the field itself, the orientation through the nearest rotation to
/// `J R` where `J` is the field Jacobian at the center.
pub fn transfer_grasp(tf: &NonRigidTransform, g: &GraspPose) -> Result<GraspPose> {
    if g.dim() != tf.dim() {
        return Err(Error::input("grasp dimension does not match transform"));
    }
    let d = g.dim();
    let tm = DMatrix::from_fn(1, d, |_, j| g.t[j]);
    let mapped = apply_transform(tf, &tm)?;
    let t_new = DVector::from_fn(d, |i, _| mapped[(0, i)]);
    let jac = transform_gradient(tf, &g.t)?;
    let r_new = project_to_rotation(&(jac * &g.r))?;
    GraspPose::new(t_new, r_new)
}
