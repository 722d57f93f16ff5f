//! Non-rigid point-set registration by coherent point drift, similarity
//! based target selection, and grasp-pose transfer.
//!
//! Source points act as Gaussian mixture centroids displaced by a smooth
//! radial-basis field; an EM loop alternates soft correspondence with
//! closed-form kernel-weight and variance updates. Converged transforms
//! warp arbitrary points, expose an analytic Jacobian, and carry grasp
//! poses from a demonstrated object onto a deformed target.

mod cpd;
mod grasp;
mod sampling;
mod similarity;

pub use cpd::{
    apply_transform, cpd_e_step, cpd_m_step, cpd_register, gaussian_gram, transform_gradient,
    CpdParams, NonRigidTransform,
};
pub use grasp::{transfer_grasp, GraspPose};
pub use sampling::{euclidean_cluster, voxel_downsample};
pub use similarity::{select_target, similarity};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An ordered set of D-dimensional points with a text label. Points are
/// rows of an N x D matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
    label: String,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::input("point cloud must be nonempty"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("point cloud has non-finite coordinates"));
        }
        Ok(PointCloud {
            points,
            label: label.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::input("point cloud must be nonempty"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::input("inconsistent point dimensions"));
        }
        let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        PointCloud::new(m, label)
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}
