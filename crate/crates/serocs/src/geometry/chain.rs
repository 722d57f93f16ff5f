//! Planar kinematic chain, robot state, and separation queries.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::shape::closest_on_segment;

/// World-frame capsule produced by forward kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct CapsuleSeg {
    pub start: DVector<f64>,
    pub end: DVector<f64>,
    pub radius: f64,
}

/// Spherical obstacle used for separation queries (human head analog).
#[derive(Debug, Clone, PartialEq)]
pub struct SphereObstacle {
    pub center: DVector<f64>,
    pub radius: f64,
}

/// Configurable planar chain. An empty link list models a point robot
/// whose configuration is its planar position.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    link_lengths: Vec<f64>,
    base: DVector<f64>,
    link_radius: f64,
}

/// Robot state: joint positions and velocities (positions in meters for
/// the point robot, radians for chains).
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
}

impl RobotState {
    pub fn new(q: DVector<f64>, dq: DVector<f64>) -> Result<Self> {
        if q.len() != dq.len() {
            return Err(Error::input("q and dq dimensions differ"));
        }
        if q.iter().chain(dq.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite robot state"));
        }
        Ok(RobotState { q, dq })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Which point on the robot the safety constraint watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalPoint {
    EndEffector,
    /// Joint index (0 = base joint, n = end effector).
    Joint(usize),
}

/// Position-level kinematics of a critical point, with the terms needed
/// for analytic safety-index partial derivatives.
#[derive(Debug, Clone)]
pub struct PointKinematics {
    /// World position (2D).
    pub position: DVector<f64>,
    /// Jacobian dp/dq (2 x n).
    pub jacobian: DMatrix<f64>,
    /// World velocity J(q) dq.
    pub velocity: DVector<f64>,
    /// d(J dq)/dq (2 x n); zero for the point robot.
    pub velocity_jacobian: DMatrix<f64>,
}

impl KinematicChain {
    pub fn new(link_lengths: Vec<f64>, base: DVector<f64>, link_radius: f64) -> Result<Self> {
        if base.len() != 2 {
            return Err(Error::input("chain base must be planar"));
        }
        if link_lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::input("link lengths must be positive"));
        }
        if !(link_radius >= 0.0) || !link_radius.is_finite() {
            return Err(Error::input("link radius must be >= 0"));
        }
        Ok(KinematicChain {
            link_lengths,
            base,
            link_radius,
        })
    }

    /// Point robot at the origin with a given collision radius.
    pub fn point_robot(radius: f64) -> Self {
        KinematicChain {
            link_lengths: Vec::new(),
            base: DVector::zeros(2),
            link_radius: radius,
        }
    }

    pub fn is_point_robot(&self) -> bool {
        self.link_lengths.is_empty()
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn link_radius(&self) -> f64 {
        self.link_radius
    }

    /// Dimension of the configuration vector q.
    pub fn config_dim(&self) -> usize {
        if self.is_point_robot() {
            2
        } else {
            self.link_lengths.len()
        }
    }

    fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.config_dim() {
            return Err(Error::input(format!(
                "configuration has dimension {}, chain expects {}",
                q.len(),
                self.config_dim()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite configuration"));
        }
        Ok(())
    }

    /// Joint positions including the base: n+1 points (or just q for the
    /// point robot).
    pub fn joint_positions(&self, q: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        self.check_q(q)?;
        if self.is_point_robot() {
            return Ok(vec![q.clone()]);
        }
        let mut pts = Vec::with_capacity(self.link_lengths.len() + 1);
        let mut p = self.base.clone();
        pts.push(p.clone());
        let mut angle = 0.0;
        for (i, len) in self.link_lengths.iter().enumerate() {
            angle += q[i];
            p = DVector::from_vec(vec![p[0] + len * angle.cos(), p[1] + len * angle.sin()]);
            pts.push(p.clone());
        }
        Ok(pts)
    }

    /// World-frame capsules for each link; the point robot yields one
    /// zero-length capsule at q.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Result<Vec<CapsuleSeg>> {
        let pts = self.joint_positions(q)?;
        if self.is_point_robot() {
            return Ok(vec![CapsuleSeg {
                start: pts[0].clone(),
                end: pts[0].clone(),
                radius: self.link_radius,
            }]);
        }
        Ok(pts
            .windows(2)
            .map(|w| CapsuleSeg {
                start: w[0].clone(),
                end: w[1].clone(),
                radius: self.link_radius,
            })
            .collect())
    }

    pub fn end_effector(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.joint_positions(q)?.last().unwrap().clone())
    }

    /// Kinematics of a critical point with all analytic derivative terms.
    pub fn point_kinematics(
        &self,
        state: &RobotState,
        which: CriticalPoint,
    ) -> Result<PointKinematics> {
        self.check_q(&state.q)?;
        if state.dq.len() != state.q.len() {
            return Err(Error::input("state q/dq mismatch"));
        }
        let n = self.config_dim();
        if self.is_point_robot() {
            return Ok(PointKinematics {
                position: state.q.clone(),
                jacobian: DMatrix::identity(2, 2),
                velocity: state.dq.clone(),
                velocity_jacobian: DMatrix::zeros(2, 2),
            });
        }
        let links = self.link_lengths.len();
        let upto = match which {
            CriticalPoint::EndEffector => links,
            CriticalPoint::Joint(k) => {
                if k > links {
                    return Err(Error::input("critical joint index out of range"));
                }
                k
            }
        };
        // Cumulative angles and rates.
        let mut cum_angle = vec![0.0; links];
        let mut cum_rate = vec![0.0; links];
        let mut a = 0.0;
        let mut r = 0.0;
        for i in 0..links {
            a += state.q[i];
            r += state.dq[i];
            cum_angle[i] = a;
            cum_rate[i] = r;
        }
        let mut position = self.base.clone();
        let mut velocity = DVector::zeros(2);
        for i in 0..upto {
            let l = self.link_lengths[i];
            position[0] += l * cum_angle[i].cos();
            position[1] += l * cum_angle[i].sin();
            velocity[0] += -l * cum_rate[i] * cum_angle[i].sin();
            velocity[1] += l * cum_rate[i] * cum_angle[i].cos();
        }
        let mut jacobian = DMatrix::zeros(2, n);
        let mut velocity_jacobian = DMatrix::zeros(2, n);
        for j in 0..n {
            for i in j..upto {
                let l = self.link_lengths[i];
                jacobian[(0, j)] += -l * cum_angle[i].sin();
                jacobian[(1, j)] += l * cum_angle[i].cos();
                velocity_jacobian[(0, j)] += -l * cum_rate[i] * cum_angle[i].cos();
                velocity_jacobian[(1, j)] += -l * cum_rate[i] * cum_angle[i].sin();
            }
        }
        Ok(PointKinematics {
            position,
            jacobian,
            velocity,
            velocity_jacobian,
        })
    }
}

/// Result of a minimum-separation query.
#[derive(Debug, Clone)]
pub struct Separation {
    /// Surface-to-surface distance; negative on penetration.
    pub distance: f64,
    pub robot_index: usize,
    pub human_index: usize,
    /// Witness point on the robot surface.
    pub witness_robot: DVector<f64>,
    /// Witness point on the human surface.
    pub witness_human: DVector<f64>,
    /// True when the witness direction was tie-broken (axis through the
    /// capsule axis).
    pub degenerate: bool,
}

/// Minimum separation between robot capsules and human spheres, with
/// the closest pair and witness points.
pub fn min_separation(
    robot: &[CapsuleSeg],
    human: &[SphereObstacle],
) -> Result<Separation> {
    if robot.is_empty() || human.is_empty() {
        return Err(Error::input("min_separation needs nonempty shape lists"));
    }
    let mut best: Option<Separation> = None;
    for (i, cap) in robot.iter().enumerate() {
        for (j, sph) in human.iter().enumerate() {
            if cap.start.len() != sph.center.len() {
                return Err(Error::input("mixed dimensions in separation query"));
            }
            let (s, _) = closest_on_segment(&sph.center, &cap.start, &cap.end);
            let axis = &sph.center - &s;
            let n = axis.norm();
            let (dir, degenerate) = if n < 1e-14 {
                let mut e = DVector::zeros(s.len());
                e[0] = 1.0;
                (e, true)
            } else {
                (axis / n, false)
            };
            let distance = n - cap.radius - sph.radius;
            let cand = Separation {
                distance,
                robot_index: i,
                human_index: j,
                witness_robot: &s + cap.radius * &dir,
                witness_human: &sph.center - sph.radius * &dir,
                degenerate,
            };
            if best.as_ref().map_or(true, |b| cand.distance < b.distance) {
                best = Some(cand);
            }
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn one_link_at_zero() {
        let chain = KinematicChain::new(vec![1.0], v2(0.0, 0.0), 0.05).unwrap();
        let caps = chain.forward_kinematics(&DVector::from_vec(vec![0.0])).unwrap();
        assert_eq!(caps.len(), 1);
        assert_abs_diff_eq!(caps[0].start[0], 0.0);
        assert_abs_diff_eq!(caps[0].end[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(caps[0].end[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_link_elbow() {
        let chain = KinematicChain::new(vec![1.0, 1.0], v2(0.0, 0.0), 0.0).unwrap();
        let q = DVector::from_vec(vec![PI / 2.0, -PI / 2.0]);
        let pts = chain.joint_positions(&q).unwrap();
        assert_abs_diff_eq!(pts[1][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pts[1][1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pts[2][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pts[2][1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_homogeneous_matrix_oracle() {
        // Independent oracle: chain of 3x3 homogeneous transforms.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let lengths: Vec<f64> = (0..4).map(|_| rng.random_range(0.2..1.5)).collect();
            let base = v2(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let chain = KinematicChain::new(lengths.clone(), base.clone(), 0.0).unwrap();
            let q = DVector::from_fn(4, |_, _| rng.random_range(-PI..PI));

            let mut t = Matrix3::new(1.0, 0.0, base[0], 0.0, 1.0, base[1], 0.0, 0.0, 1.0);
            for i in 0..4 {
                let (s, c) = q[i].sin_cos();
                let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
                let trans = Matrix3::new(1.0, 0.0, lengths[i], 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
                t = t * rot * trans;
            }
            let ee = chain.end_effector(&q).unwrap();
            assert_abs_diff_eq!(ee[0], t[(0, 2)], epsilon = 1e-12);
            assert_abs_diff_eq!(ee[1], t[(1, 2)], epsilon = 1e-12);

            // Reach bound.
            let total: f64 = lengths.iter().sum();
            assert!((ee.clone() - base.clone()).norm() <= total + 1e-12);
        }
    }

    #[test]
    fn dimension_checks() {
        let chain = KinematicChain::new(vec![1.0, 1.0], v2(0.0, 0.0), 0.0).unwrap();
        assert!(chain.forward_kinematics(&DVector::from_vec(vec![0.0])).is_err());
        let point = KinematicChain::point_robot(0.0);
        assert!(point.forward_kinematics(&DVector::from_vec(vec![0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn point_robot_separation() {
        let caps = vec![CapsuleSeg {
            start: v2(0.0, 0.0),
            end: v2(0.0, 0.0),
            radius: 0.0,
        }];
        let spheres = vec![SphereObstacle {
            center: v2(1.0, 0.0),
            radius: 0.2,
        }];
        let sep = min_separation(&caps, &spheres).unwrap();
        assert_abs_diff_eq!(sep.distance, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(sep.witness_human[0], 0.8, epsilon = 1e-15);

        // Penetration has negative sign.
        let spheres = vec![SphereObstacle {
            center: v2(0.1, 0.0),
            radius: 0.2,
        }];
        assert!(min_separation(&caps, &spheres).unwrap().distance < 0.0);
    }

    #[test]
    fn separation_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let caps: Vec<CapsuleSeg> = (0..2)
                .map(|_| CapsuleSeg {
                    start: v2(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    end: v2(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    radius: rng.random_range(0.01..0.2),
                })
                .collect();
            let spheres: Vec<SphereObstacle> = (0..2)
                .map(|_| SphereObstacle {
                    center: v2(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    radius: rng.random_range(0.01..0.3),
                })
                .collect();
            let sep = min_separation(&caps, &spheres).unwrap();

            // Oracle: sample 1e4 points along each capsule axis.
            let mut best = f64::INFINITY;
            for cap in &caps {
                for sph in &spheres {
                    for k in 0..10_000 {
                        let t = k as f64 / 9999.0;
                        let p = &cap.start + t * (&cap.end - &cap.start);
                        let d = (&sph.center - p).norm() - cap.radius - sph.radius;
                        best = best.min(d);
                    }
                }
            }
            assert_abs_diff_eq!(sep.distance, best, epsilon = 1e-6);
        }
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(min_separation(&[], &[]).is_err());
    }

    #[test]
    fn point_kinematics_chain_matches_fd() {
        let chain = KinematicChain::new(vec![0.8, 0.6, 0.4], v2(0.1, -0.2), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = 1e-7;
        for _ in 0..20 {
            let q = DVector::from_fn(3, |_, _| rng.random_range(-PI..PI));
            let dq = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let state = RobotState::new(q.clone(), dq.clone()).unwrap();
            let pk = chain
                .point_kinematics(&state, CriticalPoint::EndEffector)
                .unwrap();
            assert_abs_diff_eq!(
                (pk.position.clone() - chain.end_effector(&q).unwrap()).norm(),
                0.0,
                epsilon = 1e-14
            );
            for j in 0..3 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[j] += h;
                qm[j] -= h;
                let fp = chain.end_effector(&qp).unwrap();
                let fm = chain.end_effector(&qm).unwrap();
                for c in 0..2 {
                    let fd = (fp[c] - fm[c]) / (2.0 * h);
                    assert_abs_diff_eq!(pk.jacobian[(c, j)], fd, epsilon = 1e-5);
                }
                // velocity_jacobian column j = d(J dq)/dq_j
                let sp = chain
                    .point_kinematics(&RobotState::new(qp, dq.clone()).unwrap(), CriticalPoint::EndEffector)
                    .unwrap();
                let sm = chain
                    .point_kinematics(&RobotState::new(qm, dq.clone()).unwrap(), CriticalPoint::EndEffector)
                    .unwrap();
                for c in 0..2 {
                    let fd = (sp.velocity[c] - sm.velocity[c]) / (2.0 * h);
                    assert_abs_diff_eq!(pk.velocity_jacobian[(c, j)], fd, epsilon = 1e-5);
                }
            }
        }
    }
}
